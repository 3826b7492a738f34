#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace natlab {

// Reserved vocabulary ids. Corpus tokens start at NUM_RESERVED and masking
// never produces a reserved id at a real token position.
constexpr int32_t PAD_ID = 0;
constexpr int32_t MASK_ID = 1;
constexpr int32_t LEN_ID = 2;
constexpr int32_t UNK_ID = 3;
constexpr int32_t BOS_ID = 4;
constexpr int32_t EOS_ID = 5;
constexpr int32_t NUM_RESERVED = 6;

// Token <-> id bijection over reserved symbols plus corpus tokens.
class Vocab {
public:
  Vocab();

  static Vocab from_corpus_tokens(const std::vector<std::string>& tokens);
  // Vocabulary file: one corpus token per line; id = line number - 1 + NUM_RESERVED.
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  // Scans whitespace-tokenized files, collecting tokens in first-occurrence order.
  static Vocab build(const std::vector<std::string>& file_paths);

  int32_t id_of(const std::string& token) const;  // UNK_ID when unknown
  const std::string& token_of(int32_t id) const;
  bool is_reserved(int32_t id) const { return id >= 0 && id < NUM_RESERVED; }

  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
  std::vector<std::string> corpus_tokens() const;  // without the reserved block

  std::vector<int32_t> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int32_t>& ids) const;

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> ids_;
};

std::vector<std::string> tokenize(const std::string& line);
std::string detokenize(const std::vector<std::string>& tokens);

}  // namespace natlab
