#include "natlab/vocab.hpp"

#include <fstream>
#include <sstream>

#include "natlab/common.hpp"

namespace natlab {

namespace {
const char* kReserved[NUM_RESERVED] = {"[PAD]", "[MASK]", "[LEN]", "[UNK]", "[BOS]", "[EOS]"};
}

Vocab::Vocab() {
  tokens_.reserve(NUM_RESERVED);
  for (int32_t i = 0; i < NUM_RESERVED; ++i) {
    tokens_.emplace_back(kReserved[i]);
    ids_[kReserved[i]] = i;
  }
}

Vocab Vocab::from_corpus_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) {
    check(!t.empty(), "vocabulary tokens must be non-empty");
    check(!v.ids_.count(t), "duplicate vocabulary token '", t, "'");
    v.ids_[t] = static_cast<int32_t>(v.tokens_.size());
    v.tokens_.push_back(t);
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open vocabulary file '", path, "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return from_corpus_tokens(tokens);
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "cannot write vocabulary file '", path, "'");
  for (size_t i = NUM_RESERVED; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocab Vocab::build(const std::vector<std::string>& file_paths) {
  Vocab v;
  for (const auto& path : file_paths) {
    std::ifstream in(path);
    check(in.good(), "cannot open corpus file '", path, "'");
    std::string line;
    while (std::getline(in, line)) {
      for (const auto& tok : tokenize(line)) {
        if (!v.ids_.count(tok)) {
          v.ids_[tok] = static_cast<int32_t>(v.tokens_.size());
          v.tokens_.push_back(tok);
        }
      }
    }
  }
  return v;
}

int32_t Vocab::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? UNK_ID : it->second;
}

const std::string& Vocab::token_of(int32_t id) const {
  check(id >= 0 && id < size(), "token id ", id, " out of range [0, ", size(), ")");
  return tokens_[static_cast<size_t>(id)];
}

std::vector<std::string> Vocab::corpus_tokens() const {
  return {tokens_.begin() + NUM_RESERVED, tokens_.end()};
}

std::vector<int32_t> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<int32_t>& ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int32_t id : ids) tokens.push_back(token_of(id));
  return tokens;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) tokens.push_back(tok);
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace natlab
