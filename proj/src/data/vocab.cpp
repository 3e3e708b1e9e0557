#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sbi/data.hpp"

namespace sbi::data {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kTokens = {"<pad>", "<s>", "</s>", "<unk>", "<l2r>", "<r2l>"};
  return kTokens;
}

Vocab::Vocab() {
  for (const auto& t : reserved_tokens()) add(t);
}

TokenId Vocab::add(std::string_view token) {
  std::string key(token);
  if (auto it = ids_.find(key); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(key);
  ids_.emplace(std::move(key), id);
  return id;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw std::runtime_error("failed writing vocabulary file " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocabulary file " + path.string());
  Vocab v;
  v.tokens_.clear();
  v.ids_.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.find_first_of(" \t") != std::string::npos)
      throw ParseError(path.string(), lineno, "vocabulary entries must be single non-empty tokens");
    if (v.contains(line)) throw ParseError(path.string(), lineno, "duplicate vocabulary entry '" + line + "'");
    v.add(line);
  }
  const auto& reserved = reserved_tokens();
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (i >= v.tokens_.size() || v.tokens_[i] != reserved[i])
      throw ParseError(path.string(), i + 1, "expected reserved token " + reserved[i]);
  }
  return v;
}

Vocab build_vocab(const TextCorpus& corpus) {
  std::set<std::string> seen;
  for (const auto& ex : corpus) {
    seen.insert(ex.source.begin(), ex.source.end());
    seen.insert(ex.target.begin(), ex.target.end());
  }
  Vocab v;
  for (const auto& t : seen) v.add(t);
  return v;
}

std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<TokenId> encode_tokens(std::span<const std::string> tokens, const Vocab& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    const TokenId id = vocab.id(t);
    ids.push_back(is_reserved(id) ? kUnk : id);
  }
  return ids;
}

std::vector<TokenId> encode(std::string_view line, const Vocab& vocab) {
  const auto tokens = split_tokens(line);
  return encode_tokens(tokens, vocab);
}

std::string decode(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

TrainingTriple make_triple(const TextExample& example, const Vocab& vocab) {
  TrainingTriple t;
  t.source = encode_tokens(example.source, vocab);
  t.forward = encode_tokens(example.target, vocab);
  t.backward.assign(t.forward.rbegin(), t.forward.rend());
  return t;
}

std::vector<TrainingTriple> make_triples(const TextCorpus& corpus, const Vocab& vocab) {
  std::vector<TrainingTriple> out;
  out.reserve(corpus.size());
  for (const auto& ex : corpus) out.push_back(make_triple(ex, vocab));
  return out;
}

}  // namespace sbi::data
