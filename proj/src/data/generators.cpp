#include <array>
#include <random>

#include "sbi/data.hpp"

namespace sbi::data {

namespace {

constexpr std::array<std::pair<std::string_view, std::string_view>, 4> kBrackets = {{
    {"(", ")"},
    {"[", "]"},
    {"{", "}"},
    {"<", ">"},
}};

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void check_range(std::size_t lo, std::size_t hi, std::size_t limit, const char* what) {
  if (lo == 0 || lo > hi || hi > limit)
    throw std::invalid_argument(std::string(what) + " range must satisfy 1 <= min <= max <= " + std::to_string(limit) +
                                ", got " + std::to_string(lo) + ".." + std::to_string(hi));
}

}  // namespace

TextCorpus gen_copy_task(const CopyTaskOptions& o) {
  check_range(o.min_len, o.max_len, 64, "copy task length");
  if (o.vocab_size < 8) throw std::invalid_argument("copy task needs vocab_size >= 8");
  std::mt19937_64 rng(o.seed);
  TextCorpus corpus;
  corpus.reserve(o.count);
  for (std::size_t i = 0; i < o.count; ++i) {
    TextExample ex;
    const std::size_t len = uniform(rng, o.min_len, o.max_len);
    for (std::size_t j = 0; j < len; ++j) ex.source.push_back("w" + std::to_string(uniform(rng, 0, o.vocab_size - 1)));
    ex.target = ex.source;
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

std::string_view closing_bracket(std::string_view open) {
  for (const auto& [o, c] : kBrackets)
    if (o == open) return c;
  return {};
}

TextCorpus gen_bracket_task(const BracketTaskOptions& o) {
  check_range(o.min_depth, o.max_depth, 12, "bracket depth");
  std::mt19937_64 rng(o.seed);
  TextCorpus corpus;
  corpus.reserve(o.count);
  for (std::size_t i = 0; i < o.count; ++i) {
    TextExample ex;
    const std::size_t depth = uniform(rng, o.min_depth, o.max_depth);
    std::vector<std::size_t> kinds;
    for (std::size_t d = 0; d < depth; ++d) {
      const std::size_t k = uniform(rng, 0, kBrackets.size() - 1);
      kinds.push_back(k);
      ex.source.emplace_back(kBrackets[k].first);
      if (o.noise_symbols > 0 && uniform(rng, 0, 1) == 1)
        ex.source.push_back("n" + std::to_string(uniform(rng, 0, o.noise_symbols - 1)));
    }
    for (std::size_t k : kinds) ex.target.emplace_back(kBrackets[k].first);
    for (auto it = kinds.rbegin(); it != kinds.rend(); ++it) ex.target.emplace_back(kBrackets[*it].second);
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace sbi::data
