#include "sbi/table_scorer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sbi::search {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_tokens(std::uint64_t h, std::span<const TokenId> tokens) {
  h = mix(h ^ tokens.size());
  for (auto t : tokens) h = mix(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)));
  return h;
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace

TableScorer::TableScorer(std::size_t vocab_size, std::vector<TokenId> allowed, std::uint64_t seed,
                         double opposite_weight)
    : vocab_size_(vocab_size), allowed_(std::move(allowed)), seed_(seed), opposite_weight_(opposite_weight) {
  if (allowed_.empty()) throw std::invalid_argument("table scorer needs at least one allowed token");
  for (auto t : allowed_)
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size_)
      throw std::invalid_argument("allowed token outside the vocabulary");
  std::sort(allowed_.begin(), allowed_.end());
  allowed_.erase(std::unique(allowed_.begin(), allowed_.end()), allowed_.end());
}

Cache TableScorer::start(Direction) { return nullptr; }

std::vector<TokenId> TableScorer::visible(std::span<const TokenId> own, const Hypothesis* opposite) {
  if (opposite == nullptr || own.empty()) return {};
  const std::size_t n = std::min(own.size() - 1, opposite->tokens.size());
  return {opposite->tokens.begin(), opposite->tokens.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::vector<double> TableScorer::distribution(Direction direction, std::span<const TokenId> own,
                                              std::span<const TokenId> visible_opposite) const {
  const std::uint64_t base = mix(seed_ ^ (static_cast<std::uint64_t>(direction) + 1) * 0x51ed27ULL);
  const std::uint64_t h_own = hash_tokens(base, own);
  const std::uint64_t h_opp = hash_tokens(mix(base ^ 0xabcdefULL), visible_opposite) ^ mix(own.size());
  std::vector<double> logits;
  logits.reserve(allowed_.size());
  for (auto t : allowed_) {
    const auto tt = static_cast<std::uint64_t>(t);
    double v = 4.0 * unit(mix(h_own ^ (tt * 0x2545f4914f6cdd1dULL)));
    if (!visible_opposite.empty()) v += opposite_weight_ * 4.0 * (unit(mix(h_opp ^ (tt * 0x9fb21c651e98df25ULL))) - 0.5);
    logits.push_back(v);
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double acc = 0.0;
  for (double v : logits) acc += std::exp(v - peak);
  const double lse = peak + std::log(acc);
  std::vector<double> out(vocab_size_, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < allowed_.size(); ++k) out[static_cast<std::size_t>(allowed_[k])] = logits[k] - lse;
  return out;
}

std::vector<StepOutput> TableScorer::step(std::span<const Hypothesis* const> hyps,
                                          std::span<const Hypothesis* const> opposite) {
  if (hyps.size() != opposite.size()) throw std::invalid_argument("hypothesis and opposite spans differ in size");
  std::vector<StepOutput> out;
  out.reserve(hyps.size());
  for (std::size_t r = 0; r < hyps.size(); ++r) {
    const auto& own = hyps[r]->tokens;
    const auto vis = visible(own, opposite[r]);
    out.push_back({distribution(hyps[r]->direction, own, vis), nullptr});
  }
  count_evaluations(hyps.size());
  return out;
}

}  // namespace sbi::search
