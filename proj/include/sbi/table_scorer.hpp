#pragma once

// Deterministic pseudo-random scorer for exercising the search.

#include <cstdint>
#include <span>
#include <vector>

#include "sbi/scorer.hpp"

namespace sbi::search {

/// Log-probabilities are a pure function of (seed, direction, own tokens,
/// visible opposite tokens). Tokens outside `allowed` get probability zero.
class TableScorer final : public Scorer {
 public:
  TableScorer(std::size_t vocab_size, std::vector<TokenId> allowed, std::uint64_t seed,
              double opposite_weight = 1.0);

  std::size_t vocab_size() const override { return vocab_size_; }
  Cache start(Direction direction) override;
  std::vector<StepOutput> step(std::span<const Hypothesis* const> hyps,
                               std::span<const Hypothesis* const> opposite) override;

  /// Distribution after `own` (tag first) given the opposite tokens it may see.
  std::vector<double> distribution(Direction direction, std::span<const TokenId> own,
                                   std::span<const TokenId> visible_opposite) const;

  /// Opposite tokens visible to a step consuming own.back(): positions < own.size() - 1.
  static std::vector<TokenId> visible(std::span<const TokenId> own, const Hypothesis* opposite);

 private:
  std::size_t vocab_size_;
  std::vector<TokenId> allowed_;
  std::uint64_t seed_;
  double opposite_weight_;
};

}  // namespace sbi::search
