#pragma once

// Interface between decoders and beam search.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sbi/data.hpp"

namespace sbi::search {

using data::TokenId;

enum class Direction : std::uint8_t { kL2R = 0, kR2L = 1 };

inline Direction opposite(Direction d) { return d == Direction::kL2R ? Direction::kR2L : Direction::kL2R; }
inline TokenId direction_tag(Direction d) { return d == Direction::kL2R ? data::kL2R : data::kR2L; }
inline const char* direction_name(Direction d) { return d == Direction::kL2R ? "l2r" : "r2l"; }

/// Decoder state after consuming every token of a hypothesis. Opaque to the search.
using Cache = std::shared_ptr<const void>;

struct Hypothesis {
  Direction direction = Direction::kL2R;
  /// Starts with the direction tag; a finished hypothesis ends with </s>.
  std::vector<TokenId> tokens;
  double score = 0.0;      // sum of token log-probabilities
  double penalized = 0.0;  // score under the length penalty
  bool finished = false;
  /// State after consuming tokens[0 .. size-2]; the last token is consumed by the next step.
  Cache cache;

  /// Generated tokens, tag excluded, </s> included.
  std::size_t generated() const { return tokens.empty() ? 0 : tokens.size() - 1; }
};

struct StepOutput {
  std::vector<double> log_probs;  // one per vocabulary entry
  Cache cache;                    // state after consuming hyp.tokens.back()
};

class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual std::size_t vocab_size() const = 0;
  /// State of a hypothesis holding only the direction tag.
  virtual Cache start(Direction direction) = 0;
  /// Next-token distributions. `opposite[r]` is the paired hypothesis of the
  /// other direction, or nullptr for an empty (zero) future context.
  virtual std::vector<StepOutput> step(std::span<const Hypothesis* const> hyps,
                                       std::span<const Hypothesis* const> opposite) = 0;

  /// Total hypotheses scored so far.
  std::size_t evaluations() const { return evaluations_; }

 protected:
  void count_evaluations(std::size_t n) { evaluations_ += n; }

 private:
  std::size_t evaluations_ = 0;
};

}  // namespace sbi::search
