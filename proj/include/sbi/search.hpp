#pragma once

// Beam search: synchronous bidirectional and plain unidirectional.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "sbi/scorer.hpp"

namespace sbi::search {

struct BeamConfig {
  std::size_t beam = 4;  // K; each direction keeps K/2 in synchronous search
  std::size_t max_len = 50;
  double alpha = 0.6;
  bool forward = true;   // run the left-to-right half
  bool backward = true;  // run the right-to-left half
  /// Feed each half the other half's previous-step hypotheses.
  bool interact = true;
};

/// A scorer returned a distribution that is not normalized.
class ScorerError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// logprob / ((5 + length) / 6)^alpha
double length_penalized_score(double logprob, std::size_t length, double alpha);

/// Total order used everywhere: higher penalized score, then shorter, then
/// lexicographically lower tokens, then forward before backward.
bool ranks_before(const Hypothesis& a, const Hypothesis& b);

/// Opposite hypothesis paired with the own hypothesis at `rank`, or nullptr.
const Hypothesis* paired_opposite(std::size_t rank, std::span<const Hypothesis> opposite);

/// Log-probability of the last token of `cand`, whose parent must be in `own`.
double sb_infer(Scorer& scorer, const Hypothesis& cand, std::span<const Hypothesis> own,
                std::span<const Hypothesis> opposite);

/// Extends every hypothesis in `own` by every allowed token and keeps the best `keep`.
std::vector<Hypothesis> expand_hypo(Scorer& scorer, std::span<const Hypothesis> own,
                                    std::span<const Hypothesis> opposite, std::size_t keep, double alpha);

/// Moves finished candidates into `complete` and the rest into `partial`;
/// stops once `complete` holds `capacity` hypotheses.
void update_hypo(std::span<const Hypothesis> temporary, std::vector<Hypothesis>& partial,
                 std::vector<Hypothesis>& complete, std::size_t capacity);

struct SearchResult {
  std::vector<TokenId> tokens;  // output in reading order, no tags or </s>
  Hypothesis best;
  std::vector<std::size_t> evaluations_per_step;
  std::size_t steps = 0;
};

/// Both directions in one beam of size K, K/2 per direction.
SearchResult sync_bidi_beam_search(Scorer& scorer, const BeamConfig& config);

/// Ordinary beam search with beam K in one direction; R2L output is reversed.
SearchResult unidirectional_beam_search(Scorer& scorer, Direction direction, const BeamConfig& config);

/// Output tokens of a finished or partial hypothesis in reading order.
std::vector<TokenId> resolve_output(const Hypothesis& h);

}  // namespace sbi::search
