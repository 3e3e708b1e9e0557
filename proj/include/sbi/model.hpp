#pragma once

// Common interface of the encoder-decoder models.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sbi/data.hpp"
#include "sbi/params.hpp"
#include "sbi/scorer.hpp"
#include "sbi/tensor.hpp"

namespace sbi::models {

using data::TokenId;
using search::Direction;

struct RunMode {
  bool train = false;           // enables dropout
  std::mt19937_64* rng = nullptr;  // required when train is set
};

/// Encoder output for a padded batch.
template <class T>
struct Encoded {
  ad::Tensor<T> states;  // [batch, length, d]
  std::vector<std::uint8_t> mask;  // batch * length, 1 = real token
  std::size_t batch = 0;
  std::size_t length = 0;
};

/// One teacher-forced decoder stream: the direction tag followed by the
/// tokens consumed at each position.
template <class T>
struct Stream {
  ad::Tensor<T> embedded;  // [batch, length, d] raw token embeddings
  std::vector<std::uint8_t> valid;  // batch * length
  Direction direction = Direction::kL2R;
  std::size_t batch() const { return embedded.dim(0); }
  std::size_t length() const { return embedded.dim(1); }
  /// Real positions of row b.
  std::size_t row_length(std::size_t b) const;
};

template <class T>
class Seq2SeqModel {
 public:
  virtual ~Seq2SeqModel() = default;

  virtual std::string architecture() const = 0;
  virtual std::size_t vocab_size() const = 0;
  /// False for models without the cross-direction pathway.
  virtual bool interactive() const = 0;

  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  /// source: batch * length ids padded with <pad>; mask marks real tokens.
  virtual Encoded<T> encode(std::span<const TokenId> source, std::span<const std::uint8_t> mask, std::size_t batch,
                            std::size_t length, const RunMode& mode) const = 0;

  /// Target-side embeddings [batch, length, d].
  virtual ad::Tensor<T> embed(std::span<const TokenId> tokens, std::size_t batch, std::size_t length) const = 0;

  /// Logits [batch * length, V] for every position of `primary`. Position i
  /// may read positions < i of `context` (the opposite direction); nullptr
  /// disables the cross-direction pathway.
  virtual ad::Tensor<T> decode(const Encoded<T>& encoded, const Stream<T>& primary, const Stream<T>* context,
                               const RunMode& mode) const = 0;

  /// Incremental decoder over a single source sentence. The model must outlive
  /// the scorer. With `use_interaction` false the opposite hypotheses are ignored.
  virtual std::unique_ptr<search::Scorer> scorer(std::span<const TokenId> source, bool use_interaction) const = 0;

 protected:
  ParameterSet<T> params_;
};

/// Builds a stream whose row b is [tag, tokens_b...], padded to the longest row.
template <class T>
Stream<T> make_stream(const Seq2SeqModel<T>& model, const std::vector<std::vector<TokenId>>& tokens, Direction direction);

/// Targets matching a stream built from the same tokens: [tokens_b..., </s>].
std::vector<TokenId> stream_targets(const std::vector<std::vector<TokenId>>& tokens, std::size_t length);

/// Sum of log-probabilities of `tokens` followed by </s>, decoded one step at a
/// time without interaction.
double sequence_log_prob(search::Scorer& scorer, Direction direction, std::span<const TokenId> tokens);

}  // namespace sbi::models
