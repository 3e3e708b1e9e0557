#pragma once

// Transformer encoder-decoder whose decoder layers attend to their own
// history and to the opposite direction's stream, mixed through one scalar.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "sbi/model.hpp"

namespace sbi::models {

struct TransformerConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  std::size_t layers = 2;
  double dropout = 0.1;
  /// Plain unidirectional decoder: no lambda, no cross-direction attention.
  bool baseline = false;
  bool position_encoding = true;
  bool share_embeddings = false;
  std::uint64_t seed = 1;
};

template <class T>
struct AttentionWeights {
  ad::Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

/// softmax(q k^T / sqrt(d)) v with an additive mask (B*Tq*Tk entries or
/// empty). Throws std::invalid_argument if a query row has no visible key.
template <class T>
ad::Tensor<T> scaled_dot_attention(const ad::Tensor<T>& q, const ad::Tensor<T>& k, const ad::Tensor<T>& v,
                                   std::span<const T> mask = {});

/// Projected multi-head attention of `query_in` [B,Tq,d] over `memory` [B,Tk,d].
template <class T>
ad::Tensor<T> multi_head(const ad::Tensor<T>& query_in, const ad::Tensor<T>& memory, const AttentionWeights<T>& w,
                         std::size_t heads, std::span<const T> mask = {},
                         ad::EmptyRows empty_rows = ad::EmptyRows::kError);

/// z_past + lambda * tanh(z_future).
template <class T>
ad::Tensor<T> combine_past_future(const ad::Tensor<T>& past, const ad::Tensor<T>& future, const ad::Tensor<T>& lambda);

/// Sinusoidal encoding of one position, `d` values.
std::vector<double> position_encoding(std::size_t position, std::size_t d);

/// Per-layer key/value projections of every consumed position of one stream.
template <class T>
struct TransformerCache {
  std::size_t length = 0;
  std::vector<std::vector<T>> keys;    // [layer][length * d]
  std::vector<std::vector<T>> values;  // [layer][length * d]
};

template <class T>
class Transformer final : public Seq2SeqModel<T> {
 public:
  explicit Transformer(const TransformerConfig& config);

  const TransformerConfig& config() const { return config_; }
  std::string architecture() const override { return "transformer"; }
  std::size_t vocab_size() const override { return config_.vocab_size; }
  bool interactive() const override { return !config_.baseline; }

  Encoded<T> encode(std::span<const TokenId> source, std::span<const std::uint8_t> mask, std::size_t batch,
                    std::size_t length, const RunMode& mode) const override;
  ad::Tensor<T> embed(std::span<const TokenId> tokens, std::size_t batch, std::size_t length) const override;
  ad::Tensor<T> decode(const Encoded<T>& encoded, const Stream<T>& primary, const Stream<T>* context,
                       const RunMode& mode) const override;
  std::unique_ptr<search::Scorer> scorer(std::span<const TokenId> source, bool use_interaction) const override;

  /// The mixing scalar; undefined for the baseline.
  const ad::Tensor<T>& lambda() const { return lambda_; }

  struct EncoderLayer {
    AttentionWeights<T> self;
    ad::Tensor<T> ln1_g, ln1_b, ff1_w, ff1_b, ff2_w, ff2_b, ln2_g, ln2_b;
  };
  struct DecoderLayer {
    AttentionWeights<T> self;
    ad::Tensor<T> ln1_g, ln1_b;
    AttentionWeights<T> cross;
    ad::Tensor<T> ln2_g, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b, ln3_g, ln3_b;
  };

  const std::vector<DecoderLayer>& decoder_layers() const { return decoder_; }
  /// Input to the first layer: scaled embeddings plus position encodings.
  ad::Tensor<T> layer_input(const ad::Tensor<T>& embedded, std::size_t first_position, const RunMode& mode) const;
  /// Remaining sub-layers after the self/future mixture: residual + norm,
  /// encoder-decoder attention, feed-forward.
  ad::Tensor<T> finish_layer(const DecoderLayer& layer, const ad::Tensor<T>& x, const ad::Tensor<T>& z,
                             const ad::Tensor<T>& cross_k, const ad::Tensor<T>& cross_v,
                             std::span<const T> cross_mask, const RunMode& mode) const;
  ad::Tensor<T> output_logits(const ad::Tensor<T>& x) const;

 private:
  ad::Tensor<T> maybe_dropout(const ad::Tensor<T>& x, const RunMode& mode) const;
  ad::Tensor<T> feed_forward(const ad::Tensor<T>& x, const ad::Tensor<T>& w1, const ad::Tensor<T>& b1,
                             const ad::Tensor<T>& w2, const ad::Tensor<T>& b2, const RunMode& mode) const;
  AttentionWeights<T> make_attention(const std::string& prefix, std::mt19937_64& rng);

  TransformerConfig config_;
  ad::Tensor<T> src_embedding_, tgt_embedding_, out_w_, out_b_, lambda_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
};

}  // namespace sbi::models
