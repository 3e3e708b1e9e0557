#pragma once

// Stacked LSTM encoder-decoder with source attention and attention over the
// opposite direction's top-layer decoder states.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "sbi/model.hpp"

namespace sbi::models {

struct LstmConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  double dropout = 0.2;
  /// Give the right-to-left stream its own decoder weights.
  bool separate_directions = false;
  std::uint64_t seed = 1;
};

template <class T>
struct LstmCell {
  ad::Tensor<T> wx;  // [in, 4d]
  ad::Tensor<T> wh;  // [d, 4d]
  ad::Tensor<T> b;   // [4d], gate order i, f, g, o
};

/// One step of an LSTM cell on [B, in] inputs; returns {h, c}.
template <class T>
std::pair<ad::Tensor<T>, ad::Tensor<T>> lstm_cell(const LstmCell<T>& cell, const ad::Tensor<T>& x,
                                                  const ad::Tensor<T>& h, const ad::Tensor<T>& c);

template <class T>
struct AdditiveWeights {
  ad::Tensor<T> w;  // query side [d, d]
  ad::Tensor<T> u;  // key side [d, d]
  ad::Tensor<T> v;  // score [d]
};

/// Context over encoder states: e_j = v^T tanh(W z + U h_j), alpha = softmax(e).
/// z: [B, d], states: [B, m, d], mask: B*m.
template <class T>
ad::Tensor<T> source_attention(const ad::Tensor<T>& z, const ad::Tensor<T>& states, std::span<const std::uint8_t> mask,
                               const AdditiveWeights<T>& w, std::vector<T>* weights_out = nullptr);

/// Same form over the opposite direction's top states [B, M, d]; rows with no
/// visible state yield a zero vector.
template <class T>
ad::Tensor<T> cross_direction_attention(const ad::Tensor<T>& z, const ad::Tensor<T>& opposite_states,
                                        std::span<const std::uint8_t> visible, const AdditiveWeights<T>& w,
                                        std::vector<T>* weights_out = nullptr);

/// Decoder state of one hypothesis after `length` consumed positions.
template <class T>
struct LstmCache {
  std::size_t length = 0;
  std::vector<std::vector<T>> h, c;  // per layer, d values
  std::vector<T> feed;               // previous attentional output z_{i-1}
  std::vector<T> top;                // top-layer states z^L_0 .. z^L_{length-1}, length * d
};

template <class T>
class Lstm final : public Seq2SeqModel<T> {
 public:
  explicit Lstm(const LstmConfig& config);

  const LstmConfig& config() const { return config_; }
  std::string architecture() const override { return "lstm"; }
  std::size_t vocab_size() const override { return config_.vocab_size; }
  bool interactive() const override { return true; }

  Encoded<T> encode(std::span<const TokenId> source, std::span<const std::uint8_t> mask, std::size_t batch,
                    std::size_t length, const RunMode& mode) const override;
  ad::Tensor<T> embed(std::span<const TokenId> tokens, std::size_t batch, std::size_t length) const override;
  ad::Tensor<T> decode(const Encoded<T>& encoded, const Stream<T>& primary, const Stream<T>* context,
                       const RunMode& mode) const override;
  std::unique_ptr<search::Scorer> scorer(std::span<const TokenId> source, bool use_interaction) const override;

  struct Decoder {
    std::vector<LstmCell<T>> cells;
    std::vector<ad::Tensor<T>> ln_g, ln_b;
    AdditiveWeights<T> source_att, cross_att;
    ad::Tensor<T> wc, bc;  // [3d, d], [d]
    ad::Tensor<T> out_w, out_b;
  };

  /// Tensor form of a decoder state for a batch of rows.
  struct State {
    std::vector<ad::Tensor<T>> h, c;
    ad::Tensor<T> feed;
  };

  const Decoder& decoder(Direction d) const { return decoders_[static_cast<std::size_t>(d)]; }
  State zero_state(std::size_t batch) const;
  /// Runs the stacked layers on one input position; updates `state` and returns z^L.
  ad::Tensor<T> top_state(const Decoder& dec, const ad::Tensor<T>& embedded, State& state, const RunMode& mode) const;
  /// z = tanh(W_c [top; c; cz] + b_c); stores z as the next input feed and returns the logits.
  ad::Tensor<T> output(const Decoder& dec, const ad::Tensor<T>& top, const ad::Tensor<T>& source_context,
                       const ad::Tensor<T>& cross_context, State& state, const RunMode& mode) const;

 private:
  ad::Tensor<T> maybe_dropout(const ad::Tensor<T>& x, const RunMode& mode) const;
  LstmCell<T> make_cell(const std::string& prefix, std::size_t in, std::mt19937_64& rng);
  Decoder make_decoder(const std::string& prefix, std::mt19937_64& rng);

  LstmConfig config_;
  ad::Tensor<T> src_embedding_, tgt_embedding_;
  LstmCell<T> enc_fwd_, enc_bwd_;
  ad::Tensor<T> merge_l_, merge_r_, merge_b_, enc_ln0_g_, enc_ln0_b_;
  std::vector<LstmCell<T>> enc_cells_;  // layers above the first
  std::vector<ad::Tensor<T>> enc_ln_g_, enc_ln_b_;
  std::array<Decoder, 2> decoders_;
};

}  // namespace sbi::models
