#include "sbi/transformer.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace sbi::models {

using ad::Tensor;

namespace {

template <class T>
constexpr T kHidden = -std::numeric_limits<T>::infinity();

template <class T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return ad::add_bias(ad::matmul(x, w), b);
}

// Additive mask [batch, tq, tk] from a visibility predicate.
template <class T, class F>
std::vector<T> make_mask(std::size_t batch, std::size_t tq, std::size_t tk, F visible) {
  std::vector<T> m(batch * tq * tk);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < tq; ++i)
      for (std::size_t j = 0; j < tk; ++j) m[(b * tq + i) * tk + j] = visible(b, i, j) ? T(0) : kHidden<T>;
  return m;
}

template <class T>
std::vector<T> causal_mask(std::size_t batch, std::size_t len) {
  return make_mask<T>(batch, len, len, [](std::size_t, std::size_t i, std::size_t j) { return j <= i; });
}

// Query i of `self` may read positions j < i of `other` that hold real tokens.
template <class T>
std::vector<T> future_mask(const Stream<T>& self, const Stream<T>& other) {
  std::vector<std::size_t> other_len(other.batch());
  for (std::size_t b = 0; b < other.batch(); ++b) other_len[b] = other.row_length(b);
  return make_mask<T>(self.batch(), self.length(), other.length(),
                      [&](std::size_t b, std::size_t i, std::size_t j) { return j < i && j < other_len[b]; });
}

template <class T>
std::vector<T> source_mask(const Encoded<T>& enc, std::size_t tq) {
  return make_mask<T>(enc.batch, tq, enc.length,
                      [&](std::size_t b, std::size_t, std::size_t j) { return enc.mask[b * enc.length + j] != 0; });
}

}  // namespace

template <class T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::span<const T> mask) {
  return ad::attention(q, k, v, 1, mask, ad::EmptyRows::kError);
}

template <class T>
Tensor<T> multi_head(const Tensor<T>& query_in, const Tensor<T>& memory, const AttentionWeights<T>& w,
                     std::size_t heads, std::span<const T> mask, ad::EmptyRows empty_rows) {
  if (heads == 0 || w.wq.last_dim() % heads != 0)
    throw std::invalid_argument("model dimension " + std::to_string(w.wq.last_dim()) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  const auto q = project(query_in, w.wq, w.bq);
  const auto k = project(memory, w.wk, w.bk);
  const auto v = project(memory, w.wv, w.bv);
  return project(ad::attention(q, k, v, heads, mask, empty_rows), w.wo, w.bo);
}

template <class T>
Tensor<T> combine_past_future(const Tensor<T>& past, const Tensor<T>& future, const Tensor<T>& lambda) {
  return past + ad::mul_scalar(ad::tanh(future), lambda);
}

std::vector<double> position_encoding(std::size_t position, std::size_t d) {
  std::vector<double> pe(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
    const double angle = static_cast<double>(position) / rate;
    pe[i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
  }
  return pe;
}

template <class T>
AttentionWeights<T> Transformer<T>::make_attention(const std::string& prefix, std::mt19937_64& rng) {
  const std::size_t d = config_.d_model;
  auto& p = this->params_;
  AttentionWeights<T> w;
  w.wq = p.add(prefix + ".wq", {d, d}, xavier_uniform<T>(d, d, rng));
  w.bq = p.add(prefix + ".bq", {d}, std::vector<T>(d));
  w.wk = p.add(prefix + ".wk", {d, d}, xavier_uniform<T>(d, d, rng));
  w.bk = p.add(prefix + ".bk", {d}, std::vector<T>(d));
  w.wv = p.add(prefix + ".wv", {d, d}, xavier_uniform<T>(d, d, rng));
  w.bv = p.add(prefix + ".bv", {d}, std::vector<T>(d));
  w.wo = p.add(prefix + ".wo", {d, d}, xavier_uniform<T>(d, d, rng));
  w.bo = p.add(prefix + ".bo", {d}, std::vector<T>(d));
  return w;
}

template <class T>
Transformer<T>::Transformer(const TransformerConfig& config) : config_(config) {
  const std::size_t d = config.d_model, V = config.vocab_size, f = config.d_ff;
  if (V <= static_cast<std::size_t>(data::kNumReserved))
    throw std::invalid_argument("vocabulary must contain tokens beyond the reserved ones");
  if (d == 0 || config.heads == 0 || d % config.heads != 0)
    throw std::invalid_argument("d_model " + std::to_string(d) + " is not divisible by heads " +
                                std::to_string(config.heads));
  if (config.layers == 0 || f == 0) throw std::invalid_argument("layers and d_ff must be positive");

  std::mt19937_64 rng(config.seed);
  auto& p = this->params_;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  src_embedding_ = p.add("src_embedding", {V, d}, normal_values<T>(V * d, emb_std, rng));
  tgt_embedding_ = config.share_embeddings ? src_embedding_
                                           : p.add("tgt_embedding", {V, d}, normal_values<T>(V * d, emb_std, rng));
  auto ones = [&] { return std::vector<T>(d, T(1)); };
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string pre = "enc." + std::to_string(l);
    EncoderLayer e;
    e.self = make_attention(pre + ".self", rng);
    e.ln1_g = p.add(pre + ".ln1.g", {d}, ones());
    e.ln1_b = p.add(pre + ".ln1.b", {d}, std::vector<T>(d));
    e.ff1_w = p.add(pre + ".ff1.w", {d, f}, xavier_uniform<T>(d, f, rng));
    e.ff1_b = p.add(pre + ".ff1.b", {f}, std::vector<T>(f));
    e.ff2_w = p.add(pre + ".ff2.w", {f, d}, xavier_uniform<T>(f, d, rng));
    e.ff2_b = p.add(pre + ".ff2.b", {d}, std::vector<T>(d));
    e.ln2_g = p.add(pre + ".ln2.g", {d}, ones());
    e.ln2_b = p.add(pre + ".ln2.b", {d}, std::vector<T>(d));
    encoder_.push_back(e);
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string pre = "dec." + std::to_string(l);
    DecoderLayer dl;
    dl.self = make_attention(pre + ".self", rng);
    dl.ln1_g = p.add(pre + ".ln1.g", {d}, ones());
    dl.ln1_b = p.add(pre + ".ln1.b", {d}, std::vector<T>(d));
    dl.cross = make_attention(pre + ".cross", rng);
    dl.ln2_g = p.add(pre + ".ln2.g", {d}, ones());
    dl.ln2_b = p.add(pre + ".ln2.b", {d}, std::vector<T>(d));
    dl.ff1_w = p.add(pre + ".ff1.w", {d, f}, xavier_uniform<T>(d, f, rng));
    dl.ff1_b = p.add(pre + ".ff1.b", {f}, std::vector<T>(f));
    dl.ff2_w = p.add(pre + ".ff2.w", {f, d}, xavier_uniform<T>(f, d, rng));
    dl.ff2_b = p.add(pre + ".ff2.b", {d}, std::vector<T>(d));
    dl.ln3_g = p.add(pre + ".ln3.g", {d}, ones());
    dl.ln3_b = p.add(pre + ".ln3.b", {d}, std::vector<T>(d));
    decoder_.push_back(dl);
  }
  out_w_ = p.add("out.w", {d, V}, xavier_uniform<T>(d, V, rng));
  out_b_ = p.add("out.b", {V}, std::vector<T>(V));
  if (!config.baseline) lambda_ = p.add("lambda", {1}, {T(1)});
}

template <class T>
Tensor<T> Transformer<T>::maybe_dropout(const Tensor<T>& x, const RunMode& mode) const {
  if (!mode.train || config_.dropout <= 0.0) return x;
  return ad::dropout(x, config_.dropout, *mode.rng);
}

template <class T>
Tensor<T> Transformer<T>::feed_forward(const Tensor<T>& x, const Tensor<T>& w1, const Tensor<T>& b1,
                                       const Tensor<T>& w2, const Tensor<T>& b2, const RunMode& mode) const {
  return project(maybe_dropout(ad::relu(project(x, w1, b1)), mode), w2, b2);
}

template <class T>
Tensor<T> Transformer<T>::layer_input(const Tensor<T>& embedded, std::size_t first_position,
                                      const RunMode& mode) const {
  const std::size_t d = config_.d_model;
  auto x = ad::scale(embedded, static_cast<T>(std::sqrt(static_cast<double>(d))));
  if (config_.position_encoding) {
    const std::size_t batch = embedded.dim(0), len = embedded.dim(1);
    std::vector<T> pe(batch * len * d);
    for (std::size_t t = 0; t < len; ++t) {
      const auto row = position_encoding(first_position + t, d);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < d; ++i) pe[(b * len + t) * d + i] = static_cast<T>(row[i]);
    }
    x = x + Tensor<T>::from(embedded.shape(), std::move(pe));
  }
  return maybe_dropout(x, mode);
}

template <class T>
Tensor<T> Transformer<T>::embed(std::span<const TokenId> tokens, std::size_t batch, std::size_t length) const {
  return ad::gather_rows(tgt_embedding_, tokens, {batch, length});
}

template <class T>
Encoded<T> Transformer<T>::encode(std::span<const TokenId> source, std::span<const std::uint8_t> mask,
                                  std::size_t batch, std::size_t length, const RunMode& mode) const {
  if (batch == 0 || length == 0) throw std::invalid_argument("encode: empty source");
  for (std::size_t b = 0; b < batch; ++b)
    if (mask[b * length] == 0) throw std::invalid_argument("encode: empty source sequence in row " + std::to_string(b));
  Encoded<T> enc;
  enc.batch = batch;
  enc.length = length;
  enc.mask.assign(mask.begin(), mask.end());
  auto x = layer_input(ad::gather_rows(src_embedding_, source, {batch, length}), 0, mode);
  const auto self_mask = make_mask<T>(batch, length, length,
                                      [&](std::size_t b, std::size_t, std::size_t j) { return mask[b * length + j] != 0; });
  for (const auto& layer : encoder_) {
    const auto a = multi_head(x, x, layer.self, config_.heads, std::span<const T>(self_mask));
    x = ad::layer_norm(x + maybe_dropout(a, mode), layer.ln1_g, layer.ln1_b);
    const auto f = feed_forward(x, layer.ff1_w, layer.ff1_b, layer.ff2_w, layer.ff2_b, mode);
    x = ad::layer_norm(x + maybe_dropout(f, mode), layer.ln2_g, layer.ln2_b);
  }
  enc.states = x;
  return enc;
}

template <class T>
Tensor<T> Transformer<T>::finish_layer(const DecoderLayer& layer, const Tensor<T>& x, const Tensor<T>& z,
                                       const Tensor<T>& cross_k, const Tensor<T>& cross_v,
                                       std::span<const T> cross_mask, const RunMode& mode) const {
  auto x1 = ad::layer_norm(x + maybe_dropout(z, mode), layer.ln1_g, layer.ln1_b);
  const auto q = project(x1, layer.cross.wq, layer.cross.bq);
  const auto c =
      project(ad::attention(q, cross_k, cross_v, config_.heads, cross_mask, ad::EmptyRows::kError), layer.cross.wo,
              layer.cross.bo);
  auto x2 = ad::layer_norm(x1 + maybe_dropout(c, mode), layer.ln2_g, layer.ln2_b);
  const auto f = feed_forward(x2, layer.ff1_w, layer.ff1_b, layer.ff2_w, layer.ff2_b, mode);
  return ad::layer_norm(x2 + maybe_dropout(f, mode), layer.ln3_g, layer.ln3_b);
}

template <class T>
Tensor<T> Transformer<T>::output_logits(const Tensor<T>& x) const {
  return project(x, out_w_, out_b_);
}

template <class T>
Tensor<T> Transformer<T>::decode(const Encoded<T>& enc, const Stream<T>& primary, const Stream<T>* context,
                                 const RunMode& mode) const {
  const bool cross = context != nullptr && !config_.baseline;
  if (cross && context->batch() != primary.batch()) throw ad::DimensionError("decode: stream batch sizes differ");
  const std::size_t B = primary.batch(), T_p = primary.length();

  auto xp = layer_input(primary.embedded, 0, mode);
  Tensor<T> xc;
  std::vector<T> self_p = causal_mask<T>(B, T_p), src_p = source_mask(enc, T_p), fut_p, self_c, src_c, fut_c;
  if (cross) {
    xc = layer_input(context->embedded, 0, mode);
    fut_p = future_mask(primary, *context);
    self_c = causal_mask<T>(B, context->length());
    src_c = source_mask(enc, context->length());
    fut_c = future_mask(*context, primary);
  }

  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& L = decoder_[l];
    const bool last = l + 1 == decoder_.size();
    const auto ck = project(enc.states, L.cross.wk, L.cross.bk);
    const auto cv = project(enc.states, L.cross.wv, L.cross.bv);

    const auto qp = project(xp, L.self.wq, L.self.bq);
    const auto kp = project(xp, L.self.wk, L.self.bk);
    const auto vp = project(xp, L.self.wv, L.self.bv);
    auto zp = project(ad::attention(qp, kp, vp, config_.heads, std::span<const T>(self_p), ad::EmptyRows::kError),
                      L.self.wo, L.self.bo);
    if (cross) {
      const auto kc = project(xc, L.self.wk, L.self.bk);
      const auto vc = project(xc, L.self.wv, L.self.bv);
      const auto fp = ad::attention(qp, kc, vc, config_.heads, std::span<const T>(fut_p), ad::EmptyRows::kZero);
      const auto zp_new = combine_past_future(zp, ad::matmul(fp, L.self.wo), lambda_);
      if (!last) {
        const auto qc = project(xc, L.self.wq, L.self.bq);
        auto zc = project(ad::attention(qc, kc, vc, config_.heads, std::span<const T>(self_c), ad::EmptyRows::kError),
                          L.self.wo, L.self.bo);
        const auto fc = ad::attention(qc, kp, vp, config_.heads, std::span<const T>(fut_c), ad::EmptyRows::kZero);
        zc = combine_past_future(zc, ad::matmul(fc, L.self.wo), lambda_);
        xc = finish_layer(L, xc, zc, ck, cv, std::span<const T>(src_c), mode);
      }
      zp = zp_new;
    }
    xp = finish_layer(L, xp, zp, ck, cv, std::span<const T>(src_p), mode);
  }
  return ad::reshape(output_logits(xp), {B * T_p, config_.vocab_size});
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
class TransformerScorer final : public search::Scorer {
 public:
  TransformerScorer(const Transformer<T>& model, std::span<const TokenId> source, bool use_interaction)
      : model_(model), interaction_(use_interaction && model.interactive()), source_len_(source.size()) {
    ad::NoGradGuard no_grad;
    const std::vector<std::uint8_t> mask(source.size(), 1);
    const auto enc = model.encode(source, mask, 1, source.size(), RunMode{});
    for (const auto& L : model.decoder_layers()) {
      const auto k = project(enc.states, L.cross.wk, L.cross.bk);
      const auto v = project(enc.states, L.cross.wv, L.cross.bv);
      cross_k_.emplace_back(k.values().begin(), k.values().end());
      cross_v_.emplace_back(v.values().begin(), v.values().end());
    }
  }

  std::size_t vocab_size() const override { return model_.vocab_size(); }

  search::Cache start(search::Direction) override {
    auto c = std::make_shared<TransformerCache<T>>();
    c->keys.resize(model_.decoder_layers().size());
    c->values.resize(model_.decoder_layers().size());
    return c;
  }

  std::vector<search::StepOutput> step(std::span<const search::Hypothesis* const> hyps,
                                       std::span<const search::Hypothesis* const> opposite) override {
    if (hyps.size() != opposite.size()) throw std::invalid_argument("step: hypothesis/opposite count mismatch");
    count_evaluations(hyps.size());
    std::vector<search::StepOutput> out(hyps.size());
    std::map<std::size_t, std::vector<std::size_t>> by_position;
    for (std::size_t r = 0; r < hyps.size(); ++r) by_position[hyps[r]->tokens.size() - 1].push_back(r);
    for (const auto& [position, rows] : by_position) step_group(position, rows, hyps, opposite, out);
    return out;
  }

 private:
  static const TransformerCache<T>& cache_of(const search::Hypothesis& h) {
    return *static_cast<const TransformerCache<T>*>(h.cache.get());
  }

  void step_group(std::size_t p, const std::vector<std::size_t>& rows,
                  std::span<const search::Hypothesis* const> hyps, std::span<const search::Hypothesis* const> opposite,
                  std::vector<search::StepOutput>& out) {
    ad::NoGradGuard no_grad;
    const std::size_t N = rows.size(), d = model_.config().d_model, heads = model_.config().heads;
    const std::size_t L = model_.decoder_layers().size(), m = source_len_;
    const RunMode inference;

    std::vector<TokenId> tokens(N);
    for (std::size_t r = 0; r < N; ++r) {
      const auto& h = *hyps[rows[r]];
      if (cache_of(h).length != p) throw std::logic_error("step: cache length does not match hypothesis length");
      tokens[r] = h.tokens.back();
    }
    auto x = model_.layer_input(model_.embed(tokens, N, 1), p, inference);

    bool any_opposite = false;
    if (interaction_ && p > 0)
      for (std::size_t r = 0; r < N; ++r) any_opposite |= opposite[rows[r]] != nullptr;

    std::vector<std::vector<T>> new_k(L), new_v(L);
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = model_.decoder_layers()[l];
      const auto q = project(x, layer.self.wq, layer.self.bq);
      const auto k = project(x, layer.self.wk, layer.self.bk);
      const auto v = project(x, layer.self.wv, layer.self.bv);
      new_k[l].assign(k.values().begin(), k.values().end());
      new_v[l].assign(v.values().begin(), v.values().end());

      std::vector<T> own_k(N * (p + 1) * d), own_v(N * (p + 1) * d);
      for (std::size_t r = 0; r < N; ++r) {
        const auto& c = cache_of(*hyps[rows[r]]);
        std::copy(c.keys[l].begin(), c.keys[l].end(), own_k.begin() + static_cast<std::ptrdiff_t>(r * (p + 1) * d));
        std::copy(c.values[l].begin(), c.values[l].end(), own_v.begin() + static_cast<std::ptrdiff_t>(r * (p + 1) * d));
        std::copy_n(new_k[l].begin() + static_cast<std::ptrdiff_t>(r * d), d,
                    own_k.begin() + static_cast<std::ptrdiff_t>((r * (p + 1) + p) * d));
        std::copy_n(new_v[l].begin() + static_cast<std::ptrdiff_t>(r * d), d,
                    own_v.begin() + static_cast<std::ptrdiff_t>((r * (p + 1) + p) * d));
      }
      const auto K = Tensor<T>::from({N, p + 1, d}, std::move(own_k));
      const auto V = Tensor<T>::from({N, p + 1, d}, std::move(own_v));
      auto z = project(ad::attention(q, K, V, heads, std::span<const T>{}, ad::EmptyRows::kError), layer.self.wo,
                       layer.self.bo);

      if (any_opposite) {
        std::vector<T> opp_k(N * p * d, T(0)), opp_v(N * p * d, T(0)), mask(N * p, kHidden<T>);
        for (std::size_t r = 0; r < N; ++r) {
          const auto* o = opposite[rows[r]];
          if (o == nullptr) continue;
          const auto& c = cache_of(*o);
          const std::size_t visible = std::min(p, c.length);
          std::copy_n(c.keys[l].begin(), visible * d, opp_k.begin() + static_cast<std::ptrdiff_t>(r * p * d));
          std::copy_n(c.values[l].begin(), visible * d, opp_v.begin() + static_cast<std::ptrdiff_t>(r * p * d));
          std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(r * p), visible, T(0));
        }
        const auto f = ad::attention(q, Tensor<T>::from({N, p, d}, std::move(opp_k)),
                                     Tensor<T>::from({N, p, d}, std::move(opp_v)), heads, std::span<const T>(mask),
                                     ad::EmptyRows::kZero);
        z = combine_past_future(z, ad::matmul(f, layer.self.wo), model_.lambda());
      }

      std::vector<T> ck(N * m * d), cv(N * m * d);
      for (std::size_t r = 0; r < N; ++r) {
        std::copy(cross_k_[l].begin(), cross_k_[l].end(), ck.begin() + static_cast<std::ptrdiff_t>(r * m * d));
        std::copy(cross_v_[l].begin(), cross_v_[l].end(), cv.begin() + static_cast<std::ptrdiff_t>(r * m * d));
      }
      x = model_.finish_layer(layer, x, z, Tensor<T>::from({N, m, d}, std::move(ck)),
                              Tensor<T>::from({N, m, d}, std::move(cv)), std::span<const T>{}, inference);
    }
    const auto lp = ad::log_softmax(model_.output_logits(x));
    const std::size_t Vsz = model_.vocab_size();
    for (std::size_t r = 0; r < N; ++r) {
      auto& o = out[rows[r]];
      o.log_probs.assign(lp.values().begin() + static_cast<std::ptrdiff_t>(r * Vsz),
                         lp.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * Vsz));
      auto c = std::make_shared<TransformerCache<T>>(cache_of(*hyps[rows[r]]));
      c->length = p + 1;
      for (std::size_t l = 0; l < L; ++l) {
        c->keys[l].insert(c->keys[l].end(), new_k[l].begin() + static_cast<std::ptrdiff_t>(r * d),
                          new_k[l].begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
        c->values[l].insert(c->values[l].end(), new_v[l].begin() + static_cast<std::ptrdiff_t>(r * d),
                            new_v[l].begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
      }
      o.cache = std::move(c);
    }
  }

  const Transformer<T>& model_;
  bool interaction_;
  std::size_t source_len_;
  std::vector<std::vector<T>> cross_k_, cross_v_;
};

}  // namespace

template <class T>
std::unique_ptr<search::Scorer> Transformer<T>::scorer(std::span<const TokenId> source, bool use_interaction) const {
  if (source.empty()) throw std::invalid_argument("scorer: empty source");
  return std::make_unique<TransformerScorer<T>>(*this, source, use_interaction);
}

#define SBI_INSTANTIATE_TRANSFORMER(T)                                                                             \
  template class Transformer<T>;                                                                                   \
  template Tensor<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::span<const T>); \
  template Tensor<T> multi_head(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&, std::size_t,        \
                                std::span<const T>, ad::EmptyRows);                                                \
  template Tensor<T> combine_past_future(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

SBI_INSTANTIATE_TRANSFORMER(float)
SBI_INSTANTIATE_TRANSFORMER(double)

}  // namespace sbi::models
