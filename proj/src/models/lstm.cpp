#include "sbi/lstm.hpp"

#include <cmath>

namespace sbi::models {

using ad::Tensor;

namespace {

template <class T>
Tensor<T> time_slice(const Tensor<T>& seq, std::size_t t) {
  const std::size_t batch = seq.dim(0), len = seq.dim(1), d = seq.dim(2);
  return ad::slice_last(ad::reshape(seq, {batch, len * d}), t * d, (t + 1) * d);
}

// [B, d] x M -> [B, M, d]
template <class T>
Tensor<T> stack_time(const std::vector<Tensor<T>>& steps, std::size_t count) {
  const std::size_t batch = steps.front().dim(0), d = steps.front().dim(1);
  std::vector<Tensor<T>> parts(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(count));
  return ad::reshape(ad::concat_last(parts), {batch, count, d});
}

template <class T>
std::vector<std::uint8_t> column(std::span<const std::uint8_t> mask, std::size_t batch, std::size_t len,
                                 std::size_t t) {
  std::vector<std::uint8_t> col(batch);
  for (std::size_t b = 0; b < batch; ++b) col[b] = mask[b * len + t];
  return col;
}

}  // namespace

template <class T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(const LstmCell<T>& cell, const Tensor<T>& x, const Tensor<T>& h,
                                          const Tensor<T>& c) {
  const std::size_t d = h.last_dim();
  const auto gates = ad::add_bias(ad::matmul(x, cell.wx) + ad::matmul(h, cell.wh), cell.b);
  const auto i = ad::sigmoid(ad::slice_last(gates, 0, d));
  const auto f = ad::sigmoid(ad::slice_last(gates, d, 2 * d));
  const auto g = ad::tanh(ad::slice_last(gates, 2 * d, 3 * d));
  const auto o = ad::sigmoid(ad::slice_last(gates, 3 * d, 4 * d));
  const auto c2 = f * c + i * g;
  return {o * ad::tanh(c2), c2};
}

template <class T>
Tensor<T> source_attention(const Tensor<T>& z, const Tensor<T>& states, std::span<const std::uint8_t> mask,
                           const AdditiveWeights<T>& w, std::vector<T>* weights_out) {
  return ad::additive_attention(ad::matmul(z, w.w), ad::matmul(states, w.u), w.v, states, mask, weights_out);
}

template <class T>
Tensor<T> cross_direction_attention(const Tensor<T>& z, const Tensor<T>& opposite_states,
                                    std::span<const std::uint8_t> visible, const AdditiveWeights<T>& w,
                                    std::vector<T>* weights_out) {
  if (opposite_states.dim(1) == 0) return Tensor<T>::zeros({z.dim(0), opposite_states.dim(2)});
  return ad::additive_attention(ad::matmul(z, w.w), ad::matmul(opposite_states, w.u), w.v, opposite_states, visible,
                                weights_out);
}

template <class T>
LstmCell<T> Lstm<T>::make_cell(const std::string& prefix, std::size_t in, std::mt19937_64& rng) {
  const std::size_t d = config_.hidden;
  auto& p = this->params_;
  LstmCell<T> cell;
  cell.wx = p.add(prefix + ".wx", {in, 4 * d}, xavier_uniform<T>(in, 4 * d, rng));
  cell.wh = p.add(prefix + ".wh", {d, 4 * d}, xavier_uniform<T>(d, 4 * d, rng));
  std::vector<T> b(4 * d, T(0));
  std::fill(b.begin() + static_cast<std::ptrdiff_t>(d), b.begin() + static_cast<std::ptrdiff_t>(2 * d), T(1));
  cell.b = p.add(prefix + ".b", {4 * d}, std::move(b));
  return cell;
}

template <class T>
typename Lstm<T>::Decoder Lstm<T>::make_decoder(const std::string& prefix, std::mt19937_64& rng) {
  const std::size_t d = config_.hidden, V = config_.vocab_size;
  auto& p = this->params_;
  Decoder dec;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string pre = prefix + ".layer" + std::to_string(l);
    dec.cells.push_back(make_cell(pre, l == 0 ? 2 * d : d, rng));
    dec.ln_g.push_back(p.add(pre + ".ln.g", {d}, std::vector<T>(d, T(1))));
    dec.ln_b.push_back(p.add(pre + ".ln.b", {d}, std::vector<T>(d)));
  }
  auto additive = [&](const std::string& pre) {
    AdditiveWeights<T> a;
    a.w = p.add(pre + ".w", {d, d}, xavier_uniform<T>(d, d, rng));
    a.u = p.add(pre + ".u", {d, d}, xavier_uniform<T>(d, d, rng));
    a.v = p.add(pre + ".v", {d}, xavier_uniform<T>(d, 1, rng));
    return a;
  };
  dec.source_att = additive(prefix + ".source_att");
  dec.cross_att = additive(prefix + ".cross_att");
  dec.wc = p.add(prefix + ".wc", {3 * d, d}, xavier_uniform<T>(3 * d, d, rng));
  dec.bc = p.add(prefix + ".bc", {d}, std::vector<T>(d));
  dec.out_w = p.add(prefix + ".out.w", {d, V}, xavier_uniform<T>(d, V, rng));
  dec.out_b = p.add(prefix + ".out.b", {V}, std::vector<T>(V));
  return dec;
}

template <class T>
Lstm<T>::Lstm(const LstmConfig& config) : config_(config) {
  const std::size_t d = config.hidden, V = config.vocab_size;
  if (V <= static_cast<std::size_t>(data::kNumReserved))
    throw std::invalid_argument("vocabulary must contain tokens beyond the reserved ones");
  if (d == 0 || config.layers == 0) throw std::invalid_argument("hidden size and layers must be positive");

  std::mt19937_64 rng(config.seed);
  auto& p = this->params_;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  src_embedding_ = p.add("src_embedding", {V, d}, normal_values<T>(V * d, emb_std, rng));
  tgt_embedding_ = p.add("tgt_embedding", {V, d}, normal_values<T>(V * d, emb_std, rng));
  enc_fwd_ = make_cell("enc.layer0.fwd", d, rng);
  enc_bwd_ = make_cell("enc.layer0.bwd", d, rng);
  merge_l_ = p.add("enc.layer0.merge_l", {d, d}, xavier_uniform<T>(d, d, rng));
  merge_r_ = p.add("enc.layer0.merge_r", {d, d}, xavier_uniform<T>(d, d, rng));
  merge_b_ = p.add("enc.layer0.merge_b", {d}, std::vector<T>(d));
  enc_ln0_g_ = p.add("enc.layer0.ln.g", {d}, std::vector<T>(d, T(1)));
  enc_ln0_b_ = p.add("enc.layer0.ln.b", {d}, std::vector<T>(d));
  for (std::size_t l = 1; l < config.layers; ++l) {
    const std::string pre = "enc.layer" + std::to_string(l);
    enc_cells_.push_back(make_cell(pre, d, rng));
    enc_ln_g_.push_back(p.add(pre + ".ln.g", {d}, std::vector<T>(d, T(1))));
    enc_ln_b_.push_back(p.add(pre + ".ln.b", {d}, std::vector<T>(d)));
  }
  decoders_[0] = make_decoder(config.separate_directions ? "dec.l2r" : "dec", rng);
  decoders_[1] = config.separate_directions ? make_decoder("dec.r2l", rng) : decoders_[0];
}

template <class T>
Tensor<T> Lstm<T>::maybe_dropout(const Tensor<T>& x, const RunMode& mode) const {
  if (!mode.train || config_.dropout <= 0.0) return x;
  return ad::dropout(x, config_.dropout, *mode.rng);
}

template <class T>
Tensor<T> Lstm<T>::embed(std::span<const TokenId> tokens, std::size_t batch, std::size_t length) const {
  return ad::gather_rows(tgt_embedding_, tokens, {batch, length});
}

template <class T>
Encoded<T> Lstm<T>::encode(std::span<const TokenId> source, std::span<const std::uint8_t> mask, std::size_t batch,
                           std::size_t length, const RunMode& mode) const {
  if (batch == 0 || length == 0) throw std::invalid_argument("encode: empty source");
  for (std::size_t b = 0; b < batch; ++b)
    if (mask[b * length] == 0) throw std::invalid_argument("encode: empty source sequence in row " + std::to_string(b));
  const std::size_t d = config_.hidden;
  const auto emb = ad::gather_rows(src_embedding_, source, {batch, length});
  std::vector<Tensor<T>> x(length);
  std::vector<std::vector<std::uint8_t>> keep(length);
  for (std::size_t t = 0; t < length; ++t) {
    x[t] = maybe_dropout(time_slice(emb, t), mode);
    keep[t] = column<T>(mask, batch, length, t);
  }

  const auto zero = Tensor<T>::zeros({batch, d});
  std::vector<Tensor<T>> fwd(length), bwd(length);
  {
    Tensor<T> h = zero, c = zero;
    for (std::size_t t = 0; t < length; ++t) {
      auto [h2, c2] = lstm_cell(enc_fwd_, x[t], h, c);
      h = ad::select_rows(keep[t], h2, h);
      c = ad::select_rows(keep[t], c2, c);
      fwd[t] = h;
    }
  }
  {
    Tensor<T> h = zero, c = zero;
    for (std::size_t t = length; t-- > 0;) {
      auto [h2, c2] = lstm_cell(enc_bwd_, x[t], h, c);
      h = ad::select_rows(keep[t], h2, h);
      c = ad::select_rows(keep[t], c2, c);
      bwd[t] = h;
    }
  }
  std::vector<Tensor<T>> out(length);
  for (std::size_t t = 0; t < length; ++t) {
    const auto merged =
        ad::tanh(ad::add_bias(ad::matmul(fwd[t], merge_l_) + ad::matmul(bwd[t], merge_r_), merge_b_));
    out[t] = ad::layer_norm(merged, enc_ln0_g_, enc_ln0_b_);
  }
  for (std::size_t l = 0; l < enc_cells_.size(); ++l) {
    Tensor<T> h = zero, c = zero;
    for (std::size_t t = 0; t < length; ++t) {
      auto [h2, c2] = lstm_cell(enc_cells_[l], maybe_dropout(out[t], mode), h, c);
      h = ad::select_rows(keep[t], h2, h);
      c = ad::select_rows(keep[t], c2, c);
      out[t] = ad::layer_norm(out[t] + h, enc_ln_g_[l], enc_ln_b_[l]);
    }
  }
  Encoded<T> enc;
  enc.batch = batch;
  enc.length = length;
  enc.mask.assign(mask.begin(), mask.end());
  enc.states = stack_time(out, length);
  return enc;
}

template <class T>
typename Lstm<T>::State Lstm<T>::zero_state(std::size_t batch) const {
  State s;
  const auto zero = Tensor<T>::zeros({batch, config_.hidden});
  s.h.assign(config_.layers, zero);
  s.c.assign(config_.layers, zero);
  s.feed = zero;
  return s;
}

template <class T>
Tensor<T> Lstm<T>::top_state(const Decoder& dec, const Tensor<T>& embedded, State& state, const RunMode& mode) const {
  Tensor<T> input = ad::concat_last(std::vector<Tensor<T>>{maybe_dropout(embedded, mode), state.feed});
  Tensor<T> below;
  for (std::size_t l = 0; l < dec.cells.size(); ++l) {
    auto [h, c] = lstm_cell(dec.cells[l], input, state.h[l], state.c[l]);
    state.h[l] = h;
    state.c[l] = c;
    below = l == 0 ? ad::layer_norm(h, dec.ln_g[l], dec.ln_b[l]) : ad::layer_norm(below + h, dec.ln_g[l], dec.ln_b[l]);
    input = maybe_dropout(below, mode);
  }
  return below;
}

template <class T>
Tensor<T> Lstm<T>::output(const Decoder& dec, const Tensor<T>& top, const Tensor<T>& source_context,
                          const Tensor<T>& cross_context, State& state, const RunMode& mode) const {
  const auto z =
      ad::tanh(ad::add_bias(ad::matmul(ad::concat_last(std::vector<Tensor<T>>{top, source_context, cross_context}),
                                       dec.wc),
                            dec.bc));
  state.feed = z;
  return ad::add_bias(ad::matmul(maybe_dropout(z, mode), dec.out_w), dec.out_b);
}

template <class T>
Tensor<T> Lstm<T>::decode(const Encoded<T>& enc, const Stream<T>& primary, const Stream<T>* context,
                          const RunMode& mode) const {
  if (context && context->batch() != primary.batch()) throw ad::DimensionError("decode: stream batch sizes differ");
  const std::size_t B = primary.batch(), d = config_.hidden;

  struct Half {
    const Stream<T>* stream;
    const Decoder* dec;
    Tensor<T> keys_proj;  // U_a C
    State state;
    std::vector<Tensor<T>> tops;
    std::vector<std::size_t> row_len;
    std::size_t steps;
  };
  std::vector<Half> halves;
  auto add_half = [&](const Stream<T>& s, std::size_t steps) {
    Half h;
    h.stream = &s;
    h.dec = &decoder(s.direction);
    h.keys_proj = ad::matmul(enc.states, h.dec->source_att.u);
    h.state = zero_state(B);
    for (std::size_t b = 0; b < B; ++b) h.row_len.push_back(s.row_length(b));
    h.steps = steps;
    halves.push_back(std::move(h));
  };
  add_half(primary, primary.length());
  if (context) add_half(*context, std::min(context->length(), primary.length() - 1));

  std::vector<Tensor<T>> logits;
  for (std::size_t i = 0; i < primary.length(); ++i) {
    for (auto& h : halves)
      if (i < h.steps) h.tops.push_back(top_state(*h.dec, time_slice(h.stream->embedded, i), h.state, mode));
    for (std::size_t s = 0; s < halves.size(); ++s) {
      auto& h = halves[s];
      if (i >= h.steps) continue;
      const auto& top = h.tops[i];
      const auto c = ad::additive_attention(ad::matmul(top, h.dec->source_att.w), h.keys_proj, h.dec->source_att.v,
                                            enc.states, enc.mask);
      Tensor<T> cz;
      if (halves.size() == 2 && i > 0) {
        const auto& other = halves[1 - s];
        const std::size_t M = std::min(i, other.tops.size());
        std::vector<std::uint8_t> visible(B * M);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t k = 0; k < M; ++k) visible[b * M + k] = k < other.row_len[b];
        cz = cross_direction_attention(top, stack_time(other.tops, M), visible, h.dec->cross_att);
      } else {
        cz = Tensor<T>::zeros({B, d});
      }
      const auto out = output(*h.dec, top, c, cz, h.state, mode);
      if (s == 0) logits.push_back(out);
    }
  }
  return ad::reshape(ad::concat_last(logits), {B * primary.length(), config_.vocab_size});
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
class LstmScorer final : public search::Scorer {
 public:
  LstmScorer(const Lstm<T>& model, std::span<const TokenId> source, bool use_interaction)
      : model_(model), interaction_(use_interaction), source_len_(source.size()) {
    ad::NoGradGuard no_grad;
    const std::vector<std::uint8_t> mask(source.size(), 1);
    const auto enc = model.encode(source, mask, 1, source.size(), RunMode{});
    states_.assign(enc.states.values().begin(), enc.states.values().end());
    for (auto dir : {Direction::kL2R, Direction::kR2L}) {
      const auto kp = ad::matmul(enc.states, model.decoder(dir).source_att.u);
      keys_proj_[static_cast<std::size_t>(dir)].assign(kp.values().begin(), kp.values().end());
    }
  }

  std::size_t vocab_size() const override { return model_.vocab_size(); }

  search::Cache start(Direction) override {
    const std::size_t d = model_.config().hidden;
    auto c = std::make_shared<LstmCache<T>>();
    c->h.assign(model_.config().layers, std::vector<T>(d));
    c->c.assign(model_.config().layers, std::vector<T>(d));
    c->feed.assign(d, T(0));
    return c;
  }

  std::vector<search::StepOutput> step(std::span<const search::Hypothesis* const> hyps,
                                       std::span<const search::Hypothesis* const> opposite) override {
    if (hyps.size() != opposite.size()) throw std::invalid_argument("step: hypothesis/opposite count mismatch");
    count_evaluations(hyps.size());
    std::vector<search::StepOutput> out(hyps.size());
    std::array<std::vector<std::size_t>, 2> by_dir;
    for (std::size_t r = 0; r < hyps.size(); ++r) by_dir[static_cast<std::size_t>(hyps[r]->direction)].push_back(r);
    for (std::size_t dir = 0; dir < 2; ++dir)
      if (!by_dir[dir].empty()) step_group(static_cast<Direction>(dir), by_dir[dir], hyps, opposite, out);
    return out;
  }

 private:
  static const LstmCache<T>& cache_of(const search::Hypothesis& h) {
    return *static_cast<const LstmCache<T>*>(h.cache.get());
  }

  void step_group(Direction dir, const std::vector<std::size_t>& rows,
                  std::span<const search::Hypothesis* const> hyps, std::span<const search::Hypothesis* const> opposite,
                  std::vector<search::StepOutput>& out) {
    ad::NoGradGuard no_grad;
    const std::size_t N = rows.size(), d = model_.config().hidden, L = model_.config().layers, m = source_len_;
    const auto& dec = model_.decoder(dir);
    const RunMode inference;

    std::vector<TokenId> tokens(N);
    typename Lstm<T>::State state;
    std::vector<T> h_buf(N * d), c_buf(N * d), feed(N * d);
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t r = 0; r < N; ++r) {
        const auto& c = cache_of(*hyps[rows[r]]);
        std::copy(c.h[l].begin(), c.h[l].end(), h_buf.begin() + static_cast<std::ptrdiff_t>(r * d));
        std::copy(c.c[l].begin(), c.c[l].end(), c_buf.begin() + static_cast<std::ptrdiff_t>(r * d));
      }
      state.h.push_back(Tensor<T>::from({N, d}, h_buf));
      state.c.push_back(Tensor<T>::from({N, d}, c_buf));
    }
    std::size_t max_visible = 0;
    std::vector<std::size_t> visible_count(N, 0);
    for (std::size_t r = 0; r < N; ++r) {
      const auto& h = *hyps[rows[r]];
      const auto& c = cache_of(h);
      if (c.length + 1 != h.tokens.size()) throw std::logic_error("step: cache length does not match hypothesis length");
      tokens[r] = h.tokens.back();
      std::copy(c.feed.begin(), c.feed.end(), feed.begin() + static_cast<std::ptrdiff_t>(r * d));
      if (interaction_ && opposite[rows[r]] != nullptr)
        visible_count[r] = std::min(c.length, cache_of(*opposite[rows[r]]).length);
      max_visible = std::max(max_visible, visible_count[r]);
    }
    state.feed = Tensor<T>::from({N, d}, std::move(feed));

    const auto top = model_.top_state(dec, ad::reshape(model_.embed(tokens, N, 1), {N, d}), state, inference);

    std::vector<T> st(N * m * d), kp(N * m * d);
    const auto& keys_proj = keys_proj_[static_cast<std::size_t>(dir)];
    for (std::size_t r = 0; r < N; ++r) {
      std::copy(states_.begin(), states_.end(), st.begin() + static_cast<std::ptrdiff_t>(r * m * d));
      std::copy(keys_proj.begin(), keys_proj.end(), kp.begin() + static_cast<std::ptrdiff_t>(r * m * d));
    }
    const std::vector<std::uint8_t> src_mask(N * m, 1);
    const auto ctx = ad::additive_attention(ad::matmul(top, dec.source_att.w), Tensor<T>::from({N, m, d}, std::move(kp)),
                                            dec.source_att.v, Tensor<T>::from({N, m, d}, std::move(st)),
                                            std::span<const std::uint8_t>(src_mask));

    Tensor<T> cz;
    if (max_visible > 0) {
      std::vector<T> opp(N * max_visible * d, T(0));
      std::vector<std::uint8_t> visible(N * max_visible, 0);
      for (std::size_t r = 0; r < N; ++r) {
        if (visible_count[r] == 0) continue;
        const auto& oc = cache_of(*opposite[rows[r]]);
        std::copy_n(oc.top.begin(), visible_count[r] * d,
                    opp.begin() + static_cast<std::ptrdiff_t>(r * max_visible * d));
        std::fill_n(visible.begin() + static_cast<std::ptrdiff_t>(r * max_visible), visible_count[r], 1);
      }
      cz = cross_direction_attention(top, Tensor<T>::from({N, max_visible, d}, std::move(opp)),
                                     std::span<const std::uint8_t>(visible), dec.cross_att);
    } else {
      cz = Tensor<T>::zeros({N, d});
    }
    const auto logits = model_.output(dec, top, ctx, cz, state, inference);
    const auto lp = ad::log_softmax(logits);
    const std::size_t V = model_.vocab_size();
    for (std::size_t r = 0; r < N; ++r) {
      auto& o = out[rows[r]];
      o.log_probs.assign(lp.values().begin() + static_cast<std::ptrdiff_t>(r * V),
                         lp.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * V));
      auto c = std::make_shared<LstmCache<T>>(cache_of(*hyps[rows[r]]));
      auto row = [&](const Tensor<T>& t) {
        return std::vector<T>(t.values().begin() + static_cast<std::ptrdiff_t>(r * d),
                              t.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
      };
      for (std::size_t l = 0; l < L; ++l) {
        c->h[l] = row(state.h[l]);
        c->c[l] = row(state.c[l]);
      }
      c->feed = row(state.feed);
      const auto t = row(top);
      c->top.insert(c->top.end(), t.begin(), t.end());
      c->length += 1;
      o.cache = std::move(c);
    }
  }

  const Lstm<T>& model_;
  bool interaction_;
  std::size_t source_len_;
  std::vector<T> states_;
  std::array<std::vector<T>, 2> keys_proj_;
};

}  // namespace

template <class T>
std::unique_ptr<search::Scorer> Lstm<T>::scorer(std::span<const TokenId> source, bool use_interaction) const {
  if (source.empty()) throw std::invalid_argument("scorer: empty source");
  return std::make_unique<LstmScorer<T>>(*this, source, use_interaction);
}

#define SBI_INSTANTIATE_LSTM(T)                                                                                   \
  template class Lstm<T>;                                                                                         \
  template std::pair<Tensor<T>, Tensor<T>> lstm_cell(const LstmCell<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                                     const Tensor<T>&);                                           \
  template Tensor<T> source_attention(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>,          \
                                      const AdditiveWeights<T>&, std::vector<T>*);                                \
  template Tensor<T> cross_direction_attention(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>, \
                                               const AdditiveWeights<T>&, std::vector<T>*);

SBI_INSTANTIATE_LSTM(float)
SBI_INSTANTIATE_LSTM(double)

}  // namespace sbi::models
