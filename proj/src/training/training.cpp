#include "sbi/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace sbi::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

const std::vector<TokenId>& own_rows(const TrainingTriple& t, Direction d) {
  return d == Direction::kL2R ? t.forward : t.backward;
}

// Sequence the `primary` stream conditions on.
const std::vector<TokenId>& context_rows(const TrainingTriple& t, Direction primary, Context context) {
  const bool want_r2l = primary == Direction::kL2R;
  if (context == Context::kGold) return want_r2l ? t.backward : t.forward;
  const auto& pseudo = want_r2l ? t.pseudo_backward : t.pseudo_forward;
  if (!pseudo) throw ConfigError("training triple has no pseudo-target for the opposite direction");
  return *pseudo;
}

template <class T>
models::Encoded<T> encode_batch(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple* const> batch,
                                const models::RunMode& mode) {
  std::size_t len = 0;
  for (const auto* t : batch) {
    if (t->source.empty()) throw ConfigError("training triple has an empty source");
    len = std::max(len, t->source.size());
  }
  std::vector<TokenId> ids(batch.size() * len, data::kPad);
  std::vector<std::uint8_t> mask(batch.size() * len, 0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::copy(batch[b]->source.begin(), batch[b]->source.end(), ids.begin() + static_cast<std::ptrdiff_t>(b * len));
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(b * len), batch[b]->source.size(), 1);
  }
  return model.encode(ids, mask, batch.size(), len, mode);
}

template <class T>
ad::Tensor<T> direction_loss(const models::Seq2SeqModel<T>& model, const models::Encoded<T>& enc,
                             std::span<const TrainingTriple* const> batch, Direction dir, Context context,
                             double label_smoothing, const models::RunMode& mode, std::size_t& tokens) {
  std::vector<std::vector<TokenId>> rows;
  rows.reserve(batch.size());
  for (const auto* t : batch) rows.push_back(own_rows(*t, dir));
  const auto primary = models::make_stream(model, rows, dir);
  const auto targets = models::stream_targets(rows, primary.length());
  std::optional<models::Stream<T>> ctx;
  if (context != Context::kNone) {
    std::vector<std::vector<TokenId>> opp;
    opp.reserve(batch.size());
    for (const auto* t : batch) opp.push_back(context_rows(*t, dir, context));
    ctx = models::make_stream(model, opp, search::opposite(dir));
  }
  const auto logits = model.decode(enc, primary, ctx ? &*ctx : nullptr, mode);
  tokens = 0;
  for (auto v : primary.valid) tokens += v;
  return ad::cross_entropy(logits, targets, label_smoothing, primary.valid);
}

template <class T>
LossTerms<T> both_directions(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple* const> batch,
                             Context context, double label_smoothing, const models::RunMode& mode) {
  if (batch.empty()) throw ConfigError("empty training batch");
  if (context != Context::kNone && !model.interactive())
    throw ConfigError("model has no cross-direction pathway to condition on");
  const auto enc = encode_batch(model, batch, mode);
  LossTerms<T> out;
  std::size_t tok_f = 0, tok_b = 0;
  auto fwd = direction_loss(model, enc, batch, Direction::kL2R, context, label_smoothing, mode, tok_f);
  auto bwd = direction_loss(model, enc, batch, Direction::kR2L, context, label_smoothing, mode, tok_b);
  out.forward = static_cast<double>(fwd.item());
  out.backward = static_cast<double>(bwd.item());
  out.tokens = tok_f;
  out.total = ad::add(fwd, bwd);
  return out;
}

std::vector<TokenId> generation_order(const search::Hypothesis& h) {
  std::vector<TokenId> out;
  for (std::size_t k = 1; k < h.tokens.size(); ++k)
    if (h.tokens[k] != data::kEos) out.push_back(h.tokens[k]);
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const TrainingTriple> corpus, std::size_t batch_size) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto la = std::make_pair(corpus[a].source.size(), corpus[a].forward.size());
    const auto lb = std::make_pair(corpus[b].source.size(), corpus[b].forward.size());
    return la < lb;
  });
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  return out;
}

template <class T>
std::vector<const TrainingTriple*> gather(std::span<const TrainingTriple> corpus, const std::vector<std::size_t>& idx) {
  std::vector<const TrainingTriple*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&corpus[i]);
  return out;
}

template <class T>
LossTerms<T> objective_loss(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple* const> batch,
                            Objective objective, double ls, const models::RunMode& mode) {
  return objective == Objective::kNoInteraction ? no_interaction_loss(model, batch, ls, mode)
                                                : bidirectional_loss(model, batch, Context::kPseudo, ls, mode);
}

template <class T>
double validation_loss(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple> valid,
                       Objective objective, const TrainingConfig& config) {
  ad::NoGradGuard guard;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& idx : make_batches(valid, config.batch_size)) {
    const auto batch = gather<T>(valid, idx);
    const auto loss = objective_loss(model, std::span<const TrainingTriple* const>(batch), objective,
                                     config.label_smoothing, models::RunMode{});
    total += static_cast<double>(loss.total.item()) * static_cast<double>(batch.size());
    count += batch.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

template <class T>
std::vector<std::vector<T>> snapshot(const models::Seq2SeqModel<T>& model) {
  std::vector<std::vector<T>> out;
  for (const auto& e : model.params().entries()) out.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

template <class T>
void restore(models::Seq2SeqModel<T>& model, const std::vector<std::vector<T>>& values) {
  auto& entries = model.params().entries();
  for (std::size_t k = 0; k < entries.size(); ++k) std::copy(values[k].begin(), values[k].end(), entries[k].tensor.mutable_values().begin());
}

template <class T>
void attach_pseudo_valid(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple> valid,
                         const TrainingConfig& config, std::vector<TrainingTriple>& out) {
  out = generate_pseudo_targets(model, valid, config).triples;
}

}  // namespace

void TrainingConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (warmup == 0) throw ConfigError("warmup must be at least 1 step");
  if (!(lr_scale > 0.0)) throw ConfigError("lr_scale must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label smoothing must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (!(fine_tune_fraction > 0.0 && fine_tune_fraction <= 1.0)) throw ConfigError("fine-tune fraction must lie in (0, 1]");
  if (pseudo_beam == 0) throw ConfigError("pseudo_beam must be at least 1");
  if (max_seconds < 0.0) throw ConfigError("max_seconds must be non-negative");
}

std::size_t ModelSpec::vocab_size() const {
  return architecture == "lstm" ? lstm.vocab_size : transformer.vocab_size;
}

std::size_t ModelSpec::model_dim() const { return architecture == "lstm" ? lstm.hidden : transformer.d_model; }

template <class T>
std::unique_ptr<models::Seq2SeqModel<T>> make_model(const ModelSpec& spec) {
  if (spec.architecture == "transformer") return std::make_unique<models::Transformer<T>>(spec.transformer);
  if (spec.architecture == "lstm") return std::make_unique<models::Lstm<T>>(spec.lstm);
  throw ConfigError("unknown architecture '" + spec.architecture + "'");
}

template <class T>
void copy_parameters(const models::Seq2SeqModel<T>& from, models::Seq2SeqModel<T>& to) {
  const auto& src = from.params();
  auto& dst = to.params();
  if (src.size() != dst.size()) throw ConfigError("parameter sets differ in size");
  for (auto& e : dst.entries()) {
    if (!src.contains(e.name)) throw ConfigError("parameter '" + e.name + "' missing from the source model");
    const auto& s = src.get(e.name);
    if (s.shape() != e.tensor.shape()) throw ConfigError("parameter '" + e.name + "' changed shape");
    std::copy(s.values().begin(), s.values().end(), e.tensor.mutable_values().begin());
  }
}

double learning_rate(std::size_t step, std::size_t model_dim, const TrainingConfig& config) {
  if (step == 0) return 0.0;
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(config.warmup);
  return config.lr_scale * std::pow(static_cast<double>(model_dim), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

template <class T>
double adam_step(models::ParameterSet<T>& params, AdamState<T>& state, std::size_t model_dim,
                 const TrainingConfig& config) {
  auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.emplace_back(e.tensor.size(), T(0));
      state.v.emplace_back(e.tensor.size(), T(0));
    }
  }
  if (state.m.size() != entries.size()) throw ConfigError("optimizer state does not match the parameters");
  ++state.step;
  state.lr = learning_rate(state.step, model_dim, config);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto values = entries[k].tensor.mutable_values();
    const auto grad = entries[k].tensor.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != values.size()) throw ConfigError("optimizer moment shape mismatch for '" + entries[k].name + "'");
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double mi = config.beta1 * static_cast<double>(m[i]) + (1.0 - config.beta1) * g;
      const double vi = config.beta2 * static_cast<double>(v[i]) + (1.0 - config.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = state.lr * (mi / c1) / (std::sqrt(vi / c2) + config.epsilon);
      values[i] = static_cast<T>(static_cast<double>(values[i]) - update);
    }
  }
  return state.lr;
}

template <class T>
LossTerms<T> bidirectional_loss(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple* const> batch,
                                Context context, double label_smoothing, const models::RunMode& mode) {
  return both_directions(model, batch, context, label_smoothing, mode);
}

template <class T>
LossTerms<T> no_interaction_loss(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple* const> batch,
                                 double label_smoothing, const models::RunMode& mode) {
  return both_directions(model, batch, Context::kNone, label_smoothing, mode);
}

template <class T>
std::vector<double> context_gradient_profile(models::Seq2SeqModel<T>& model, const TrainingTriple& triple,
                                             Direction primary, std::size_t position, Context context) {
  if (context == Context::kNone) throw ConfigError("no context to differentiate against");
  if (!model.interactive()) throw ConfigError("model has no cross-direction pathway");
  const TrainingTriple* one = &triple;
  const std::span<const TrainingTriple* const> batch(&one, 1);
  const auto enc = encode_batch(model, batch, models::RunMode{});
  const std::vector<std::vector<TokenId>> rows = {own_rows(triple, primary)};
  const auto stream = models::make_stream(model, rows, primary);
  if (position >= stream.length()) throw std::out_of_range("position beyond the primary stream");

  const std::vector<std::vector<TokenId>> opp = {context_rows(triple, primary, context)};
  auto ctx = models::make_stream(model, opp, search::opposite(primary));
  const auto raw = ctx.embedded.values();
  ctx.embedded = ad::Tensor<T>::from(ctx.embedded.shape(), std::vector<T>(raw.begin(), raw.end()), true);

  model.params().zero_grad();
  const auto logits = model.decode(enc, stream, &ctx, models::RunMode{});
  const auto targets = models::stream_targets(rows, stream.length());
  std::vector<std::uint8_t> only(stream.length(), 0);
  only[position] = 1;
  ad::backward(ad::cross_entropy(logits, targets, 0.0, only));

  const std::size_t d = ctx.embedded.dim(2);
  const auto g = ctx.embedded.grad();
  std::vector<double> out(ctx.length(), 0.0);
  for (std::size_t j = 0; j < ctx.length(); ++j)
    for (std::size_t c = 0; c < d; ++c) out[j] = std::max(out[j], std::abs(static_cast<double>(g[j * d + c])));
  model.params().zero_grad();
  return out;
}

template <class T>
double context_gradient_beyond(models::Seq2SeqModel<T>& model, const TrainingTriple& triple, Direction primary,
                               std::size_t position, Context context) {
  const auto profile = context_gradient_profile(model, triple, primary, position, context);
  double worst = 0.0;
  for (std::size_t j = position; j < profile.size(); ++j) worst = std::max(worst, profile[j]);
  return worst;
}

template <class T>
PseudoResult generate_pseudo_targets(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple> corpus,
                                     const TrainingConfig& config) {
  ad::NoGradGuard guard;
  PseudoResult out;
  out.triples.reserve(corpus.size());
  for (const auto& t : corpus) {
    search::BeamConfig beam;
    beam.beam = config.pseudo_beam;
    beam.max_len = config.pseudo_max_len ? config.pseudo_max_len : 2 * t.source.size() + 10;
    try {
      TrainingTriple p = t;
      {
        auto scorer = model.scorer(t.source, false);
        p.pseudo_forward = generation_order(search::unidirectional_beam_search(*scorer, Direction::kL2R, beam).best);
      }
      {
        auto scorer = model.scorer(t.source, false);
        p.pseudo_backward = generation_order(search::unidirectional_beam_search(*scorer, Direction::kR2L, beam).best);
      }
      out.triples.push_back(std::move(p));
    } catch (const std::exception&) {
      ++out.skipped;
    }
  }
  return out;
}

void TrainingLog::add(const LogRow& row) {
  rows.push_back(row);
  if (on_row) on_row(row);
}

void TrainingLog::write(std::ostream& out) const {
  out << "step\tlr\ttrain_loss\tvalid_loss\tseconds\n";
  std::string stage;
  for (const auto& r : rows) {
    if (r.stage != stage) {
      out << "# " << r.stage << '\n';
      stage = r.stage;
    }
    out << r.step << '\t' << r.lr << '\t' << r.train_loss << '\t' << r.valid_loss << '\t' << r.seconds << '\n';
  }
}

template <class T>
StageResult train_stage(models::Seq2SeqModel<T>& model, std::span<const TrainingTriple> train,
                        std::span<const TrainingTriple> valid, Objective objective, std::size_t epochs,
                        const TrainingConfig& config, std::size_t model_dim, TrainingLog& log,
                        const std::string& stage) {
  config.validate();
  if (train.empty()) throw ConfigError("training corpus is empty");
  std::mt19937_64 rng(config.seed);
  auto batches = make_batches(train, config.batch_size);
  AdamState<T> adam;
  StageResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  std::vector<std::vector<T>> best;
  std::size_t stale = 0;
  double running = 0.0;
  std::size_t running_n = 0;
  const auto start = Clock::now();
  bool stop = false;

  auto evaluate = [&]() {
    const double vl = valid.empty() ? running / static_cast<double>(std::max<std::size_t>(running_n, 1))
                                    : validation_loss(model, valid, objective, config);
    log.add({stage, result.steps, adam.lr, running / static_cast<double>(std::max<std::size_t>(running_n, 1)), vl,
             seconds_since(start)});
    running = 0.0;
    running_n = 0;
    if (vl < result.best_valid_loss) {
      result.best_valid_loss = vl;
      best = snapshot(model);
      stale = 0;
    } else if (++stale >= config.patience) {
      result.early_stopped = true;
      stop = true;
    }
  };

  const models::RunMode mode{true, &rng};
  for (std::size_t epoch = 0; epoch < epochs && !stop; ++epoch) {
    std::shuffle(batches.begin(), batches.end(), rng);
    for (const auto& idx : batches) {
      const auto batch = gather<T>(train, idx);
      model.params().zero_grad();
      const auto loss = objective_loss(model, std::span<const TrainingTriple* const>(batch), objective,
                                       config.label_smoothing, mode);
      ad::backward(loss.total);
      adam_step(model.params(), adam, model_dim, config);
      running += static_cast<double>(loss.total.item());
      ++running_n;
      ++result.steps;
      if (config.eval_every && result.steps % config.eval_every == 0) evaluate();
      if (config.max_steps && result.steps >= config.max_steps) stop = true;
      if (config.max_seconds > 0.0 && seconds_since(start) >= config.max_seconds) stop = true;
      if (stop) break;
    }
    ++result.epochs;
    if (!config.eval_every || (stop && running_n > 0)) {
      if (running_n > 0) evaluate();
    }
  }
  model.params().zero_grad();
  if (!best.empty()) restore(model, best);
  return result;
}

std::vector<std::size_t> sample_subset(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  if (n == 0) return {};
  const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <class T>
TrainedModels<T> train_no_interaction(const ModelSpec& spec, std::span<const TrainingTriple> train,
                                      std::span<const TrainingTriple> valid, const TrainingConfig& config) {
  config.validate();
  TrainedModels<T> out;
  out.no_interaction = make_model<T>(spec);
  train_stage(*out.no_interaction, train, valid, Objective::kNoInteraction, config.max_epochs, config,
              spec.model_dim(), out.log, "stage1");
  return out;
}

template <class T>
SecondStage<T> second_stage(const ModelSpec& spec, const models::Seq2SeqModel<T>& first_stage,
                            std::span<const TrainingTriple> train, std::span<const TrainingTriple> valid,
                            const TrainingConfig& config, bool subset, TrainingLog& log) {
  config.validate();
  std::vector<TrainingTriple> sampled;
  if (subset)
    for (auto i : sample_subset(train.size(), config.fine_tune_fraction, config.seed)) sampled.push_back(train[i]);
  auto pseudo = generate_pseudo_targets(first_stage, subset ? std::span<const TrainingTriple>(sampled) : train, config);
  std::vector<TrainingTriple> pseudo_valid;
  attach_pseudo_valid(first_stage, valid, config, pseudo_valid);
  SecondStage<T> out;
  out.pseudo_skipped = pseudo.skipped;
  out.examples = pseudo.triples.size();

  out.model = make_model<T>(spec);
  if (!out.model->interactive()) throw ConfigError("interactive training needs an interactive model");
  if (subset || !config.from_scratch) copy_parameters(first_stage, *out.model);
  TrainingConfig second = config;
  second.seed = config.seed + 1;
  train_stage(*out.model, pseudo.triples, pseudo_valid, Objective::kBidirectional,
              config.stage2_epochs ? config.stage2_epochs : config.max_epochs, second, spec.model_dim(), log,
              subset ? "stage2" : "pass2");
  return out;
}

template <class T>
TrainedModels<T> two_pass_train(const ModelSpec& spec, std::span<const TrainingTriple> train,
                                std::span<const TrainingTriple> valid, const TrainingConfig& config) {
  auto out = train_no_interaction<T>(spec, train, valid, config);
  auto second = second_stage(spec, *out.no_interaction, train, valid, config, false, out.log);
  out.bidirectional = std::move(second.model);
  out.pseudo_skipped = second.pseudo_skipped;
  out.stage2_examples = second.examples;
  return out;
}

template <class T>
TrainedModels<T> fine_tune(const ModelSpec& spec, std::span<const TrainingTriple> train,
                           std::span<const TrainingTriple> valid, const TrainingConfig& config) {
  auto out = train_no_interaction<T>(spec, train, valid, config);
  auto second = second_stage(spec, *out.no_interaction, train, valid, config, true, out.log);
  out.bidirectional = std::move(second.model);
  out.pseudo_skipped = second.pseudo_skipped;
  out.stage2_examples = second.examples;
  return out;
}

#define SBI_INSTANTIATE(T)                                                                                        \
  template std::unique_ptr<models::Seq2SeqModel<T>> make_model<T>(const ModelSpec&);                             \
  template void copy_parameters<T>(const models::Seq2SeqModel<T>&, models::Seq2SeqModel<T>&);                    \
  template double adam_step<T>(models::ParameterSet<T>&, AdamState<T>&, std::size_t, const TrainingConfig&);     \
  template LossTerms<T> bidirectional_loss<T>(const models::Seq2SeqModel<T>&, std::span<const TrainingTriple* const>, \
                                              Context, double, const models::RunMode&);                          \
  template LossTerms<T> no_interaction_loss<T>(const models::Seq2SeqModel<T>&,                                    \
                                               std::span<const TrainingTriple* const>, double,                    \
                                               const models::RunMode&);                                           \
  template std::vector<double> context_gradient_profile<T>(models::Seq2SeqModel<T>&, const TrainingTriple&,       \
                                                           Direction, std::size_t, Context);                      \
  template double context_gradient_beyond<T>(models::Seq2SeqModel<T>&, const TrainingTriple&, Direction,          \
                                             std::size_t, Context);                                               \
  template PseudoResult generate_pseudo_targets<T>(const models::Seq2SeqModel<T>&, std::span<const TrainingTriple>, \
                                                   const TrainingConfig&);                                        \
  template StageResult train_stage<T>(models::Seq2SeqModel<T>&, std::span<const TrainingTriple>,                 \
                                      std::span<const TrainingTriple>, Objective, std::size_t,                    \
                                      const TrainingConfig&, std::size_t, TrainingLog&, const std::string&);      \
  template TrainedModels<T> train_no_interaction<T>(const ModelSpec&, std::span<const TrainingTriple>,            \
                                                    std::span<const TrainingTriple>, const TrainingConfig&);      \
  template TrainedModels<T> two_pass_train<T>(const ModelSpec&, std::span<const TrainingTriple>,                  \
                                              std::span<const TrainingTriple>, const TrainingConfig&);            \
  template TrainedModels<T> fine_tune<T>(const ModelSpec&, std::span<const TrainingTriple>,                       \
                                         std::span<const TrainingTriple>, const TrainingConfig&);                 \
  template SecondStage<T> second_stage<T>(const ModelSpec&, const models::Seq2SeqModel<T>&,                        \
                                          std::span<const TrainingTriple>, std::span<const TrainingTriple>,        \
                                          const TrainingConfig&, bool, TrainingLog&);

SBI_INSTANTIATE(float)
SBI_INSTANTIATE(double)

#undef SBI_INSTANTIATE

}  // namespace sbi::train
