#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "sbi/grad_check.hpp"
#include "sbi/training.hpp"

using namespace sbi;
using search::Direction;
using search::Hypothesis;
using train::Context;

namespace {

constexpr std::size_t kVocab = 12;

train::ModelSpec tiny_spec(const std::string& arch, std::uint64_t seed = 3) {
  train::ModelSpec s;
  s.architecture = arch;
  s.transformer.vocab_size = kVocab;
  s.transformer.d_model = 8;
  s.transformer.heads = 2;
  s.transformer.d_ff = 12;
  s.transformer.layers = 1;
  s.transformer.dropout = 0.0;
  s.transformer.seed = seed;
  s.lstm.vocab_size = kVocab;
  s.lstm.hidden = 8;
  s.lstm.layers = 1;
  s.lstm.dropout = 0.0;
  s.lstm.seed = seed;
  return s;
}

data::TrainingTriple triple(std::vector<data::TokenId> src, std::vector<data::TokenId> fwd) {
  data::TrainingTriple t;
  t.source = std::move(src);
  t.forward = fwd;
  t.backward.assign(fwd.rbegin(), fwd.rend());
  return t;
}

std::vector<data::TrainingTriple> random_triples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tok(6, static_cast<int>(kVocab) - 1), len(1, 5);
  std::vector<data::TrainingTriple> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<data::TokenId> s(static_cast<std::size_t>(len(rng)));
    for (auto& x : s) x = tok(rng);
    auto t = triple(s, s);
    std::vector<data::TokenId> pf(static_cast<std::size_t>(len(rng))), pb(static_cast<std::size_t>(len(rng)));
    for (auto& x : pf) x = tok(rng);
    for (auto& x : pb) x = tok(rng);
    t.pseudo_forward = pf;
    t.pseudo_backward = pb;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<const data::TrainingTriple*> ptrs(const std::vector<data::TrainingTriple>& v) {
  std::vector<const data::TrainingTriple*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

// Teacher-forced log distributions of `own`, computed one step at a time while
// a second hypothesis consumes `ctx` in lockstep as the opposite direction.
std::vector<std::vector<double>> stepwise(search::Scorer& scorer, Direction dir, const std::vector<data::TokenId>& own,
                                          const std::vector<data::TokenId>* ctx) {
  Hypothesis f{dir, {search::direction_tag(dir)}, 0, 0, false, scorer.start(dir)};
  const Direction od = search::opposite(dir);
  Hypothesis c{od, {search::direction_tag(od)}, 0, 0, false, scorer.start(od)};
  std::size_t consumed = 0;
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i <= own.size(); ++i) {
    std::vector<const Hypothesis*> hs = {&f};
    std::vector<const Hypothesis*> os = {ctx && i > 0 ? &c : nullptr};
    const bool step_ctx = ctx && consumed < ctx->size() + 1;
    if (step_ctx) {
      hs.push_back(&c);
      os.push_back(i > 0 ? &f : nullptr);
    }
    auto res = scorer.step(hs, os);
    out.push_back(res[0].log_probs);
    f.tokens.push_back(i < own.size() ? own[i] : data::kEos);
    f.cache = res[0].cache;
    if (step_ctx) {
      c.tokens.push_back(consumed < ctx->size() ? (*ctx)[consumed] : data::kEos);
      c.cache = res[1].cache;
      ++consumed;
    }
  }
  return out;
}

double smoothed_nll(const std::vector<std::vector<double>>& steps, const std::vector<data::TokenId>& own, double eps) {
  double total = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto y = i < own.size() ? own[i] : data::kEos;
    for (std::size_t j = 0; j < steps[i].size(); ++j) {
      const double q = eps / static_cast<double>(steps[i].size()) + (static_cast<data::TokenId>(j) == y ? 1.0 - eps : 0.0);
      total -= q * steps[i][j];
    }
  }
  return total / static_cast<double>(steps.size());
}

}  // namespace

TEST(LearningRate, Schedule) {
  train::TrainingConfig c;
  c.warmup = 400;
  EXPECT_EQ(train::learning_rate(0, 64, c), 0.0);
  EXPECT_NEAR(train::learning_rate(400, 64, c), std::pow(64.0, -0.5) * std::pow(400.0, -0.5), 1e-15);
  EXPECT_NEAR(train::learning_rate(100, 64, c), std::pow(64.0, -0.5) * 100.0 * std::pow(400.0, -1.5), 1e-15);
  EXPECT_NEAR(train::learning_rate(1600, 64, c), std::pow(64.0, -0.5) / 40.0, 1e-15);
  c.lr_scale = 2.0;
  EXPECT_NEAR(train::learning_rate(400, 64, c), 2.0 / 8.0 / 20.0, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  models::ParameterSet<double> p;
  p.add("w", {3}, {0.5, -1.0, 2.0});
  train::AdamState<double> st;
  train::TrainingConfig c;
  for (int k = 0; k < 3; ++k) train::adam_step(p, st, 16, c);
  EXPECT_EQ(st.step, 3u);
  const auto v = p.get("w").values();
  EXPECT_EQ(v[0], 0.5);
  EXPECT_EQ(v[1], -1.0);
  EXPECT_EQ(v[2], 2.0);
}

TEST(Adam, ThreeStepScalarTrace) {
  models::ParameterSet<double> p;
  auto w = p.add("w", {1}, {1.0});
  train::AdamState<double> st;
  train::TrainingConfig c;
  c.warmup = 4;
  const double grads[3] = {0.5, -0.2, 0.8};
  // Textbook Adam by hand.
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    p.zero_grad();
    ad::backward(ad::sum(ad::mul(w, ad::Tensor<double>::from({1}, {grads[t - 1]}))));
    train::adam_step(p, st, 16, c);
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.998 * v + 0.002 * g * g;
    const double lr = 0.25 * std::min(1.0 / std::sqrt(t), t * std::pow(4.0, -1.5));
    x -= lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.998, t))) + 1e-9);
    EXPECT_NEAR(w.values()[0], x, 1e-14) << "step " << t;
    EXPECT_NEAR(st.lr, lr, 1e-15);
  }
}

class LossOracle : public ::testing::TestWithParam<std::string> {};

TEST_P(LossOracle, BidirectionalLossMatchesStepwise) {
  auto model = train::make_model<double>(tiny_spec(GetParam()));
  auto triples = random_triples(4, 21);
  const double eps = 0.1;
  const auto batch = ptrs(triples);
  auto loss = train::bidirectional_loss<double>(*model, batch, Context::kPseudo, eps, models::RunMode{});
  // Per-direction mean over all target positions of the batch.
  double fsum = 0.0, bsum = 0.0;
  std::size_t fn = 0, bn = 0;
  for (const auto& t : triples) {
    auto s1 = model->scorer(t.source, true);
    const auto fsteps = stepwise(*s1, Direction::kL2R, t.forward, &*t.pseudo_backward);
    fsum += smoothed_nll(fsteps, t.forward, eps) * static_cast<double>(fsteps.size());
    fn += fsteps.size();
    auto s2 = model->scorer(t.source, true);
    const auto bsteps = stepwise(*s2, Direction::kR2L, t.backward, &*t.pseudo_forward);
    bsum += smoothed_nll(bsteps, t.backward, eps) * static_cast<double>(bsteps.size());
    bn += bsteps.size();
  }
  EXPECT_NEAR(loss.forward, fsum / static_cast<double>(fn), 1e-10);
  EXPECT_NEAR(loss.backward, bsum / static_cast<double>(bn), 1e-10);
  EXPECT_NEAR(loss.total.item(), loss.forward + loss.backward, 1e-12);
}

TEST_P(LossOracle, NoInteractionLossMatchesSequenceLogProb) {
  auto model = train::make_model<double>(tiny_spec(GetParam()));
  auto triples = random_triples(3, 5);
  for (const auto& t : triples) {
    const data::TrainingTriple* one = &t;
    auto loss = train::no_interaction_loss<double>(*model, std::span(&one, 1), 0.0, models::RunMode{});
    auto s1 = model->scorer(t.source, false);
    auto s2 = model->scorer(t.source, false);
    const double n = static_cast<double>(t.forward.size() + 1);
    EXPECT_NEAR(loss.forward, -models::sequence_log_prob(*s1, Direction::kL2R, t.forward) / n, 1e-10);
    EXPECT_NEAR(loss.backward, -models::sequence_log_prob(*s2, Direction::kR2L, t.backward) / n, 1e-10);
  }
}

TEST_P(LossOracle, ContextGradientRespectsVisibility) {
  auto model = train::make_model<double>(tiny_spec(GetParam()));
  std::mt19937_64 rng(9);
  const auto triples = random_triples(30, 77);
  std::size_t nonzero_visible = 0;
  for (const auto& t : triples) {
    for (auto dir : {Direction::kL2R, Direction::kR2L}) {
      for (auto ctx : {Context::kGold, Context::kPseudo}) {
        for (std::size_t i = 0; i <= t.forward.size(); ++i) {
          const auto prof = train::context_gradient_profile(*model, t, dir, i, ctx);
          for (std::size_t j = i; j < prof.size(); ++j) ASSERT_EQ(prof[j], 0.0) << "position " << i << " ctx " << j;
          for (std::size_t j = 0; j < std::min(i, prof.size()); ++j) nonzero_visible += prof[j] > 0.0;
        }
      }
    }
  }
  EXPECT_GT(nonzero_visible, 0u);
}

TEST_P(LossOracle, GradientCheck) {
  auto model = train::make_model<double>(tiny_spec(GetParam()));
  auto triples = random_triples(2, 13);
  const auto batch = ptrs(triples);
  std::vector<ad::Tensor<double>> params;
  for (const auto& e : model->params().entries()) params.push_back(e.tensor);
  auto f = [&] {
    return train::bidirectional_loss<double>(*model, batch, Context::kPseudo, 0.1, models::RunMode{}).total;
  };
  const auto r = ad::grad_check(f, params);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_EQ(r.flagged_nondifferentiable, 0u);
}

INSTANTIATE_TEST_SUITE_P(Architectures, LossOracle, ::testing::Values("transformer", "lstm"));

TEST(Loss, LambdaZeroMakesContextIrrelevant) {
  auto model = train::make_model<double>(tiny_spec("transformer"));
  model->params().get("lambda").node()->value[0] = 0.0;
  const auto triples = random_triples(5, 3);
  const auto batch = ptrs(triples);
  const auto a = train::bidirectional_loss<double>(*model, batch, Context::kPseudo, 0.1, models::RunMode{});
  const auto b = train::no_interaction_loss<double>(*model, batch, 0.1, models::RunMode{});
  EXPECT_EQ(a.forward, b.forward);
  EXPECT_EQ(a.backward, b.backward);
}

TEST(Loss, ConfigurationErrors) {
  auto model = train::make_model<double>(tiny_spec("transformer"));
  auto triples = random_triples(2, 3);
  triples[1].pseudo_forward.reset();
  const auto batch = ptrs(triples);
  EXPECT_THROW(train::bidirectional_loss<double>(*model, batch, Context::kPseudo, 0.1, models::RunMode{}),
               train::ConfigError);
  auto spec = tiny_spec("transformer");
  spec.transformer.baseline = true;
  auto base = train::make_model<double>(spec);
  EXPECT_THROW(train::bidirectional_loss<double>(*base, batch, Context::kGold, 0.1, models::RunMode{}),
               train::ConfigError);
  EXPECT_NO_THROW(train::no_interaction_loss<double>(*base, batch, 0.1, models::RunMode{}));
  spec.architecture = "rnn";
  EXPECT_THROW(train::make_model<double>(spec), train::ConfigError);
}

TEST(Config, Validation) {
  train::TrainingConfig c;
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.fine_tune_fraction = 0.0;
  EXPECT_THROW(bad.validate(), train::ConfigError);
  bad = c;
  bad.fine_tune_fraction = 1.5;
  EXPECT_THROW(bad.validate(), train::ConfigError);
  bad = c;
  bad.beta2 = 1.0;
  EXPECT_THROW(bad.validate(), train::ConfigError);
  bad = c;
  bad.label_smoothing = 1.0;
  EXPECT_THROW(bad.validate(), train::ConfigError);
  bad = c;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), train::ConfigError);
}

TEST(Subset, SizesAndDeterminism) {
  EXPECT_EQ(train::sample_subset(1000, 0.1, 4).size(), 100u);
  const auto all = train::sample_subset(37, 1.0, 4);
  ASSERT_EQ(all.size(), 37u);
  for (std::size_t i = 0; i < 37; ++i) EXPECT_EQ(all[i], i);
  const auto a = train::sample_subset(500, 0.3, 11), b = train::sample_subset(500, 0.3, 11);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), a.size());
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_NE(a, train::sample_subset(500, 0.3, 12));
  EXPECT_EQ(train::sample_subset(5, 0.01, 1).size(), 1u);
}

TEST(Pseudo, BackwardKeepsGenerationOrderAndIsDeterministic) {
  auto model = train::make_model<float>(tiny_spec("transformer"));
  auto triples = random_triples(6, 8);
  train::TrainingConfig c;
  c.pseudo_max_len = 6;
  const auto a = train::generate_pseudo_targets(*model, triples, c);
  const auto b = train::generate_pseudo_targets(*model, triples, c);
  ASSERT_EQ(a.triples.size(), 6u);
  EXPECT_EQ(a.skipped, 0u);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(a.triples[k].pseudo_forward, b.triples[k].pseudo_forward);
    EXPECT_EQ(a.triples[k].pseudo_backward, b.triples[k].pseudo_backward);
    auto s = model->scorer(triples[k].source, false);
    search::BeamConfig beam;
    beam.beam = 1;
    beam.max_len = 6;
    auto res = search::unidirectional_beam_search(*s, Direction::kR2L, beam);
    auto reading = res.tokens;
    std::vector<data::TokenId> gen(reading.rbegin(), reading.rend());
    EXPECT_EQ(*a.triples[k].pseudo_backward, gen);
  }
}

TEST(Pseudo, FailuresAreSkippedAndCounted) {
  auto model = train::make_model<float>(tiny_spec("transformer"));
  auto triples = random_triples(4, 8);
  triples[2].source.clear();
  train::TrainingConfig c;
  c.pseudo_max_len = 4;
  const auto r = train::generate_pseudo_targets(*model, triples, c);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.triples.size(), 3u);
}

TEST(Training, OverfitLossDoesNotRise) {
  auto spec = tiny_spec("transformer");
  spec.transformer.d_model = 16;
  spec.transformer.d_ff = 32;
  auto model = train::make_model<float>(spec);
  const auto triples = random_triples(64, 31);
  train::TrainingConfig c;
  c.batch_size = 16;
  c.warmup = 20;
  c.lr_scale = 2.0;
  c.patience = 100;
  train::TrainingLog log;
  train::train_stage(*model, triples, {}, train::Objective::kNoInteraction, 8, c, 16, log, "overfit");
  ASSERT_EQ(log.rows.size(), 8u);
  for (std::size_t e = 1; e < log.rows.size(); ++e)
    EXPECT_LE(log.rows[e].train_loss, log.rows[e - 1].train_loss * 1.05) << "epoch " << e;
  EXPECT_LT(log.rows.back().train_loss, log.rows.front().train_loss);
}

TEST(Training, EarlyStopRestoresBest) {
  auto model = train::make_model<float>(tiny_spec("lstm"));
  const auto train_set = random_triples(32, 1);
  const auto valid = random_triples(16, 2);
  train::TrainingConfig c;
  c.batch_size = 16;
  c.patience = 1;
  c.eval_every = 1;
  c.lr_scale = 40.0;  // unstable on purpose
  train::TrainingLog log;
  auto r = train::train_stage(*model, train_set, valid, train::Objective::kNoInteraction, 50, c, 8, log, "s");
  ASSERT_TRUE(r.early_stopped);
  double best = 1e300;
  for (const auto& row : log.rows) best = std::min(best, row.valid_loss);
  EXPECT_EQ(r.best_valid_loss, best);
  ad::NoGradGuard g;
  const auto b = ptrs(valid);
  const double now = train::no_interaction_loss<float>(*model, b, c.label_smoothing, models::RunMode{}).total.item();
  EXPECT_NEAR(now, best, 1e-5);
}

TEST(Training, LogFormat) {
  train::TrainingLog log;
  log.add({"stage1", 10, 0.001, 2.5, 2.25, 1.5});
  std::ostringstream os;
  log.write(os);
  EXPECT_EQ(os.str(), "step\tlr\ttrain_loss\tvalid_loss\tseconds\n# stage1\n10\t0.001\t2.5\t2.25\t1.5\n");
}

TEST(Strategies, FineTuneSubsetSizes) {
  const auto spec = tiny_spec("transformer");
  const auto data = random_triples(40, 4);
  const auto valid = random_triples(5, 5);
  train::TrainingConfig c;
  c.max_epochs = 1;
  c.batch_size = 8;
  c.pseudo_max_len = 6;
  c.fine_tune_fraction = 0.1;
  auto r = train::fine_tune<float>(spec, data, valid, c);
  EXPECT_EQ(r.stage2_examples, 4u);
  c.fine_tune_fraction = 1.0;
  auto full = train::fine_tune<float>(spec, data, valid, c);
  EXPECT_EQ(full.stage2_examples, 40u);
  ASSERT_TRUE(full.bidirectional);
  ASSERT_TRUE(full.no_interaction);
}

TEST(Strategies, TwoPassIsReproducible) {
  const auto spec = tiny_spec("lstm");
  const auto data = random_triples(24, 6);
  const auto valid = random_triples(4, 7);
  train::TrainingConfig c;
  c.max_epochs = 2;
  c.batch_size = 8;
  c.pseudo_max_len = 6;
  auto a = train::two_pass_train<float>(spec, data, valid, c);
  auto b = train::two_pass_train<float>(spec, data, valid, c);
  EXPECT_EQ(a.stage2_examples, 24u);
  const auto& pa = a.bidirectional->params().entries();
  const auto& pb = b.bidirectional->params().entries();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    const auto va = pa[k].tensor.values(), vb = pb[k].tensor.values();
    ASSERT_TRUE(std::equal(va.begin(), va.end(), vb.begin())) << pa[k].name;
  }
  EXPECT_GE(a.log.rows.size(), 4u);
}
