#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "sbi/search.hpp"
#include "sbi/table_scorer.hpp"

using namespace sbi::search;
namespace data = sbi::data;

namespace {

constexpr TokenId kA = 6;
constexpr TokenId kB = 7;
constexpr TokenId kEos = data::kEos;
const std::vector<TokenId> kTiny = {kEos, kA, kB};
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Written out independently of the library comparator.
bool oracle_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.penalized > b.penalized) return true;
  if (a.penalized < b.penalized) return false;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  for (std::size_t k = 0; k < a.tokens.size(); ++k)
    if (a.tokens[k] != b.tokens[k]) return a.tokens[k] < b.tokens[k];
  return a.direction == Direction::kL2R && b.direction == Direction::kR2L;
}

double oracle_penalty(double s, std::size_t len, double alpha) {
  return s / std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

Hypothesis root(Direction d) {
  Hypothesis h;
  h.direction = d;
  h.tokens = {direction_tag(d)};
  return h;
}

Hypothesis make_hyp(Direction d, std::vector<TokenId> generated, double score, double alpha = 0.0) {
  Hypothesis h = root(d);
  h.tokens.insert(h.tokens.end(), generated.begin(), generated.end());
  h.score = score;
  h.penalized = oracle_penalty(score, h.generated(), alpha);
  h.finished = !generated.empty() && generated.back() == kEos;
  return h;
}

// Emits a fixed script per direction: probability p on the scripted token,
// the rest spread over the other tiny-vocab tokens.
class ScriptedScorer final : public Scorer {
 public:
  ScriptedScorer(std::vector<TokenId> l2r, double p_l2r, std::vector<TokenId> r2l, double p_r2l)
      : script_{std::move(l2r), std::move(r2l)}, p_{p_l2r, p_r2l} {}
  std::size_t vocab_size() const override { return 8; }
  Cache start(Direction) override { return nullptr; }
  std::vector<StepOutput> step(std::span<const Hypothesis* const> hyps,
                               std::span<const Hypothesis* const>) override {
    std::vector<StepOutput> out;
    for (const auto* h : hyps) {
      const auto d = static_cast<std::size_t>(h->direction);
      const auto g = h->generated();
      const TokenId want = g < script_[d].size() ? script_[d][g] : kEos;
      std::vector<double> lp(8, kNegInf);
      for (auto t : kTiny) lp[static_cast<std::size_t>(t)] = std::log((1.0 - p_[d]) / 2.0);
      lp[static_cast<std::size_t>(want)] = std::log(p_[d]);
      out.push_back({lp, nullptr});
    }
    count_evaluations(hyps.size());
    return out;
  }

 private:
  std::vector<TokenId> script_[2];
  double p_[2];
};

class UniformScorer final : public Scorer {
 public:
  std::size_t vocab_size() const override { return 8; }
  Cache start(Direction) override { return nullptr; }
  std::vector<StepOutput> step(std::span<const Hypothesis* const> hyps,
                               std::span<const Hypothesis* const>) override {
    std::vector<StepOutput> out;
    for (std::size_t r = 0; r < hyps.size(); ++r) {
      std::vector<double> lp(8, kNegInf);
      for (auto t : kTiny) lp[static_cast<std::size_t>(t)] = -std::log(3.0);
      out.push_back({lp, nullptr});
    }
    count_evaluations(hyps.size());
    return out;
  }
};

class UnnormalizedScorer final : public Scorer {
 public:
  std::size_t vocab_size() const override { return 8; }
  Cache start(Direction) override { return nullptr; }
  std::vector<StepOutput> step(std::span<const Hypothesis* const> hyps,
                               std::span<const Hypothesis* const>) override {
    std::vector<StepOutput> out;
    for (std::size_t r = 0; r < hyps.size(); ++r) {
      std::vector<double> lp(8, kNegInf);
      for (auto t : kTiny) lp[static_cast<std::size_t>(t)] = std::log(0.3);
      out.push_back({lp, nullptr});
    }
    return out;
  }
};

// Hand-written conditional table: (own tokens, visible opposite tokens) -> p(eos, a, b).
class HandTableScorer final : public Scorer {
 public:
  using Key = std::pair<std::vector<TokenId>, std::vector<TokenId>>;
  std::map<Key, std::array<double, 3>> table;
  std::size_t vocab_size() const override { return 8; }
  Cache start(Direction) override { return nullptr; }
  std::vector<StepOutput> step(std::span<const Hypothesis* const> hyps,
                               std::span<const Hypothesis* const> opposite) override {
    std::vector<StepOutput> out;
    for (std::size_t r = 0; r < hyps.size(); ++r) {
      const auto& own = hyps[r]->tokens;
      std::vector<TokenId> vis;
      if (opposite[r] != nullptr)
        for (std::size_t k = 0; k + 1 < own.size() && k < opposite[r]->tokens.size(); ++k)
          vis.push_back(opposite[r]->tokens[k]);
      const auto& p = table.at({own, vis});
      std::vector<double> lp(8, kNegInf);
      for (std::size_t k = 0; k < 3; ++k) lp[static_cast<std::size_t>(kTiny[k])] = std::log(p[k]);
      out.push_back({lp, nullptr});
    }
    return out;
  }
};

// Every sequence over the tiny vocabulary of generated length <= max_len,
// scored in one direction without opposite context; returns the best complete.
Hypothesis exhaustive_unidirectional(const TableScorer& s, Direction d, std::size_t max_len, double alpha) {
  std::vector<Hypothesis> frontier = {root(d)};
  std::vector<Hypothesis> complete;
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<Hypothesis> next;
    for (const auto& h : frontier) {
      const auto dist = s.distribution(d, h.tokens, {});
      for (auto t : kTiny) {
        Hypothesis c = h;
        c.tokens.push_back(t);
        c.score += dist[static_cast<std::size_t>(t)];
        c.penalized = oracle_penalty(c.score, c.generated(), alpha);
        c.finished = t == kEos;
        (c.finished ? complete : next).push_back(c);
      }
    }
    frontier = std::move(next);
  }
  return *std::min_element(complete.begin(), complete.end(), oracle_before);
}

// Full enumeration of both directions in lockstep. The hypothesis at rank r
// among unfinished sequences of one direction sees the opposite direction's
// unfinished sequence at rank min(r, size-1) from the same step.
Hypothesis exhaustive_sync(const TableScorer& s, std::size_t max_len, double alpha) {
  std::vector<Hypothesis> open[2] = {{root(Direction::kL2R)}, {root(Direction::kR2L)}};
  std::vector<Hypothesis> complete;
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<Hypothesis> next[2];
    for (std::size_t d = 0; d < 2; ++d) {
      std::vector<Hypothesis> ranked = open[d];
      std::vector<Hypothesis> other = open[1 - d];
      std::sort(ranked.begin(), ranked.end(), oracle_before);
      std::sort(other.begin(), other.end(), oracle_before);
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto& h = ranked[r];
        const auto& opp = other[std::min(r, other.size() - 1)];
        std::vector<TokenId> vis(opp.tokens.begin(),
                                 opp.tokens.begin() + static_cast<std::ptrdiff_t>(
                                                          std::min(h.tokens.size() - 1, opp.tokens.size())));
        const auto dist = s.distribution(h.direction, h.tokens, vis);
        for (auto t : kTiny) {
          Hypothesis c = h;
          c.tokens.push_back(t);
          c.score += dist[static_cast<std::size_t>(t)];
          c.penalized = oracle_penalty(c.score, c.generated(), alpha);
          c.finished = t == kEos;
          (c.finished ? complete : next[d]).push_back(c);
        }
      }
    }
    open[0] = std::move(next[0]);
    open[1] = std::move(next[1]);
  }
  return *std::min_element(complete.begin(), complete.end(), oracle_before);
}

std::vector<TokenId> greedy(const TableScorer& s, Direction d, std::size_t max_len) {
  std::vector<TokenId> own = {direction_tag(d)};
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto dist = s.distribution(d, own, {});
    TokenId best = kEos;
    for (auto t : kTiny)
      if (dist[static_cast<std::size_t>(t)] > dist[static_cast<std::size_t>(best)]) best = t;
    own.push_back(best);
    if (best == kEos) break;
  }
  std::vector<TokenId> out;
  for (std::size_t k = 1; k < own.size(); ++k)
    if (own[k] != kEos) out.push_back(own[k]);
  if (d == Direction::kR2L) std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(LengthPenalty, ReducesToLogprob) {
  EXPECT_EQ(length_penalized_score(-3.25, 9, 0.0), -3.25);
  EXPECT_EQ(length_penalized_score(-3.25, 1, 0.6), -3.25);
  EXPECT_EQ(length_penalized_score(-3.25, 1, 2.0), -3.25);
}

TEST(LengthPenalty, FormulaValue) {
  EXPECT_NEAR(length_penalized_score(-6.0, 7, 0.6), -6.0 / std::pow(2.0, 0.6), 1e-12);
}

TEST(TieOrder, ScoreThenLengthThenTokensThenDirection) {
  auto a = make_hyp(Direction::kL2R, {kA}, -1.0);
  auto b = make_hyp(Direction::kL2R, {kA}, -2.0);
  EXPECT_TRUE(ranks_before(a, b));
  auto c = make_hyp(Direction::kL2R, {kA, kB}, -1.0);
  c.penalized = a.penalized;
  EXPECT_TRUE(ranks_before(a, c));
  auto e = make_hyp(Direction::kL2R, {kB}, -1.0);
  EXPECT_TRUE(ranks_before(a, e));
  auto f = a;
  f.direction = Direction::kR2L;
  EXPECT_TRUE(ranks_before(a, f));
  EXPECT_FALSE(ranks_before(f, a));
  EXPECT_FALSE(ranks_before(a, a));
}

TEST(Pairing, RankClampedToOppositeSize) {
  std::vector<Hypothesis> opp = {make_hyp(Direction::kR2L, {kA}, -1), make_hyp(Direction::kR2L, {kB}, -2)};
  EXPECT_EQ(paired_opposite(0, opp), &opp[0]);
  EXPECT_EQ(paired_opposite(1, opp), &opp[1]);
  EXPECT_EQ(paired_opposite(5, opp), &opp[1]);
  EXPECT_EQ(paired_opposite(0, {}), nullptr);
}

TEST(SbInfer, EmptyOppositeEqualsUnidirectional) {
  TableScorer s(8, kTiny, 11);
  std::vector<Hypothesis> own = {make_hyp(Direction::kL2R, {kA}, -0.5)};
  auto cand = own[0];
  cand.tokens.push_back(kB);
  const double got = sb_infer(s, cand, own, {});
  EXPECT_EQ(got, s.distribution(Direction::kL2R, own[0].tokens, {})[kB]);
}

TEST(SbInfer, DeterministicScorerGivesZero) {
  ScriptedScorer s({kA, kB}, 1.0, {kB, kA}, 1.0);
  std::vector<Hypothesis> own = {root(Direction::kL2R)};
  auto cand = own[0];
  cand.tokens.push_back(kA);
  EXPECT_EQ(sb_infer(s, cand, own, {}), 0.0);
}

TEST(SbInfer, MatchesHandTable) {
  HandTableScorer s;
  const TokenId l = data::kL2R;
  const TokenId r = data::kR2L;
  // Step 1 sees nothing of the opposite side; step 2 sees its tag.
  s.table[{{l}, {}}] = {0.1, 0.6, 0.3};
  s.table[{{l, kA}, {r}}] = {0.2, 0.5, 0.3};
  s.table[{{l, kB}, {r}}] = {0.7, 0.2, 0.1};
  std::vector<Hypothesis> own = {make_hyp(Direction::kL2R, {kA}, std::log(0.6)),
                                 make_hyp(Direction::kL2R, {kB}, std::log(0.3))};
  std::vector<Hypothesis> opp = {make_hyp(Direction::kR2L, {kB}, -0.1)};
  auto cand = own[1];
  cand.tokens.push_back(kEos);
  EXPECT_NEAR(sb_infer(s, cand, own, opp), std::log(0.7), 1e-15);
  auto cand2 = own[0];
  cand2.tokens.push_back(kB);
  EXPECT_NEAR(sb_infer(s, cand2, own, opp), std::log(0.3), 1e-15);
}

TEST(SbInfer, RejectsUnrelatedCandidate) {
  TableScorer s(8, kTiny, 1);
  std::vector<Hypothesis> own = {make_hyp(Direction::kL2R, {kA}, -0.5)};
  auto cand = make_hyp(Direction::kL2R, {kB, kA}, 0);
  EXPECT_THROW(sb_infer(s, cand, own, {}), std::invalid_argument);
}

TEST(ExpandHypo, CountingExample) {
  TableScorer s(8, kTiny, 3);
  std::vector<Hypothesis> own = {root(Direction::kL2R)};
  auto kept = expand_hypo(s, own, {}, 2, 0.6);
  EXPECT_EQ(s.evaluations(), 1u);
  ASSERT_EQ(kept.size(), 2u);
  const auto dist = s.distribution(Direction::kL2R, own[0].tokens, {});
  std::vector<TokenId> order = kTiny;
  std::sort(order.begin(), order.end(), [&](TokenId x, TokenId y) { return dist[x] > dist[y]; });
  EXPECT_EQ(kept[0].tokens.back(), order[0]);
  EXPECT_EQ(kept[1].tokens.back(), order[1]);
  EXPECT_EQ(kept[0].score, dist[order[0]]);
}

TEST(ExpandHypo, TiesKeepLowerTokensFirst) {
  UniformScorer s;
  std::vector<Hypothesis> own = {root(Direction::kL2R)};
  auto kept = expand_hypo(s, own, {}, 2, 0.6);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].tokens.back(), kEos);
  EXPECT_EQ(kept[1].tokens.back(), kA);
  EXPECT_TRUE(kept[0].finished);
  EXPECT_FALSE(kept[1].finished);
}

TEST(ExpandHypo, MatchesBruteForceTopK) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TableScorer s(8, kTiny, seed);
    std::vector<Hypothesis> own = {make_hyp(Direction::kR2L, {kA, kB}, -1.3, 0.6),
                                   make_hyp(Direction::kR2L, {kB, kB}, -1.1, 0.6),
                                   make_hyp(Direction::kR2L, {kA, kA}, -2.0, 0.6)};
    std::vector<Hypothesis> opp = {make_hyp(Direction::kL2R, {kB, kA}, -0.4, 0.6),
                                   make_hyp(Direction::kL2R, {kA, kA}, -0.9, 0.6)};
    auto kept = expand_hypo(s, own, opp, 4, 0.6);

    std::vector<Hypothesis> all;
    for (std::size_t r = 0; r < own.size(); ++r) {
      const auto& o = opp[std::min(r, opp.size() - 1)];
      std::vector<TokenId> vis(o.tokens.begin(), o.tokens.begin() + 2);
      const auto dist = s.distribution(Direction::kR2L, own[r].tokens, vis);
      for (auto t : kTiny) {
        Hypothesis c = own[r];
        c.tokens.push_back(t);
        c.score += dist[t];
        c.penalized = oracle_penalty(c.score, 3, 0.6);
        all.push_back(c);
      }
    }
    std::sort(all.begin(), all.end(), oracle_before);
    ASSERT_EQ(kept.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(kept[k].tokens, all[k].tokens) << "seed " << seed << " rank " << k;
      EXPECT_NEAR(kept[k].penalized, all[k].penalized, 1e-12);
    }
  }
}

TEST(ExpandHypo, NormalizationAuditFails) {
  UnnormalizedScorer s;
  std::vector<Hypothesis> own = {root(Direction::kL2R)};
  EXPECT_THROW(expand_hypo(s, own, {}, 2, 0.6), ScorerError);
  BeamConfig cfg;
  EXPECT_THROW(sync_bidi_beam_search(s, cfg), ScorerError);
}

TEST(ExpandHypo, NeverProposesReservedTokens) {
  std::vector<TokenId> everything;
  for (TokenId t = 0; t < 12; ++t) everything.push_back(t);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    TableScorer s(12, everything, seed);
    std::vector<Hypothesis> own = {root(Direction::kL2R)};
    for (const auto& h : expand_hypo(s, own, {}, 12, 0.6))
      EXPECT_TRUE(h.tokens.back() == kEos || !data::is_reserved(h.tokens.back()));
  }
}

TEST(UpdateHypo, NoFinishedCandidates) {
  std::vector<Hypothesis> tmp = {make_hyp(Direction::kL2R, {kA}, -1), make_hyp(Direction::kL2R, {kB}, -2)};
  std::vector<Hypothesis> part, complete = {make_hyp(Direction::kR2L, {kEos}, -3)};
  update_hypo(tmp, part, complete, 4);
  ASSERT_EQ(part.size(), 2u);
  EXPECT_EQ(part[0].tokens, tmp[0].tokens);
  EXPECT_EQ(part[1].tokens, tmp[1].tokens);
  EXPECT_EQ(complete.size(), 1u);
}

TEST(UpdateHypo, AllFinished) {
  std::vector<Hypothesis> tmp = {make_hyp(Direction::kL2R, {kEos}, -1), make_hyp(Direction::kL2R, {kA, kEos}, -2)};
  std::vector<Hypothesis> part, complete;
  update_hypo(tmp, part, complete, 4);
  EXPECT_TRUE(part.empty());
  EXPECT_EQ(complete.size(), 2u);
}

TEST(UpdateHypo, MixedPartitionAndCapacity) {
  std::vector<Hypothesis> tmp = {make_hyp(Direction::kL2R, {kA}, -1), make_hyp(Direction::kL2R, {kEos}, -1.5),
                                 make_hyp(Direction::kL2R, {kB}, -2), make_hyp(Direction::kL2R, {kA, kEos}, -2.5),
                                 make_hyp(Direction::kL2R, {kB, kB}, -3), make_hyp(Direction::kL2R, {kB, kEos}, -3.5)};
  for (std::size_t cap : {1u, 2u, 3u, 10u}) {
    std::vector<Hypothesis> part, complete;
    update_hypo(tmp, part, complete, cap);
    std::vector<Hypothesis> want_part, want_complete;
    for (const auto& c : tmp) {
      if (c.tokens.back() == kEos) {
        want_complete.push_back(c);
        if (want_complete.size() >= cap) break;
      } else {
        want_part.push_back(c);
      }
    }
    ASSERT_EQ(part.size(), want_part.size()) << cap;
    ASSERT_EQ(complete.size(), want_complete.size()) << cap;
    for (std::size_t k = 0; k < part.size(); ++k) EXPECT_EQ(part[k].tokens, want_part[k].tokens);
    for (std::size_t k = 0; k < complete.size(); ++k) EXPECT_EQ(complete[k].tokens, want_complete[k].tokens);
  }
}

TEST(SyncSearch, ForcedWinnerL2R) {
  ScriptedScorer s({kA, kB}, 0.9, {kB, kA}, 0.8);
  BeamConfig cfg;
  cfg.beam = 2;
  cfg.max_len = 5;
  auto res = sync_bidi_beam_search(s, cfg);
  EXPECT_EQ(res.tokens, (std::vector<TokenId>{kA, kB}));
  EXPECT_EQ(res.best.direction, Direction::kL2R);
}

TEST(SyncSearch, ForcedWinnerR2LIsReversed) {
  ScriptedScorer s({kA, kB}, 0.8, {kB, kA}, 0.9);
  BeamConfig cfg;
  cfg.beam = 2;
  cfg.max_len = 5;
  auto res = sync_bidi_beam_search(s, cfg);
  EXPECT_EQ(res.best.direction, Direction::kR2L);
  EXPECT_EQ(res.best.tokens, (std::vector<TokenId>{data::kR2L, kB, kA, kEos}));
  EXPECT_EQ(res.tokens, (std::vector<TokenId>{kA, kB}));
}

TEST(SyncSearch, FallsBackToPartialsWithoutCompletions) {
  ScriptedScorer s({kA, kB, kA, kB}, 0.9, {kB, kB, kB, kB}, 0.95);
  BeamConfig cfg;
  cfg.beam = 2;
  cfg.max_len = 3;
  auto res = sync_bidi_beam_search(s, cfg);
  EXPECT_FALSE(res.best.finished);
  EXPECT_EQ(res.best.direction, Direction::kR2L);
  EXPECT_EQ(res.tokens, (std::vector<TokenId>{kB, kB, kB}));
}

TEST(SyncSearch, InvalidConfig) {
  TableScorer s(8, kTiny, 1);
  BeamConfig cfg;
  cfg.max_len = 0;
  EXPECT_THROW(sync_bidi_beam_search(s, cfg), std::invalid_argument);
  EXPECT_THROW(unidirectional_beam_search(s, Direction::kL2R, cfg), std::invalid_argument);
  cfg.max_len = 3;
  cfg.beam = 3;
  EXPECT_THROW(sync_bidi_beam_search(s, cfg), std::invalid_argument);
  cfg.beam = 4;
  cfg.alpha = -0.1;
  EXPECT_THROW(sync_bidi_beam_search(s, cfg), std::invalid_argument);
  cfg.alpha = 0.6;
  cfg.forward = cfg.backward = false;
  EXPECT_THROW(sync_bidi_beam_search(s, cfg), std::invalid_argument);
}

TEST(SyncSearch, MatchesExhaustiveOracle) {
  for (double alpha : {0.0, 0.6, 1.0}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      TableScorer s(8, kTiny, seed);
      BeamConfig cfg;
      cfg.beam = 54;
      cfg.max_len = 3;
      cfg.alpha = alpha;
      auto res = sync_bidi_beam_search(s, cfg);
      auto want = exhaustive_sync(s, 3, alpha);
      EXPECT_EQ(res.best.tokens, want.tokens) << "seed " << seed << " alpha " << alpha;
      EXPECT_NEAR(res.best.score, want.score, 1e-12);
    }
  }
}

TEST(UnidirectionalSearch, MatchesExhaustiveOracle) {
  for (auto d : {Direction::kL2R, Direction::kR2L}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      TableScorer s(8, kTiny, seed);
      BeamConfig cfg;
      cfg.beam = 27;
      cfg.max_len = 3;
      auto res = unidirectional_beam_search(s, d, cfg);
      auto want = exhaustive_unidirectional(s, d, 3, cfg.alpha);
      EXPECT_EQ(res.best.tokens, want.tokens) << "seed " << seed;
      EXPECT_EQ(res.tokens, resolve_output(want));
    }
  }
}

TEST(UnidirectionalSearch, BeamOneIsGreedy) {
  for (auto d : {Direction::kL2R, Direction::kR2L}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      TableScorer s(8, kTiny, seed);
      BeamConfig cfg;
      cfg.beam = 1;
      cfg.max_len = 6;
      EXPECT_EQ(unidirectional_beam_search(s, d, cfg).tokens, greedy(s, d, 6)) << seed;
    }
  }
}

TEST(UnidirectionalSearch, ForcedOutput) {
  ScriptedScorer s({kB, kA, kA}, 1.0, {kA, kA, kB}, 1.0);
  BeamConfig cfg;
  cfg.beam = 3;
  EXPECT_EQ(unidirectional_beam_search(s, Direction::kL2R, cfg).tokens, (std::vector<TokenId>{kB, kA, kA}));
  EXPECT_EQ(unidirectional_beam_search(s, Direction::kR2L, cfg).tokens, (std::vector<TokenId>{kB, kA, kA}));
}

TEST(SyncSearch, BackwardDisabledEqualsHalfBeam) {
  const std::vector<TokenId> vocab = {kEos, 6, 7, 8, 9, 10};
  for (std::size_t k : {2u, 4u, 6u, 8u}) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      TableScorer s(11, vocab, seed);
      BeamConfig cfg;
      cfg.beam = k;
      cfg.max_len = 8;
      cfg.backward = false;
      auto sync = sync_bidi_beam_search(s, cfg);
      BeamConfig half = cfg;
      half.beam = k / 2;
      auto uni = unidirectional_beam_search(s, Direction::kL2R, half);
      EXPECT_EQ(sync.best.tokens, uni.best.tokens) << "K " << k << " seed " << seed;
      EXPECT_EQ(sync.evaluations_per_step, uni.evaluations_per_step);
    }
  }
}

TEST(SyncSearch, HalfBeamBoundAndNoReservedOutput) {
  std::vector<TokenId> everything;
  for (TokenId t = 0; t < 14; ++t) everything.push_back(t);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    TableScorer s(14, everything, seed);
    BeamConfig cfg;
    cfg.beam = 6;
    cfg.max_len = 10;
    auto res = sync_bidi_beam_search(s, cfg);
    for (auto t : res.tokens) EXPECT_FALSE(data::is_reserved(t)) << seed;
    for (auto n : res.evaluations_per_step) EXPECT_LE(n, cfg.beam);
  }
}

TEST(SyncSearch, Deterministic) {
  const std::vector<TokenId> vocab = {kEos, 6, 7, 8, 9};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    BeamConfig cfg;
    cfg.beam = 4;
    cfg.max_len = 12;
    TableScorer s1(10, vocab, seed), s2(10, vocab, seed);
    auto a = sync_bidi_beam_search(s1, cfg);
    auto b = sync_bidi_beam_search(s2, cfg);
    EXPECT_EQ(a.best.tokens, b.best.tokens);
    EXPECT_EQ(a.best.score, b.best.score);
    EXPECT_EQ(a.evaluations_per_step, b.evaluations_per_step);
  }
}

TEST(SyncSearch, EvaluationsMatchUnidirectionalAtSameBeam) {
  // </s> is nearly impossible, so no list shrinks before max_len.
  class LateEos final : public Scorer {
   public:
    std::size_t vocab_size() const override { return 16; }
    Cache start(Direction) override { return nullptr; }
    std::vector<StepOutput> step(std::span<const Hypothesis* const> hyps,
                                 std::span<const Hypothesis* const>) override {
      std::vector<double> lp(16, kNegInf);
      lp[kEos] = std::log(1e-12);
      for (std::size_t t = 6; t < 16; ++t) lp[t] = std::log((1.0 - 1e-12) / 10.0);
      count_evaluations(hyps.size());
      return std::vector<StepOutput>(hyps.size(), StepOutput{lp, nullptr});
    }
  };
  for (std::size_t k : {2u, 4u, 8u}) {
    BeamConfig cfg;
    cfg.beam = k;
    cfg.max_len = 6;
    LateEos a, b;
    auto sync = sync_bidi_beam_search(a, cfg);
    auto uni = unidirectional_beam_search(b, Direction::kL2R, cfg);
    ASSERT_EQ(sync.evaluations_per_step.size(), 6u);
    ASSERT_EQ(uni.evaluations_per_step.size(), 6u);
    EXPECT_EQ(sync.evaluations_per_step[0], 2u);
    EXPECT_EQ(uni.evaluations_per_step[0], 1u);
    for (std::size_t i = 1; i < 6; ++i) {
      EXPECT_EQ(sync.evaluations_per_step[i], k) << "K " << k << " step " << i;
      EXPECT_EQ(uni.evaluations_per_step[i], k) << "K " << k << " step " << i;
    }
  }
}

TEST(SyncSearch, FrozenContextWhenOppositeFinishes) {
  // R2L finishes at step 1; L2R keeps its last list as context.
  HandTableScorer s;
  const TokenId l = data::kL2R;
  const TokenId r = data::kR2L;
  s.table[{{l}, {}}] = {0.01, 0.98, 0.01};
  s.table[{{r}, {}}] = {0.98, 0.01, 0.01};
  s.table[{{l, kA}, {r}}] = {0.01, 0.01, 0.98};
  s.table[{{l, kA, kB}, {r}}] = {0.98, 0.01, 0.01};
  BeamConfig cfg;
  cfg.beam = 2;
  cfg.max_len = 4;
  cfg.alpha = 0.0;
  auto res = sync_bidi_beam_search(s, cfg);
  // Both completions are in B; the R2L empty output scores log 0.98.
  EXPECT_EQ(res.best.direction, Direction::kR2L);
  EXPECT_TRUE(res.tokens.empty());
  EXPECT_EQ(res.steps, 3u);
}
