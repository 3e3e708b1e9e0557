#include "sbi/search.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace sbi::search {

namespace {

constexpr double kNormTolerance = 1e-5;

bool allowed_token(TokenId t) { return t == data::kEos || !data::is_reserved(t); }

void audit(const StepOutput& out, std::size_t vocab) {
  if (out.log_probs.size() != vocab) {
    std::ostringstream msg;
    msg << "scorer returned " << out.log_probs.size() << " log-probs for a vocabulary of " << vocab;
    throw ScorerError(msg.str());
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : out.log_probs) {
    if (std::isnan(v) || v > 0.0) throw ScorerError("scorer returned an invalid log-probability");
    peak = std::max(peak, v);
  }
  if (!std::isfinite(peak)) throw ScorerError("scorer assigned zero probability to every token");
  double acc = 0.0;
  for (double v : out.log_probs) acc += std::exp(v - peak);
  const double lse = peak + std::log(acc);
  if (std::abs(lse) > kNormTolerance) {
    std::ostringstream msg;
    msg << "scorer distribution is not normalized (log-sum-exp " << lse << ")";
    throw ScorerError(msg.str());
  }
}

std::vector<const Hypothesis*> pair_all(std::span<const Hypothesis> own, std::span<const Hypothesis> opposite) {
  std::vector<const Hypothesis*> out(own.size());
  for (std::size_t r = 0; r < own.size(); ++r) out[r] = paired_opposite(r, opposite);
  return out;
}

std::vector<StepOutput> run_step(Scorer& scorer, std::span<const Hypothesis> own,
                                 std::span<const Hypothesis> opposite) {
  std::vector<const Hypothesis*> hyps(own.size());
  for (std::size_t r = 0; r < own.size(); ++r) hyps[r] = &own[r];
  const auto opp = pair_all(own, opposite);
  auto outs = scorer.step(hyps, opp);
  if (outs.size() != own.size()) throw ScorerError("scorer returned the wrong number of distributions");
  for (const auto& o : outs) audit(o, scorer.vocab_size());
  return outs;
}

struct Candidate {
  std::size_t parent;
  TokenId token;
  double score;
  double penalized;
};

double lp(std::size_t length, double alpha) { return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha); }

struct Engine {
  Scorer& scorer;
  std::array<bool, 2> enabled;
  std::size_t half;
  std::size_t capacity;
  std::size_t max_len;
  double alpha;
  bool interact;

  SearchResult run() {
    std::array<std::vector<Hypothesis>, 2> part;
    std::array<std::vector<Hypothesis>, 2> context;  // last nonempty list per direction
    for (std::size_t d = 0; d < 2; ++d) {
      if (!enabled[d]) continue;
      const auto dir = static_cast<Direction>(d);
      Hypothesis h;
      h.direction = dir;
      h.tokens = {direction_tag(dir)};
      h.cache = scorer.start(dir);
      part[d].push_back(std::move(h));
    }
    std::vector<Hypothesis> complete;
    SearchResult result;

    for (std::size_t i = 1; i <= max_len; ++i) {
      if (part[0].empty() && part[1].empty()) break;
      for (std::size_t d = 0; d < 2; ++d)
        if (!part[d].empty()) context[d] = part[d];

      const std::size_t before = scorer.evaluations();
      std::array<std::vector<Hypothesis>, 2> tmp;
      for (std::size_t d = 0; d < 2; ++d) {
        if (part[d].empty()) continue;
        std::span<const Hypothesis> opp;
        if (interact) opp = context[1 - d];
        tmp[d] = expand_hypo(scorer, part[d], opp, half, alpha);
      }
      for (std::size_t d = 0; d < 2; ++d) {
        part[d].clear();
        update_hypo(tmp[d], part[d], complete, capacity);
      }
      result.evaluations_per_step.push_back(scorer.evaluations() - before);
      result.steps = i;

      if (complete.size() >= capacity) {
        double best_complete = -std::numeric_limits<double>::infinity();
        for (const auto& h : complete) best_complete = std::max(best_complete, h.penalized);
        double best_open = -std::numeric_limits<double>::infinity();
        for (const auto& list : part)
          for (const auto& h : list) best_open = std::max(best_open, h.score / lp(max_len, alpha));
        if (best_complete >= best_open) break;
      }
    }

    if (!complete.empty()) {
      result.best = *std::min_element(complete.begin(), complete.end(), ranks_before);
    } else {
      const Hypothesis* fwd = part[0].empty() ? nullptr : &part[0].front();
      const Hypothesis* bwd = part[1].empty() ? nullptr : &part[1].front();
      if (fwd == nullptr && bwd == nullptr) throw std::logic_error("beam search ended with no hypotheses");
      if (fwd != nullptr && (bwd == nullptr || fwd->penalized >= bwd->penalized)) {
        result.best = *fwd;
      } else {
        result.best = *bwd;
      }
    }
    result.best.cache.reset();
    result.tokens = resolve_output(result.best);
    return result;
  }
};

void check_common(const BeamConfig& config) {
  if (config.max_len == 0) throw std::invalid_argument("max_len must be at least 1");
  if (!(config.alpha >= 0.0)) throw std::invalid_argument("length penalty alpha must be non-negative");
}

}  // namespace

double length_penalized_score(double logprob, std::size_t length, double alpha) {
  return logprob / lp(length, alpha);
}

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.penalized != b.penalized) return a.penalized > b.penalized;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return a.direction < b.direction;
}

const Hypothesis* paired_opposite(std::size_t rank, std::span<const Hypothesis> opposite) {
  if (opposite.empty()) return nullptr;
  return &opposite[std::min(rank, opposite.size() - 1)];
}

double sb_infer(Scorer& scorer, const Hypothesis& cand, std::span<const Hypothesis> own,
                std::span<const Hypothesis> opposite) {
  if (cand.tokens.size() < 2) throw std::invalid_argument("candidate has no generated token");
  for (std::size_t r = 0; r < own.size(); ++r) {
    const auto& parent = own[r];
    if (parent.direction != cand.direction || parent.tokens.size() + 1 != cand.tokens.size() ||
        !std::equal(parent.tokens.begin(), parent.tokens.end(), cand.tokens.begin()))
      continue;
    const Hypothesis* hyp = &parent;
    const Hypothesis* opp = paired_opposite(r, opposite);
    auto outs = scorer.step(std::span<const Hypothesis* const>(&hyp, 1), std::span<const Hypothesis* const>(&opp, 1));
    if (outs.size() != 1) throw ScorerError("scorer returned the wrong number of distributions");
    audit(outs[0], scorer.vocab_size());
    const auto t = cand.tokens.back();
    if (t < 0 || static_cast<std::size_t>(t) >= outs[0].log_probs.size())
      throw std::out_of_range("candidate token outside the vocabulary");
    return outs[0].log_probs[static_cast<std::size_t>(t)];
  }
  throw std::invalid_argument("candidate does not extend any hypothesis in the list");
}

std::vector<Hypothesis> expand_hypo(Scorer& scorer, std::span<const Hypothesis> own,
                                    std::span<const Hypothesis> opposite, std::size_t keep, double alpha) {
  if (own.empty()) throw std::invalid_argument("expand_hypo needs at least one partial hypothesis");
  auto outs = run_step(scorer, own, opposite);

  std::vector<Candidate> cands;
  cands.reserve(own.size() * scorer.vocab_size());
  for (std::size_t r = 0; r < own.size(); ++r) {
    const auto& lps = outs[r].log_probs;
    const std::size_t length = own[r].generated() + 1;
    for (std::size_t t = 0; t < lps.size(); ++t) {
      const auto tok = static_cast<TokenId>(t);
      if (!allowed_token(tok) || !std::isfinite(lps[t])) continue;
      const double s = own[r].score + lps[t];
      cands.push_back({r, tok, s, length_penalized_score(s, length, alpha)});
    }
  }
  // Parents share a direction and a length, so the token order reduces to
  // (parent tokens, new token).
  auto before = [&](const Candidate& a, const Candidate& b) {
    if (a.penalized != b.penalized) return a.penalized > b.penalized;
    if (a.parent != b.parent) {
      const auto& ta = own[a.parent].tokens;
      const auto& tb = own[b.parent].tokens;
      if (ta.size() != tb.size()) return ta.size() < tb.size();
      if (ta != tb) return ta < tb;
    }
    return a.token < b.token;
  };
  const std::size_t n = std::min(keep, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end(), before);

  std::vector<Hypothesis> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& c = cands[k];
    const auto& parent = own[c.parent];
    Hypothesis h;
    h.direction = parent.direction;
    h.tokens = parent.tokens;
    h.tokens.push_back(c.token);
    h.score = c.score;
    h.penalized = c.penalized;
    h.finished = c.token == data::kEos;
    h.cache = outs[c.parent].cache;
    out.push_back(std::move(h));
  }
  return out;
}

void update_hypo(std::span<const Hypothesis> temporary, std::vector<Hypothesis>& partial,
                 std::vector<Hypothesis>& complete, std::size_t capacity) {
  for (const auto& cand : temporary) {
    if (cand.finished) {
      complete.push_back(cand);
      if (complete.size() >= capacity) break;
    } else {
      partial.push_back(cand);
    }
  }
}

std::vector<TokenId> resolve_output(const Hypothesis& h) {
  std::vector<TokenId> out;
  for (std::size_t k = 1; k < h.tokens.size(); ++k)
    if (h.tokens[k] != data::kEos) out.push_back(h.tokens[k]);
  if (h.direction == Direction::kR2L) std::reverse(out.begin(), out.end());
  return out;
}

SearchResult sync_bidi_beam_search(Scorer& scorer, const BeamConfig& config) {
  check_common(config);
  if (config.beam < 2 || config.beam % 2 != 0) throw std::invalid_argument("beam size must be even and at least 2");
  if (!config.forward && !config.backward) throw std::invalid_argument("both search directions are disabled");
  const std::size_t half = config.beam / 2;
  // A single active half behaves as a beam of K/2, including its completion capacity.
  const std::size_t capacity = config.forward && config.backward ? config.beam : half;
  Engine engine{scorer, {config.forward, config.backward}, half, capacity, config.max_len, config.alpha,
                config.interact};
  return engine.run();
}

SearchResult unidirectional_beam_search(Scorer& scorer, Direction direction, const BeamConfig& config) {
  check_common(config);
  if (config.beam == 0) throw std::invalid_argument("beam size must be at least 1");
  const bool l2r = direction == Direction::kL2R;
  Engine engine{scorer, {l2r, !l2r}, config.beam, config.beam, config.max_len, config.alpha, false};
  return engine.run();
}

}  // namespace sbi::search
