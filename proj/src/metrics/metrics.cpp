#include "sbi/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sbi::metrics {

namespace {

void check_sizes(const Corpus& h, const Corpus& r) {
  if (h.size() != r.size())
    throw std::invalid_argument("hypothesis and reference corpora differ in size (" + std::to_string(h.size()) +
                                " vs " + std::to_string(r.size()) + ")");
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Sentence& s, std::size_t n) {
  NgramCounts out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Sentence(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

std::size_t bag_overlap(const Sentence& a, const Sentence& b) {
  std::map<std::string, std::size_t> count;
  for (const auto& t : b) ++count[t];
  std::size_t hit = 0;
  for (const auto& t : a) {
    auto it = count.find(t);
    if (it != count.end() && it->second > 0) {
      --it->second;
      ++hit;
    }
  }
  return hit;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

BleuDetail bleu_detail(const Corpus& hypotheses, const Corpus& references, const BleuOptions& options) {
  check_sizes(hypotheses, references);
  if (hypotheses.empty()) throw std::invalid_argument("BLEU of an empty corpus");
  if (options.max_n == 0) throw std::invalid_argument("BLEU needs max_n >= 1");
  const bool smooth = options.smoothing == Smoothing::kAddOne ||
                      (options.smoothing == Smoothing::kAuto && hypotheses.size() < 100);
  std::vector<std::size_t> match(options.max_n, 0), total(options.max_n, 0);
  BleuDetail d;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    Sentence h = hypotheses[s], r = references[s];
    if (options.case_insensitive) {
      for (auto& t : h) t = lower(t);
      for (auto& t : r) t = lower(t);
    }
    d.hypothesis_length += h.size();
    d.reference_length += r.size();
    for (std::size_t n = 1; n <= options.max_n; ++n) {
      const auto hc = ngrams(h, n);
      const auto rc = ngrams(r, n);
      for (const auto& [g, c] : hc) {
        total[n - 1] += c;
        auto it = rc.find(g);
        if (it != rc.end()) match[n - 1] += std::min(c, it->second);
      }
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < options.max_n; ++n) {
    double p;
    if (smooth && n > 0) {
      p = (static_cast<double>(match[n]) + 1.0) / (static_cast<double>(total[n]) + 1.0);
    } else {
      p = total[n] ? static_cast<double>(match[n]) / static_cast<double>(total[n]) : 0.0;
    }
    d.precisions.push_back(p);
    if (p <= 0.0) zero = true;
    else log_sum += std::log(p);
  }
  if (d.hypothesis_length == 0) {
    d.brevity_penalty = 0.0;
  } else if (d.hypothesis_length < d.reference_length) {
    d.brevity_penalty = std::exp(1.0 - static_cast<double>(d.reference_length) / static_cast<double>(d.hypothesis_length));
  }
  d.bleu = zero ? 0.0 : 100.0 * d.brevity_penalty * std::exp(log_sum / static_cast<double>(options.max_n));
  return d;
}

double bleu(const Corpus& hypotheses, const Corpus& references, const BleuOptions& options) {
  return bleu_detail(hypotheses, references, options).bleu;
}

FirstLast match_accuracy_first_last(const Corpus& hypotheses, const Corpus& references, std::size_t k,
                                    MatchMode mode) {
  check_sizes(hypotheses, references);
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  std::size_t first = 0, last = 0, positions = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& h = hypotheses[s];
    const auto& r = references[s];
    const std::size_t m = std::min({k, h.size(), r.size()});
    positions += m;
    if (mode == MatchMode::kPositional) {
      for (std::size_t i = 0; i < m; ++i) {
        first += h[i] == r[i];
        last += h[h.size() - 1 - i] == r[r.size() - 1 - i];
      }
    } else {
      const auto take = [](const Sentence& x, std::size_t from, std::size_t n) {
        return Sentence(x.begin() + static_cast<std::ptrdiff_t>(from), x.begin() + static_cast<std::ptrdiff_t>(from + n));
      };
      first += bag_overlap(take(h, 0, m), take(r, 0, m));
      last += bag_overlap(take(h, h.size() - m, m), take(r, r.size() - m, m));
    }
  }
  FirstLast out;
  out.positions = positions;
  if (positions) {
    out.first = 100.0 * static_cast<double>(first) / static_cast<double>(positions);
    out.last = 100.0 * static_cast<double>(last) / static_cast<double>(positions);
  }
  return out;
}

BucketPrecision position_bucket_precision(const Corpus& hypotheses, const Corpus& references, std::size_t buckets) {
  check_sizes(hypotheses, references);
  if (buckets == 0) throw std::invalid_argument("need at least one bucket");
  std::vector<double> sum(buckets, 0.0);
  BucketPrecision out;
  out.segments.assign(buckets, 0);
  const auto segment = [buckets](const Sentence& x, std::size_t b) {
    const std::size_t lo = b * x.size() / buckets;
    const std::size_t hi = (b + 1) * x.size() / buckets;
    return Sentence(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi));
  };
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    for (std::size_t b = 0; b < buckets; ++b) {
      const auto hs = segment(hypotheses[s], b);
      if (hs.empty()) continue;
      const auto rs = segment(references[s], b);
      sum[b] += static_cast<double>(bag_overlap(hs, rs)) / static_cast<double>(hs.size());
      ++out.segments[b];
    }
  }
  out.percent.resize(buckets, 0.0);
  for (std::size_t b = 0; b < buckets; ++b)
    if (out.segments[b]) out.percent[b] = 100.0 * sum[b] / static_cast<double>(out.segments[b]);
  return out;
}

std::vector<LengthBucket> length_bucket_bleu(const Corpus& hypotheses, const Corpus& references,
                                             const Corpus& sources, const std::vector<std::size_t>& edges,
                                             const BleuOptions& options) {
  check_sizes(hypotheses, references);
  if (sources.size() != hypotheses.size()) throw std::invalid_argument("source corpus size mismatch");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i] <= edges[i - 1]) throw std::invalid_argument("length bucket edges must be strictly increasing");
  std::vector<LengthBucket> out(edges.size() + 1);
  std::vector<Corpus> hyp(out.size()), ref(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].lo = k == 0 ? 0 : edges[k - 1];
    out[k].hi = k < edges.size() ? edges[k] : 0;
  }
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto k = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), sources[s].size()) - edges.begin());
    hyp[k].push_back(hypotheses[s]);
    ref[k].push_back(references[s]);
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].sentences = hyp[k].size();
    if (!hyp[k].empty()) out[k].bleu = bleu(hyp[k], ref[k], options);
  }
  return out;
}

double token_accuracy(const Corpus& hypotheses, const Corpus& references) {
  check_sizes(hypotheses, references);
  std::size_t hit = 0, total = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& h = hypotheses[s];
    const auto& r = references[s];
    // Position |r| holds the end marker; it matches when the lengths agree.
    total += r.size() + 1;
    for (std::size_t i = 0; i < r.size() && i < h.size(); ++i) hit += h[i] == r[i];
    hit += h.size() == r.size();
  }
  return total ? 100.0 * static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

double exact_match(const Corpus& hypotheses, const Corpus& references) {
  check_sizes(hypotheses, references);
  if (hypotheses.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) hit += hypotheses[s] == references[s];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(hypotheses.size());
}

MetricReport make_report(const Corpus& hypotheses, const Corpus& references, const Corpus& sources,
                         const ReportOptions& options) {
  MetricReport r;
  r.sentences = hypotheses.size();
  r.bleu = bleu_detail(hypotheses, references, options.bleu);
  r.k = options.k;
  r.first_last = match_accuracy_first_last(hypotheses, references, options.k, options.match);
  r.buckets = position_bucket_precision(hypotheses, references, options.buckets);
  if (!sources.empty()) r.length_buckets = length_bucket_bleu(hypotheses, references, sources, options.length_edges, options.bleu);
  r.token_accuracy = token_accuracy(hypotheses, references);
  r.exact_match = exact_match(hypotheses, references);
  return r;
}

namespace {

template <class Emit>
void emit_all(const MetricReport& r, Emit&& emit) {
  emit("sentences", std::to_string(r.sentences));
  emit("bleu", fmt(r.bleu.bleu));
  for (std::size_t n = 0; n < r.bleu.precisions.size(); ++n)
    emit("bleu.p" + std::to_string(n + 1), fmt(100.0 * r.bleu.precisions[n]));
  emit("bleu.bp", fmt(r.bleu.brevity_penalty));
  emit("token_accuracy", fmt(r.token_accuracy));
  emit("exact_match", fmt(r.exact_match));
  emit("first" + std::to_string(r.k), fmt(r.first_last.first));
  emit("last" + std::to_string(r.k), fmt(r.first_last.last));
  for (std::size_t b = 0; b < r.buckets.percent.size(); ++b)
    emit("position_bucket." + std::to_string(b), fmt(r.buckets.percent[b]));
  for (const auto& lb : r.length_buckets) {
    const std::string name = "length_bleu." + std::to_string(lb.lo) + "-" + (lb.hi ? std::to_string(lb.hi) : std::string("inf"));
    emit(name, fmt(lb.bleu));
    emit(name + ".sentences", std::to_string(lb.sentences));
  }
}

}  // namespace

void write_report_text(std::ostream& out, const MetricReport& report) {
  emit_all(report, [&](const std::string& k, const std::string& v) { out << k << " = " << v << '\n'; });
}

void write_report_tsv(std::ostream& out, const MetricReport& report) {
  emit_all(report, [&](const std::string& k, const std::string& v) { out << k << '\t' << v << '\n'; });
}

}  // namespace sbi::metrics
