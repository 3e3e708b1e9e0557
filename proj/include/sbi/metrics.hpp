#pragma once

// Corpus BLEU and positional diagnostics over tokenized sentences.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace sbi::metrics {

using Sentence = std::vector<std::string>;
using Corpus = std::vector<Sentence>;

enum class Smoothing {
  kAuto,    // add-one below 100 lines, off otherwise
  kOff,
  kAddOne,  // (matches + 1) / (total + 1) for n >= 2
};

struct BleuOptions {
  std::size_t max_n = 4;
  bool case_insensitive = true;
  Smoothing smoothing = Smoothing::kAuto;
};

struct BleuDetail {
  double bleu = 0.0;  // percent
  std::vector<double> precisions;  // per n, as fractions
  double brevity_penalty = 1.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

/// Single-reference corpus BLEU. Throws std::invalid_argument on an empty or
/// mismatched corpus.
BleuDetail bleu_detail(const Corpus& hypotheses, const Corpus& references, const BleuOptions& options = {});
double bleu(const Corpus& hypotheses, const Corpus& references, const BleuOptions& options = {});

enum class MatchMode {
  kPositional,  // hyp[i] == ref[i]
  kBag,         // clipped multiset overlap of the two k-token windows
};

struct FirstLast {
  double first = 0.0;  // percent
  double last = 0.0;
  std::size_t positions = 0;  // denominator shared by both
};

/// Matching accuracy of the first and last k positions. Each pair contributes
/// min(k, |hyp|, |ref|) positions.
FirstLast match_accuracy_first_last(const Corpus& hypotheses, const Corpus& references, std::size_t k = 4,
                                    MatchMode mode = MatchMode::kPositional);

struct BucketPrecision {
  std::vector<double> percent;      // one per bucket; 0 when the bucket never had a nonempty segment
  std::vector<std::size_t> segments;  // nonempty hypothesis segments averaged per bucket
};

/// Splits each sentence into `buckets` contiguous segments, [floor(b*len/B),
/// floor((b+1)*len/B)), and averages |hyp_b ∩ ref_b| / |hyp_b| over nonempty
/// hypothesis segments.
BucketPrecision position_bucket_precision(const Corpus& hypotheses, const Corpus& references, std::size_t buckets = 10);

struct LengthBucket {
  std::size_t lo = 0;   // inclusive
  std::size_t hi = 0;   // exclusive; 0 for the open-ended last interval
  std::size_t sentences = 0;
  double bleu = 0.0;
};

/// BLEU within source-length intervals. `edges` are strictly increasing
/// interior boundaries; m edges give m + 1 intervals that cover every length.
std::vector<LengthBucket> length_bucket_bleu(const Corpus& hypotheses, const Corpus& references,
                                             const Corpus& sources, const std::vector<std::size_t>& edges,
                                             const BleuOptions& options = {});

/// Positional token accuracy: matches at equal indices over total reference
/// tokens plus the end marker. A missing or extra token counts as an error.
double token_accuracy(const Corpus& hypotheses, const Corpus& references);

/// Percentage of hypotheses equal to their reference.
double exact_match(const Corpus& hypotheses, const Corpus& references);

struct MetricReport {
  BleuDetail bleu;
  FirstLast first_last;
  std::size_t k = 4;
  BucketPrecision buckets;
  std::vector<LengthBucket> length_buckets;
  double token_accuracy = 0.0;
  double exact_match = 0.0;
  std::size_t sentences = 0;
};

struct ReportOptions {
  BleuOptions bleu;
  std::size_t k = 4;
  MatchMode match = MatchMode::kPositional;
  std::size_t buckets = 10;
  std::vector<std::size_t> length_edges = {10, 20, 30, 40, 50};
};

/// Sources may be empty; length buckets are then left empty.
MetricReport make_report(const Corpus& hypotheses, const Corpus& references, const Corpus& sources,
                         const ReportOptions& options = {});

/// "name = value" lines for people.
void write_report_text(std::ostream& out, const MetricReport& report);
/// "name<TAB>value" lines for tools.
void write_report_tsv(std::ostream& out, const MetricReport& report);

}  // namespace sbi::metrics
