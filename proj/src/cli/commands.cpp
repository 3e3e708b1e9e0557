#include "sbi/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "sbi/checkpoint.hpp"
#include "sbi/config.hpp"
#include "sbi/metrics.hpp"
#include "sbi/training.hpp"

namespace sbi::cli {

namespace fs = std::filesystem;
using data::TokenId;

std::vector<std::vector<TokenId>> decode_all(const models::Seq2SeqModel<float>& model,
                                             const std::vector<std::vector<TokenId>>& sources,
                                             const DecodeOptions& options) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(sources.size());
  for (const auto& src : sources) {
    auto scorer = model.scorer(src, options.use_interaction && !options.unidirectional);
    auto result = options.unidirectional ? search::unidirectional_beam_search(*scorer, *options.unidirectional, options.beam)
                                         : search::sync_bidi_beam_search(*scorer, options.beam);
    out.push_back(std::move(result.tokens));
  }
  return out;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

/// Source and target columns of a file that is either a tab-separated corpus
/// or plain one-sentence-per-line text (then only `target` is filled).
struct Columns {
  metrics::Corpus source;
  metrics::Corpus target;
};

Columns read_columns(const std::string& path) {
  Columns c;
  const auto lines = read_lines(path);
  bool tabbed = !lines.empty();
  for (const auto& l : lines) tabbed = tabbed && l.find('\t') != std::string::npos;
  for (const auto& l : lines) {
    if (tabbed) {
      const auto tab = l.find('\t');
      c.source.push_back(data::split_tokens(std::string_view(l).substr(0, tab)));
      c.target.push_back(data::split_tokens(std::string_view(l).substr(tab + 1)));
    } else {
      c.target.push_back(data::split_tokens(l));
    }
  }
  return c;
}

void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty() || path == "-") {
    fallback << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

data::TextCorpus load_corpus(const std::string& path, const std::string& key) {
  if (path.empty()) throw ConfigError(key, "no corpus path given");
  if (!fs::exists(path)) throw IoError("corpus not found: " + path);
  try {
    return data::read_corpus(path);
  } catch (const data::ParseError& e) {
    throw IoError(e.what());
  }
}

std::vector<std::size_t> parse_edges(const std::string& text) {
  std::vector<std::size_t> edges;
  if (text.empty()) return edges;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      edges.push_back(std::stoul(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("edges", "expected comma-separated integers, got '" + text + "'");
    }
  }
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i] <= edges[i - 1]) throw ConfigError("edges", "must be strictly increasing");
  return edges;
}

metrics::Smoothing parse_smoothing(const std::string& s) {
  if (s == "auto") return metrics::Smoothing::kAuto;
  if (s == "off") return metrics::Smoothing::kOff;
  if (s == "add-one") return metrics::Smoothing::kAddOne;
  throw ConfigError("smoothing", "expected auto, off or add-one, got '" + s + "'");
}

// ---- gen-data ----

struct GenDataArgs {
  std::string task = "copy";
  std::size_t count = 1000;
  std::string output;
  data::CopyTaskOptions copy;
  data::BracketTaskOptions bracket;
};

int gen_data(const GenDataArgs& a, std::uint64_t seed, std::ostream& out) {
  data::TextCorpus corpus;
  if (a.task == "copy") {
    auto o = a.copy;
    o.count = a.count;
    o.seed = seed;
    corpus = data::gen_copy_task(o);
  } else if (a.task == "bracket") {
    auto o = a.bracket;
    o.count = a.count;
    o.seed = seed;
    corpus = data::gen_bracket_task(o);
  } else {
    throw ConfigError("task", "expected copy or bracket, got '" + a.task + "'");
  }
  std::ostringstream text;
  for (const auto& ex : corpus) text << data::join_tokens(ex.source) << '\t' << data::join_tokens(ex.target) << '\n';
  write_text(a.output, text.str(), out);
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> options;
};

int train_command(const TrainArgs& a, std::optional<std::uint64_t> seed, std::ostream& out) {
  RunConfig config = a.config_path.empty() ? RunConfig{} : load_config(a.config_path);
  for (const auto& [key, opt] : a.options)
    if (opt->count() > 0) config.set(key, a.overrides.at(key));
  if (seed) config.set("seed", std::to_string(*seed));
  config.validate();
  if (config.output_dir.empty()) throw ConfigError("output", "no checkpoint directory given");

  const auto train_text = load_corpus(config.train_path, "train");
  const auto valid_text = load_corpus(config.valid_path, "valid");
  const auto vocab = data::build_vocab(train_text);
  const auto train = data::make_triples(train_text, vocab);
  const auto valid = data::make_triples(valid_text, vocab);
  const auto spec = config.model_spec(vocab.size());

  const auto start = std::chrono::steady_clock::now();
  train::TrainedModels<float> trained;
  switch (config.strategy) {
    case Strategy::kTwoPass: trained = train::two_pass_train<float>(spec, train, valid, config.training); break;
    case Strategy::kFineTune: trained = train::fine_tune<float>(spec, train, valid, config.training); break;
    case Strategy::kNoInteraction: trained = train::train_no_interaction<float>(spec, train, valid, config.training); break;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path dir = config.output_dir;
  if (trained.bidirectional) {
    save_checkpoint(dir, "model", *trained.bidirectional, config, vocab, true);
    save_checkpoint(dir, "baseline", *trained.no_interaction, config, vocab, false);
  } else {
    save_checkpoint(dir, "model", *trained.no_interaction, config, vocab, false);
  }
  std::ostringstream log;
  trained.log.write(log);
  write_text((dir / "train_log.tsv").string(), log.str(), out);

  out << "strategy " << strategy_name(config.strategy) << '\n';
  out << "train_examples " << train.size() << '\n';
  out << "vocab_size " << vocab.size() << '\n';
  if (trained.bidirectional) {
    out << "stage2_examples " << trained.stage2_examples << '\n';
    out << "pseudo_skipped " << trained.pseudo_skipped << '\n';
  }
  if (!trained.log.rows.empty()) out << "final_valid_loss " << trained.log.rows.back().valid_loss << '\n';
  out << "seconds " << std::fixed << std::setprecision(1) << seconds << '\n';
  out << "checkpoint " << (dir / "model.manifest").string() << '\n';
  return kExitOk;
}

// ---- decode ----

struct DecodeArgs {
  std::string checkpoint;
  std::string name = "model";
  std::string input;
  std::string output;
  std::size_t beam = 0;
  double alpha = -1.0;
  std::size_t max_len = 0;
  std::string unidirectional;
  bool no_interaction = false;
};

int decode_command(const DecodeArgs& a, std::ostream& out) {
  auto ck = load_checkpoint(a.checkpoint, a.name);
  DecodeOptions opt;
  opt.beam = ck.config.beam;
  if (a.beam) opt.beam.beam = a.beam;
  if (a.alpha >= 0.0) opt.beam.alpha = a.alpha;
  if (a.max_len) opt.beam.max_len = a.max_len;
  opt.use_interaction = ck.interaction && !a.no_interaction;
  if (a.unidirectional == "l2r") opt.unidirectional = search::Direction::kL2R;
  else if (a.unidirectional == "r2l") opt.unidirectional = search::Direction::kR2L;
  else if (!a.unidirectional.empty())
    throw ConfigError("unidirectional", "expected l2r or r2l, got '" + a.unidirectional + "'");
  if (!opt.unidirectional && (opt.beam.beam < 2 || opt.beam.beam % 2))
    throw ConfigError("beam", "synchronous search needs an even beam of at least 2");

  const auto lines = read_lines(a.input);
  std::vector<std::vector<TokenId>> sources;
  for (const auto& l : lines) {
    const auto tab = l.find('\t');
    sources.push_back(data::encode(std::string_view(l).substr(0, tab), ck.vocab));
  }
  const auto hyps = decode_all(*ck.model, sources, opt);
  std::ostringstream text;
  for (const auto& h : hyps) text << data::decode(h, ck.vocab) << '\n';
  write_text(a.output, text.str(), out);
  return kExitOk;
}

// ---- evaluate / analyze ----

struct MetricArgs {
  std::string reference;
  std::vector<std::string> hypotheses;
  std::vector<std::string> labels;
  std::string source;
  std::string report;
  std::size_t k = 4;
  std::size_t buckets = 10;
  std::string edges = "10,20,30,40,50";
  bool bag = false;
  bool case_sensitive = false;
  std::string smoothing = "auto";
};

metrics::ReportOptions report_options(const MetricArgs& a) {
  if (a.k == 0) throw ConfigError("k", "must be at least 1");
  if (a.buckets == 0) throw ConfigError("buckets", "must be at least 1");
  metrics::ReportOptions o;
  o.k = a.k;
  o.buckets = a.buckets;
  o.length_edges = parse_edges(a.edges);
  o.match = a.bag ? metrics::MatchMode::kBag : metrics::MatchMode::kPositional;
  o.bleu.case_insensitive = !a.case_sensitive;
  o.bleu.smoothing = parse_smoothing(a.smoothing);
  return o;
}

struct References {
  metrics::Corpus source;
  metrics::Corpus target;
};

References load_references(const MetricArgs& a) {
  auto cols = read_columns(a.reference);
  References r{std::move(cols.source), std::move(cols.target)};
  if (!a.source.empty()) r.source = read_columns(a.source).target;
  if (!r.source.empty() && r.source.size() != r.target.size())
    throw IoError(a.source + ": " + std::to_string(r.source.size()) + " source lines for " +
                  std::to_string(r.target.size()) + " references");
  return r;
}

metrics::Corpus load_hypotheses(const std::string& path, std::size_t expected) {
  auto h = read_columns(path).target;
  if (h.size() != expected)
    throw IoError(path + ": " + std::to_string(h.size()) + " hypotheses for " + std::to_string(expected) + " references");
  return h;
}

int evaluate_command(const MetricArgs& a, std::ostream& out) {
  const auto opts = report_options(a);
  const auto refs = load_references(a);
  const auto hyps = load_hypotheses(a.hypotheses.front(), refs.target.size());
  const auto report = metrics::make_report(hyps, refs.target, refs.source, opts);
  metrics::write_report_text(out, report);
  if (!a.report.empty()) {
    std::ostringstream tsv;
    metrics::write_report_tsv(tsv, report);
    write_text(a.report, tsv.str(), out);
  }
  return kExitOk;
}

int analyze_command(const MetricArgs& a, std::ostream& out) {
  if (a.hypotheses.empty() || a.hypotheses.size() > 3) throw ConfigError("hyp", "give one to three hypothesis files");
  if (!a.labels.empty() && a.labels.size() != a.hypotheses.size())
    throw ConfigError("label", "one label per hypothesis file");
  const auto opts = report_options(a);
  const auto refs = load_references(a);
  std::vector<std::string> labels = a.labels;
  std::vector<metrics::MetricReport> reports;
  for (std::size_t i = 0; i < a.hypotheses.size(); ++i) {
    if (labels.size() <= i) labels.push_back(fs::path(a.hypotheses[i]).stem().string());
    const auto hyps = load_hypotheses(a.hypotheses[i], refs.target.size());
    reports.push_back(metrics::make_report(hyps, refs.target, refs.source, opts));
  }

  std::ostringstream table;
  table << "metric";
  for (const auto& l : labels) table << '\t' << l;
  table << '\n';
  const auto row = [&](const std::string& name, auto value) {
    table << name;
    for (const auto& r : reports) table << '\t' << std::fixed << std::setprecision(2) << value(r);
    table << '\n';
  };
  row("bleu", [](const metrics::MetricReport& r) { return r.bleu.bleu; });
  row("first" + std::to_string(a.k), [](const metrics::MetricReport& r) { return r.first_last.first; });
  row("last" + std::to_string(a.k), [](const metrics::MetricReport& r) { return r.first_last.last; });
  for (std::size_t b = 0; b < a.buckets; ++b)
    row("position_bucket." + std::to_string(b), [b](const metrics::MetricReport& r) { return r.buckets.percent[b]; });
  if (!refs.source.empty()) {
    for (std::size_t i = 0; i < reports.front().length_buckets.size(); ++i) {
      const auto& lb = reports.front().length_buckets[i];
      const std::string name = "length_bleu." + std::to_string(lb.lo) + "-" + (lb.hi ? std::to_string(lb.hi) : std::string("inf"));
      row(name, [i](const metrics::MetricReport& r) { return r.length_buckets[i].bleu; });
    }
  }
  out << table.str();
  if (!a.report.empty()) write_text(a.report, table.str(), out);
  return kExitOk;
}

void add_metric_options(CLI::App* cmd, MetricArgs& a, bool many) {
  cmd->add_option("--ref", a.reference, "Reference file: corpus (source<TAB>target) or one sentence per line")
      ->required();
  if (many)
    cmd->add_option("--hyp", a.hypotheses, "Hypothesis file (repeat up to three times)")->required()->expected(1, 3);
  else
    cmd->add_option("--hyp", a.hypotheses, "Hypothesis file")->required()->expected(1);
  if (many) cmd->add_option("--label", a.labels, "Column label per hypothesis file");
  cmd->add_option("--source", a.source, "Source sentences for length buckets (default: the reference corpus sources)");
  cmd->add_option("--report", a.report, many ? "Write the table to this file" : "Write name<TAB>value lines to this file");
  cmd->add_option("--k", a.k, "Positions for first/last-k accuracy")->capture_default_str();
  cmd->add_option("--buckets", a.buckets, "Position buckets")->capture_default_str();
  cmd->add_option("--edges", a.edges, "Source-length bucket edges, comma separated")->capture_default_str();
  cmd->add_flag("--bag", a.bag, "First/last-k by bag overlap instead of position");
  cmd->add_flag("--case-sensitive", a.case_sensitive, "Case-sensitive BLEU");
  cmd->add_option("--smoothing", a.smoothing, "BLEU smoothing: auto, off, add-one")->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synchronous bidirectional sequence generation toolkit", "sbi"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 7;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for data generation and training")->capture_default_str();

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic corpus (source<TAB>target per line)");
  gen_cmd->add_option("--task", gen.task, "copy or bracket")->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "Number of examples")->capture_default_str();
  gen_cmd->add_option("--output,-o", gen.output, "Output file (default: stdout)");
  gen_cmd->add_option("--vocab-size", gen.copy.vocab_size, "Copy task: symbol count")->capture_default_str();
  gen_cmd->add_option("--min-len", gen.copy.min_len, "Copy task: minimum length")->capture_default_str();
  gen_cmd->add_option("--max-len", gen.copy.max_len, "Copy task: maximum length")->capture_default_str();
  gen_cmd->add_option("--min-depth", gen.bracket.min_depth, "Bracket task: minimum depth")->capture_default_str();
  gen_cmd->add_option("--max-depth", gen.bracket.max_depth, "Bracket task: maximum depth")->capture_default_str();
  gen_cmd->add_option("--noise-symbols", gen.bracket.noise_symbols, "Bracket task: noise symbol count")
      ->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints");
  train_cmd->add_option("--config,-c", tr.config_path, "key = value configuration file");
  for (const auto& key : RunConfig::keys()) {
    if (key == "seed") continue;
    tr.options[key] = train_cmd->add_option("--" + key, tr.overrides[key], "Override config key '" + key + "'");
  }

  DecodeArgs dec;
  auto* decode_cmd = app.add_subcommand("decode", "Decode a source file with a checkpoint");
  decode_cmd->add_option("--checkpoint", dec.checkpoint, "Checkpoint directory")->required();
  decode_cmd->add_option("--name", dec.name, "Checkpoint name inside the directory")->capture_default_str();
  decode_cmd->add_option("--input,-i", dec.input, "Source sentences, one per line (text after a TAB is ignored)")
      ->required();
  decode_cmd->add_option("--output,-o", dec.output, "Hypothesis file (default: stdout)");
  decode_cmd->add_option("--beam", dec.beam, "Beam size (default from the checkpoint, normally 4)");
  decode_cmd->add_option("--alpha", dec.alpha, "Length penalty exponent (default from the checkpoint, normally 0.6)");
  decode_cmd->add_option("--max-len", dec.max_len, "Maximum output length");
  decode_cmd->add_option("--unidirectional", dec.unidirectional, "Single-direction search: l2r or r2l");
  decode_cmd->add_flag("--no-interaction", dec.no_interaction, "Ignore the opposite direction while decoding");

  MetricArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a hypothesis file");
  add_metric_options(eval_cmd, eval, false);

  MetricArgs ana;
  auto* analyze_cmd = app.add_subcommand("analyze", "Compare up to three hypothesis files");
  add_metric_options(analyze_cmd, ana, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return gen_data(gen, seed, out);
    if (train_cmd->parsed())
      return train_command(tr, seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt, out);
    if (decode_cmd->parsed()) return decode_command(dec, out);
    if (eval_cmd->parsed()) return evaluate_command(eval, out);
    if (analyze_cmd->parsed()) return analyze_command(ana, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const data::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::runtime_error& e) {
    // Remaining runtime errors come from file access in the data layer.
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitConfig;
}

}  // namespace sbi::cli
