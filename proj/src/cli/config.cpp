#include "sbi/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace sbi::cli {

ConfigError::ConfigError(std::string key, const std::string& what)
    : std::invalid_argument(key.empty() ? what : "config key '" + key + "': " + what), key_(std::move(key)) {}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kTwoPass: return "two-pass";
    case Strategy::kFineTune: return "fine-tune";
    case Strategy::kNoInteraction: return "no-interaction";
  }
  return "?";
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(std::string(key), "expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(v) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(key), "expected true or false, got '" + std::string(v) + "'");
}

std::string show(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class M>
Field size_field(std::string name, M member) {
  return {name,
          [name, member](RunConfig& c, std::string_view v) { member(c) = parse_int<std::size_t>(name, v); },
          [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
}

template <class M>
Field double_field(std::string name, M member) {
  return {name, [name, member](RunConfig& c, std::string_view v) { member(c) = parse_double(name, v); },
          [member](const RunConfig& c) { return show(member(const_cast<RunConfig&>(c))); }};
}

template <class M>
Field bool_field(std::string name, M member) {
  return {name, [name, member](RunConfig& c, std::string_view v) { member(c) = parse_bool(name, v); },
          [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <class M>
Field string_field(std::string name, M member) {
  return {name, [member](RunConfig& c, std::string_view v) { member(c) = std::string(v); },
          [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"architecture",
                 [](RunConfig& c, std::string_view v) {
                   if (v != "transformer" && v != "lstm")
                     throw ConfigError("architecture", "expected transformer or lstm, got '" + std::string(v) + "'");
                   c.model.architecture = std::string(v);
                 },
                 [](const RunConfig& c) { return c.model.architecture; }});
    f.push_back({"strategy",
                 [](RunConfig& c, std::string_view v) {
                   if (v == "two-pass") c.strategy = Strategy::kTwoPass;
                   else if (v == "fine-tune") c.strategy = Strategy::kFineTune;
                   else if (v == "no-interaction") c.strategy = Strategy::kNoInteraction;
                   else throw ConfigError("strategy", "expected two-pass, fine-tune or no-interaction, got '" + std::string(v) + "'");
                 },
                 [](const RunConfig& c) { return std::string(strategy_name(c.strategy)); }});
    f.push_back({"seed",
                 [](RunConfig& c, std::string_view v) {
                   c.seed = parse_int<std::uint64_t>("seed", v);
                   c.training.seed = c.seed;
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back(size_field("d_model", [](RunConfig& c) -> auto& { return c.model.transformer.d_model; }));
    f.push_back(size_field("heads", [](RunConfig& c) -> auto& { return c.model.transformer.heads; }));
    f.push_back(size_field("d_ff", [](RunConfig& c) -> auto& { return c.model.transformer.d_ff; }));
    f.push_back(size_field("layers", [](RunConfig& c) -> auto& { return c.model.transformer.layers; }));
    f.push_back(size_field("hidden", [](RunConfig& c) -> auto& { return c.model.lstm.hidden; }));
    f.push_back(size_field("lstm_layers", [](RunConfig& c) -> auto& { return c.model.lstm.layers; }));
    f.push_back(double_field("dropout", [](RunConfig& c) -> auto& { return c.model.transformer.dropout; }));
    f.push_back(double_field("lstm_dropout", [](RunConfig& c) -> auto& { return c.model.lstm.dropout; }));
    f.push_back(bool_field("baseline", [](RunConfig& c) -> auto& { return c.model.transformer.baseline; }));
    f.push_back(bool_field("position_encoding", [](RunConfig& c) -> auto& { return c.model.transformer.position_encoding; }));
    f.push_back(bool_field("share_embeddings", [](RunConfig& c) -> auto& { return c.model.transformer.share_embeddings; }));
    f.push_back(bool_field("separate_directions", [](RunConfig& c) -> auto& { return c.model.lstm.separate_directions; }));
    f.push_back(size_field("beam", [](RunConfig& c) -> auto& { return c.beam.beam; }));
    f.push_back(size_field("max_len", [](RunConfig& c) -> auto& { return c.beam.max_len; }));
    f.push_back(double_field("alpha", [](RunConfig& c) -> auto& { return c.beam.alpha; }));
    f.push_back(double_field("beta1", [](RunConfig& c) -> auto& { return c.training.beta1; }));
    f.push_back(double_field("beta2", [](RunConfig& c) -> auto& { return c.training.beta2; }));
    f.push_back(double_field("epsilon", [](RunConfig& c) -> auto& { return c.training.epsilon; }));
    f.push_back(size_field("warmup", [](RunConfig& c) -> auto& { return c.training.warmup; }));
    f.push_back(double_field("lr_scale", [](RunConfig& c) -> auto& { return c.training.lr_scale; }));
    f.push_back(double_field("label_smoothing", [](RunConfig& c) -> auto& { return c.training.label_smoothing; }));
    f.push_back(size_field("batch_size", [](RunConfig& c) -> auto& { return c.training.batch_size; }));
    f.push_back(size_field("max_epochs", [](RunConfig& c) -> auto& { return c.training.max_epochs; }));
    f.push_back(size_field("max_steps", [](RunConfig& c) -> auto& { return c.training.max_steps; }));
    f.push_back(size_field("stage2_epochs", [](RunConfig& c) -> auto& { return c.training.stage2_epochs; }));
    f.push_back(size_field("eval_every", [](RunConfig& c) -> auto& { return c.training.eval_every; }));
    f.push_back(size_field("patience", [](RunConfig& c) -> auto& { return c.training.patience; }));
    f.push_back(double_field("fine_tune_fraction", [](RunConfig& c) -> auto& { return c.training.fine_tune_fraction; }));
    f.push_back(size_field("pseudo_beam", [](RunConfig& c) -> auto& { return c.training.pseudo_beam; }));
    f.push_back(size_field("pseudo_max_len", [](RunConfig& c) -> auto& { return c.training.pseudo_max_len; }));
    f.push_back(bool_field("from_scratch", [](RunConfig& c) -> auto& { return c.training.from_scratch; }));
    f.push_back(double_field("max_seconds", [](RunConfig& c) -> auto& { return c.training.max_seconds; }));
    f.push_back(string_field("train", [](RunConfig& c) -> auto& { return c.train_path; }));
    f.push_back(string_field("valid", [](RunConfig& c) -> auto& { return c.valid_path; }));
    f.push_back(string_field("output", [](RunConfig& c) -> auto& { return c.output_dir; }));
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.name == key) return &f;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

bool RunConfig::is_key(std::string_view key) { return find_field(key) != nullptr; }

void RunConfig::set(std::string_view key, std::string_view value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError(std::string(key), "unknown key");
  f->set(*this, trim(value));
}

std::string RunConfig::get(std::string_view key) const {
  const Field* f = find_field(key);
  if (!f) throw ConfigError(std::string(key), "unknown key");
  return f->get(*this);
}

void RunConfig::validate() const {
  const auto& t = model.transformer;
  if (model.architecture == "transformer") {
    if (t.d_model == 0) throw ConfigError("d_model", "must be positive");
    if (t.heads == 0 || t.d_model % t.heads != 0) throw ConfigError("heads", "must divide d_model");
    if (t.d_ff == 0) throw ConfigError("d_ff", "must be positive");
    if (t.layers == 0) throw ConfigError("layers", "must be positive");
    if (!(t.dropout >= 0.0 && t.dropout < 1.0)) throw ConfigError("dropout", "must lie in [0, 1)");
  } else {
    if (model.lstm.hidden == 0) throw ConfigError("hidden", "must be positive");
    if (model.lstm.layers == 0) throw ConfigError("lstm_layers", "must be positive");
    if (!(model.lstm.dropout >= 0.0 && model.lstm.dropout < 1.0)) throw ConfigError("lstm_dropout", "must lie in [0, 1)");
  }
  if (beam.beam < 2 || beam.beam % 2 != 0) throw ConfigError("beam", "must be even and at least 2");
  if (beam.max_len == 0) throw ConfigError("max_len", "must be positive");
  if (!(beam.alpha >= 0.0)) throw ConfigError("alpha", "must be non-negative");
  if (strategy != Strategy::kNoInteraction && model.architecture == "transformer" && t.baseline)
    throw ConfigError("baseline", "a baseline decoder only supports strategy=no-interaction");
  try {
    training.validate();
  } catch (const train::ConfigError& e) {
    throw ConfigError("", e.what());
  }
}

train::ModelSpec RunConfig::model_spec(std::size_t vocab_size) const {
  train::ModelSpec spec = model;
  spec.transformer.vocab_size = vocab_size;
  spec.lstm.vocab_size = vocab_size;
  spec.transformer.seed = seed;
  spec.lstm.seed = seed;
  return spec;
}

RunConfig parse_config(std::istream& in, const std::string& origin) {
  RunConfig config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("", origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    config.set(trim(view.substr(0, eq)), view.substr(eq + 1));
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  return parse_config(in, path.string());
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const auto& f : fields()) out << f.name << " = " << f.get(config) << '\n';
}

}  // namespace sbi::cli
