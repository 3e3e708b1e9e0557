#pragma once

// Flat key=value run configuration shared by the command-line tools.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sbi/search.hpp"
#include "sbi/training.hpp"

namespace sbi::cli {

/// Bad or unknown configuration value. The message names the key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& what);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Missing, unreadable or malformed file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Strategy { kTwoPass, kFineTune, kNoInteraction };

std::string_view strategy_name(Strategy s);

struct RunConfig {
  train::ModelSpec model;
  search::BeamConfig beam;
  train::TrainingConfig training;
  Strategy strategy = Strategy::kTwoPass;
  std::string train_path;
  std::string valid_path;
  std::string output_dir;
  std::uint64_t seed = 7;

  /// Every accepted key, in file order.
  static const std::vector<std::string>& keys();
  static bool is_key(std::string_view key);

  /// Parses and stores one value. Throws ConfigError for unknown keys or
  /// unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Range and consistency checks; throws ConfigError naming the key.
  void validate() const;

  /// Model spec for a vocabulary of `vocab_size` tokens.
  train::ModelSpec model_spec(std::size_t vocab_size) const;
};

/// Reads "key = value" lines; '#' starts a comment, blank lines are skipped.
RunConfig parse_config(std::istream& in, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const RunConfig& config);

}  // namespace sbi::cli
