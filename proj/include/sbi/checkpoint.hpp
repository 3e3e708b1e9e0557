#pragma once

// Model checkpoints: a text manifest, a little-endian float32 blob and the
// vocabulary, stored side by side as <name>.manifest, <name>.bin, <name>.vocab.

#include <filesystem>
#include <memory>
#include <string>

#include "sbi/config.hpp"
#include "sbi/data.hpp"
#include "sbi/model.hpp"

namespace sbi::cli {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  data::Vocab vocab;
  std::unique_ptr<models::Seq2SeqModel<float>> model;
  /// Whether decoding uses the cross-direction pathway by default.
  bool interaction = true;
};

/// Writes the three files through temporaries renamed into place.
void save_checkpoint(const std::filesystem::path& dir, const std::string& name,
                     const models::Seq2SeqModel<float>& model, const RunConfig& config, const data::Vocab& vocab,
                     bool interaction);

/// Throws IoError on missing files, a version mismatch, or a manifest that
/// does not match the rebuilt model.
Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::string& name = "model");

}  // namespace sbi::cli
