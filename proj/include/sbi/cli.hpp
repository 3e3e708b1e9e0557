#pragma once

// Command-line front end: gen-data, train, decode, evaluate, analyze.

#include <optional>
#include <ostream>
#include <vector>

#include "sbi/data.hpp"
#include "sbi/model.hpp"
#include "sbi/search.hpp"

namespace sbi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

struct DecodeOptions {
  search::BeamConfig beam;
  /// Set for single-direction beam search; unset for synchronous bidirectional search.
  std::optional<search::Direction> unidirectional;
  bool use_interaction = true;
};

/// Decodes each source sentence independently.
std::vector<std::vector<data::TokenId>> decode_all(const models::Seq2SeqModel<float>& model,
                                                   const std::vector<std::vector<data::TokenId>>& sources,
                                                   const DecodeOptions& options);

/// Parses arguments and runs one command. Returns the process exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sbi::cli
