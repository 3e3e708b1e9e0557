#pragma once

// Vocabulary, toy-task generators, batching and corpus files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sbi::data {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kL2R = 4;
inline constexpr TokenId kR2L = 5;
inline constexpr TokenId kNumReserved = 6;

inline bool is_reserved(TokenId id) { return id >= 0 && id < kNumReserved; }

class Vocab {
 public:
  /// Vocabulary holding only the reserved tokens.
  Vocab();

  /// Adds `token` if new; returns its id.
  TokenId add(std::string_view token);
  /// Id of `token`, or kUnk when absent.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line, line number = id.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

const std::vector<std::string>& reserved_tokens();

/// Whitespace-tokenized example as it appears in a corpus file.
struct TextExample {
  std::vector<std::string> source;
  std::vector<std::string> target;

  bool operator==(const TextExample&) const = default;
};

using TextCorpus = std::vector<TextExample>;

/// Vocabulary over every token in `corpus`, sorted so ids are reproducible.
Vocab build_vocab(const TextCorpus& corpus);

/// Unit of bidirectional training: source, target, and the target reversed.
/// Pseudo targets are attached by the training strategies; the backward one is
/// stored in right-to-left generation order.
struct TrainingTriple {
  std::vector<TokenId> source;
  std::vector<TokenId> forward;
  std::vector<TokenId> backward;
  std::optional<std::vector<TokenId>> pseudo_forward;
  std::optional<std::vector<TokenId>> pseudo_backward;
};

std::vector<std::string> split_tokens(std::string_view line);
std::string join_tokens(std::span<const std::string> tokens);

/// Whitespace-tokenize and map to ids; unknown (and literal reserved) tokens map to <unk>.
std::vector<TokenId> encode(std::string_view line, const Vocab& vocab);
std::vector<TokenId> encode_tokens(std::span<const std::string> tokens, const Vocab& vocab);
std::string decode(std::span<const TokenId> ids, const Vocab& vocab);

TrainingTriple make_triple(const TextExample& example, const Vocab& vocab);
std::vector<TrainingTriple> make_triples(const TextCorpus& corpus, const Vocab& vocab);

// ---- generators -----------------------------------------------------------

struct CopyTaskOptions {
  std::size_t count = 1000;
  std::size_t vocab_size = 16;
  std::size_t min_len = 3;
  std::size_t max_len = 10;
  std::uint64_t seed = 7;
};

/// Target equals source. Symbols are named w0 .. w{vocab_size-1}.
TextCorpus gen_copy_task(const CopyTaskOptions& options);

struct BracketTaskOptions {
  std::size_t count = 1000;
  std::size_t min_depth = 3;
  std::size_t max_depth = 8;
  std::size_t noise_symbols = 4;
  std::uint64_t seed = 7;
};

/// Source: typed opening brackets, each followed with probability 1/2 by a
/// noise symbol (n0 ..). Target: the noise-free opening sequence followed by
/// the matching closing brackets in nesting order.
TextCorpus gen_bracket_task(const BracketTaskOptions& options);

/// Closing bracket for an opening one, or empty if `open` is not a bracket.
std::string_view closing_bracket(std::string_view open);

// ---- batching -------------------------------------------------------------

struct Batch {
  std::size_t size = 0;
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<TokenId> source;  // size * source_len, padded with kPad
  std::vector<std::uint8_t> source_mask;
  std::vector<TokenId> forward;  // size * target_len
  std::vector<TokenId> backward;
  std::vector<std::uint8_t> target_mask;
  std::vector<std::size_t> indices;  // positions in the input corpus
};

/// Splits the corpus into batches of at most `batch_size`. With
/// `sort_by_length`, triples are ordered by (source, target) length first so
/// each batch carries less padding.
std::vector<Batch> batchify(std::span<const TrainingTriple> corpus, std::size_t batch_size, bool sort_by_length);

// ---- corpus files ---------------------------------------------------------

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// UTF-8, one example per line: "source tokens<TAB>target tokens".
TextCorpus read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const TextCorpus& corpus);

/// One whitespace-tokenized line per entry (hypothesis or plain source files).
std::vector<std::vector<std::string>> read_token_lines(const std::filesystem::path& path);
void write_token_lines(const std::filesystem::path& path, const std::vector<std::vector<std::string>>& lines);

}  // namespace sbi::data
