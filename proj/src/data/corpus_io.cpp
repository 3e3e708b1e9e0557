#include <fstream>

#include "sbi/data.hpp"

namespace sbi::data {

ParseError::ParseError(const std::string& path, std::size_t line, const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

TextCorpus read_corpus(const std::filesystem::path& path) {
  auto in = open_in(path);
  TextCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), lineno, "expected 'source<TAB>target'");
    if (line.find('\t', tab + 1) != std::string::npos)
      throw ParseError(path.string(), lineno, "more than one tab separator");
    TextExample ex;
    ex.source = split_tokens(std::string_view(line).substr(0, tab));
    ex.target = split_tokens(std::string_view(line).substr(tab + 1));
    if (ex.source.empty()) throw ParseError(path.string(), lineno, "empty source sequence");
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const TextCorpus& corpus) {
  auto out = open_out(path);
  for (const auto& ex : corpus) out << join_tokens(ex.source) << '\t' << join_tokens(ex.target) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::vector<std::string>> read_token_lines(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    lines.push_back(split_tokens(line));
  }
  return lines;
}

void write_token_lines(const std::filesystem::path& path, const std::vector<std::vector<std::string>>& lines) {
  auto out = open_out(path);
  for (const auto& l : lines) out << join_tokens(l) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace sbi::data
