#include "sbi/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "sbi/training.hpp"

namespace sbi::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "sbi-checkpoint";

void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string shape_text(const ad::Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s.empty() ? "scalar" : s;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const std::string& name, const models::Seq2SeqModel<float>& model,
                     const RunConfig& config, const data::Vocab& vocab, bool interaction) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::string blob;
  std::ostringstream manifest;
  manifest << kMagic << ' ' << kCheckpointVersion << '\n';
  manifest << "architecture " << model.architecture() << '\n';
  manifest << "vocab_size " << model.vocab_size() << '\n';
  manifest << "interaction " << (interaction ? "true" : "false") << '\n';
  manifest << "vocab " << name << ".vocab\n";
  manifest << "blob " << name << ".bin\n";
  std::ostringstream cfg;
  write_config(cfg, config);
  std::istringstream lines(cfg.str());
  for (std::string line; std::getline(lines, line);) manifest << "config " << line << '\n';
  std::size_t offset = 0;
  for (const auto& e : model.params().entries()) {
    const auto values = e.tensor.values();
    manifest << "param " << e.name << ' ' << shape_text(e.tensor.shape()) << ' ' << offset << ' ' << values.size()
             << '\n';
    for (float v : values) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
    }
    offset += values.size();
  }
  manifest << "end " << offset << '\n';

  const fs::path vocab_tmp = dir / (name + ".vocab.tmp");
  vocab.save(vocab_tmp);
  fs::rename(vocab_tmp, dir / (name + ".vocab"), ec);
  if (ec) throw IoError("cannot rename " + vocab_tmp.string() + ": " + ec.message());
  write_atomic(dir / (name + ".bin"), blob);
  // The manifest goes last so a readable manifest implies complete siblings.
  write_atomic(dir / (name + ".manifest"), manifest.str());
}

Checkpoint load_checkpoint(const fs::path& dir, const std::string& name) {
  const fs::path manifest_path = dir / (name + ".manifest");
  if (!fs::exists(manifest_path)) throw IoError("checkpoint manifest not found: " + manifest_path.string());
  std::istringstream in(read_all(manifest_path));

  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) throw IoError(manifest_path.string() + ": not a checkpoint manifest");
  if (version != kCheckpointVersion)
    throw IoError(manifest_path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                  std::to_string(kCheckpointVersion));

  Checkpoint ck;
  std::string architecture, vocab_file, blob_file;
  std::size_t vocab_size = 0, total = 0;
  struct ParamLine {
    std::string name, shape;
    std::size_t offset, count;
  };
  std::vector<ParamLine> params;
  bool ended = false;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "architecture") ls >> architecture;
    else if (kind == "vocab_size") ls >> vocab_size;
    else if (kind == "interaction") {
      std::string v;
      ls >> v;
      ck.interaction = v == "true";
    } else if (kind == "vocab") ls >> vocab_file;
    else if (kind == "blob") ls >> blob_file;
    else if (kind == "config") {
      std::string rest;
      std::getline(ls, rest);
      const auto eq = rest.find('=');
      if (eq == std::string::npos) throw IoError(manifest_path.string() + ": malformed config line '" + line + "'");
      std::string key = rest.substr(0, eq);
      key.erase(0, key.find_first_not_of(' '));
      key.erase(key.find_last_not_of(' ') + 1);
      ck.config.set(key, rest.substr(eq + 1));
    } else if (kind == "param") {
      ParamLine p;
      ls >> p.name >> p.shape >> p.offset >> p.count;
      if (!ls) throw IoError(manifest_path.string() + ": malformed param line '" + line + "'");
      params.push_back(p);
    } else if (kind == "end") {
      ls >> total;
      ended = true;
    } else if (!kind.empty()) {
      throw IoError(manifest_path.string() + ": unknown manifest entry '" + kind + "'");
    }
  }
  if (!ended) throw IoError(manifest_path.string() + ": truncated manifest");

  ck.vocab = data::Vocab::load(dir / vocab_file);
  if (ck.vocab.size() != vocab_size)
    throw IoError(manifest_path.string() + ": vocabulary has " + std::to_string(ck.vocab.size()) + " entries, expected " +
                  std::to_string(vocab_size));
  const std::string blob = read_all(dir / blob_file);
  if (blob.size() != 4 * total) throw IoError((dir / blob_file).string() + ": size does not match the manifest");

  if (architecture != ck.config.model.architecture)
    throw IoError(manifest_path.string() + ": architecture does not match the config snapshot");
  ck.model = train::make_model<float>(ck.config.model_spec(vocab_size));
  auto& entries = ck.model->params().entries();
  if (entries.size() != params.size())
    throw IoError(manifest_path.string() + ": " + std::to_string(params.size()) + " parameters, model has " +
                  std::to_string(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    const auto& p = params[i];
    auto values = e.tensor.mutable_values();
    if (p.name != e.name || p.shape != shape_text(e.tensor.shape()) || p.count != values.size() ||
        p.offset + p.count > total)
      throw IoError(manifest_path.string() + ": parameter '" + p.name + "' does not match the model");
    for (std::size_t k = 0; k < values.size(); ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[4 * (p.offset + k) + static_cast<std::size_t>(b)])) << (8 * b);
      values[k] = std::bit_cast<float>(bits);
    }
  }
  return ck;
}

}  // namespace sbi::cli
