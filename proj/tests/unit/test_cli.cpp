#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sbi/checkpoint.hpp"
#include "sbi/cli.hpp"
#include "sbi/config.hpp"
#include "sbi/training.hpp"

namespace {

namespace fs = std::filesystem;
using sbi::cli::ConfigError;
using sbi::cli::RunConfig;

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("sbi_cli_test_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "sbi");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = sbi::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Config, ParsesCommentsAndBlankLines) {
  std::istringstream in("# run\narchitecture = lstm\n\nhidden=32  # width\nbeam = 6\nstrategy = fine-tune\n");
  const auto c = sbi::cli::parse_config(in);
  EXPECT_EQ(c.model.architecture, "lstm");
  EXPECT_EQ(c.model.lstm.hidden, 32u);
  EXPECT_EQ(c.beam.beam, 6u);
  EXPECT_EQ(c.strategy, sbi::cli::Strategy::kFineTune);
}

TEST(Config, UnknownKeyNamesTheKey) {
  std::istringstream in("beam = 4\nbeam_size = 4\n");
  try {
    sbi::cli::parse_config(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "beam_size");
  }
}

TEST(Config, BadValuesNameTheKey) {
  RunConfig c;
  try {
    c.set("dropout", "lots");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "dropout");
  }
  EXPECT_THROW(c.set("architecture", "gru"), ConfigError);
  EXPECT_THROW(c.set("from_scratch", "maybe"), ConfigError);
  c.set("heads", "3");
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "heads");
  }
}

TEST(Config, WriteThenParseRoundTrips) {
  RunConfig c;
  c.set("architecture", "lstm");
  c.set("alpha", "0.7");
  c.set("lr_scale", "0.1");
  c.set("seed", "99");
  c.set("train", "data/train.tsv");
  std::ostringstream out;
  sbi::cli::write_config(out, c);
  std::istringstream in(out.str());
  const auto d = sbi::cli::parse_config(in);
  for (const auto& key : RunConfig::keys()) EXPECT_EQ(d.get(key), c.get(key)) << key;
  EXPECT_EQ(d.training.seed, 99u);
}

TEST(Config, DecodeDefaults) {
  RunConfig c;
  EXPECT_EQ(c.beam.beam, 4u);
  EXPECT_DOUBLE_EQ(c.beam.alpha, 0.6);
  EXPECT_NO_THROW(c.validate());
}

TEST(Cli, GenDataIsDeterministic) {
  const auto a = run({"gen-data", "--task", "copy", "--count", "1000", "--seed", "7"});
  const auto b = run({"gen-data", "--task", "copy", "--count", "1000", "--seed", "7"});
  const auto c = run({"--seed", "8", "gen-data", "--task", "copy", "--count", "1000"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, c.out);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 1000);
  const auto br = run({"gen-data", "--task", "bracket", "--count", "50"});
  EXPECT_EQ(br.code, 0);
  EXPECT_EQ(run({"gen-data", "--task", "sort"}).code, sbi::cli::kExitConfig);
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  EXPECT_EQ(run({"frobnicate"}).code, sbi::cli::kExitConfig);
  EXPECT_EQ(run({"train", "--nonsense", "1"}).code, sbi::cli::kExitConfig);
  const auto missing = run({"evaluate", "--ref", (tmp.path / "absent.txt").string(), "--hyp", "x"});
  EXPECT_EQ(missing.code, sbi::cli::kExitIo);
  EXPECT_NE(missing.err.find("absent.txt"), std::string::npos);
  const auto bad = run({"train", "--heads", "5", "--train", "x", "--valid", "y", "--output", "z"});
  EXPECT_EQ(bad.code, sbi::cli::kExitConfig);
  EXPECT_NE(bad.err.find("heads"), std::string::npos);
  const auto nodata = run({"train", "--train", (tmp.path / "none.tsv").string(), "--valid", "y", "--output", "z"});
  EXPECT_EQ(nodata.code, sbi::cli::kExitIo);
  EXPECT_NE(nodata.err.find("none.tsv"), std::string::npos);
  EXPECT_EQ(run({"decode", "--checkpoint", tmp.path.string(), "--input", "x"}).code, sbi::cli::kExitIo);
}

TEST(Cli, EvaluateIdenticalPrintsHundred) {
  TempDir tmp;
  const auto corpus = tmp.path / "c.tsv";
  ASSERT_EQ(run({"gen-data", "--count", "30", "-o", corpus.string()}).code, 0);
  std::ofstream(tmp.path / "hyp.txt") << [&] {
    std::istringstream in(slurp(corpus));
    std::string out;
    for (std::string l; std::getline(in, l);) out += l.substr(l.find('\t') + 1) + "\n";
    return out;
  }();
  const auto r = run({"evaluate", "--ref", corpus.string(), "--hyp", (tmp.path / "hyp.txt").string(), "--report",
                      (tmp.path / "m.tsv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("bleu = 100.00\n"), std::string::npos);
  EXPECT_NE(slurp(tmp.path / "m.tsv").find("bleu\t100.00\n"), std::string::npos);
  const auto a = run({"analyze", "--ref", corpus.string(), "--hyp", (tmp.path / "hyp.txt").string(), "--hyp",
                      (tmp.path / "hyp.txt").string(), "--label", "a", "--label", "b"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("first4\t100.00\t100.00\n"), std::string::npos);
}

class Checkpoint : public ::testing::TestWithParam<std::string> {};

TEST_P(Checkpoint, RoundTripIsBitExactAndDecodesIdentically) {
  TempDir tmp;
  RunConfig config;
  config.set("architecture", GetParam());
  config.set("d_model", "16");
  config.set("heads", "2");
  config.set("d_ff", "24");
  config.set("layers", "1");
  config.set("hidden", "12");
  config.set("lstm_layers", "1");
  config.set("seed", "5");
  sbi::data::CopyTaskOptions o;
  o.count = 12;
  const auto corpus = sbi::data::gen_copy_task(o);
  const auto vocab = sbi::data::build_vocab(corpus);
  auto model = sbi::train::make_model<float>(config.model_spec(vocab.size()));
  // A nonzero Transformer lambda makes the interaction path matter for the decode comparison.
  if (model->params().contains("lambda")) model->params().get("lambda").node()->value[0] = 0.25f;
  sbi::cli::save_checkpoint(tmp.path, "model", *model, config, vocab, true);
  const auto ck = sbi::cli::load_checkpoint(tmp.path);
  EXPECT_TRUE(ck.interaction);
  EXPECT_EQ(ck.vocab, vocab);
  const auto& a = model->params().entries();
  const auto& b = ck.model->params().entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    ASSERT_EQ(a[i].tensor.shape(), b[i].tensor.shape());
    const auto x = a[i].tensor.values(), y = b[i].tensor.values();
    EXPECT_EQ(std::memcmp(x.data(), y.data(), x.size() * sizeof(float)), 0) << a[i].name;
  }
  std::vector<std::vector<sbi::data::TokenId>> sources;
  for (const auto& ex : corpus) sources.push_back(sbi::data::encode_tokens(ex.source, vocab));
  sbi::cli::DecodeOptions opt;
  opt.beam.max_len = 12;
  EXPECT_EQ(sbi::cli::decode_all(*model, sources, opt), sbi::cli::decode_all(*ck.model, sources, opt));
}

INSTANTIATE_TEST_SUITE_P(Architectures, Checkpoint, ::testing::Values("transformer", "lstm"));

TEST(CheckpointFormat, DetectsVersionMismatchAndCorruption) {
  TempDir tmp;
  RunConfig config;
  config.set("d_model", "8");
  config.set("heads", "2");
  config.set("d_ff", "8");
  config.set("layers", "1");
  sbi::data::Vocab vocab;
  vocab.add("a");
  auto model = sbi::train::make_model<float>(config.model_spec(vocab.size()));
  sbi::cli::save_checkpoint(tmp.path, "m", *model, config, vocab, false);
  EXPECT_FALSE(sbi::cli::load_checkpoint(tmp.path, "m").interaction);
  EXPECT_FALSE(fs::exists(tmp.path / "m.bin.tmp"));

  auto text = slurp(tmp.path / "m.manifest");
  std::ofstream(tmp.path / "v.manifest") << "sbi-checkpoint 2" << text.substr(text.find('\n'));
  fs::copy_file(tmp.path / "m.bin", tmp.path / "v.bin");
  EXPECT_THROW(sbi::cli::load_checkpoint(tmp.path, "v"), sbi::cli::IoError);

  fs::resize_file(tmp.path / "m.bin", fs::file_size(tmp.path / "m.bin") - 4);
  EXPECT_THROW(sbi::cli::load_checkpoint(tmp.path, "m"), sbi::cli::IoError);
  EXPECT_THROW(sbi::cli::load_checkpoint(tmp.path, "absent"), sbi::cli::IoError);
}

}  // namespace
