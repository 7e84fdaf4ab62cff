#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "skipfuse/skipfuse.hpp"
#include "skipfuse_cli.hpp"

using namespace skipfuse;
using fixtures::make_config;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "skipfuse");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), {out, err});
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("skipfuse_cli_" + std::string(
                                  ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_config(const std::string& name, const ModelConfig& c) const {
    std::ofstream(path(name)) << config_to_text(c);
    return path(name);
  }

  fs::path dir_;
};

std::map<std::string, std::string> as_map(const std::string& text) {
  const KeyValues kv = parse_key_values(text);
  return {kv.begin(), kv.end()};
}

}  // namespace

TEST_F(CliTest, InitWritesLoadableCheckpoint) {
  const auto c = make_config({16, 2, 4, 2, 32, 11});
  const auto cfg = write_config("tiny.cfg", c);
  const auto r = run_cli({"init", "--config", cfg, "--seed", "7", "--out", path("m.skf")});
  ASSERT_EQ(r.code, 0) << r.err;
  const ModelWeights m = load(path("m.skf"));
  EXPECT_EQ(m, random_model(c, 7));
  EXPECT_EQ(m.stored_floats(), count_weights(c).total);
  EXPECT_NE(r.out.find(with_commas(count_weights(c).total)), std::string::npos);
}

TEST_F(CliTest, InitPresetCountOnly) {
  const auto r = run_cli({"init", "--config", "mistral-7b", "--count-only"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("15%"), std::string::npos);
  EXPECT_NE(r.out.find("1.17x"), std::string::npos);
  EXPECT_TRUE(fs::is_empty(dir_));
}

TEST_F(CliTest, InitRefusesHugeModelWithoutForce) {
  const auto r = run_cli({"init", "--config", "mistral-7b", "--out", path("big.skf")});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("--force"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("big.skf")));
}

TEST_F(CliTest, InitWithoutOutIsUsageError) {
  const auto cfg = write_config("tiny.cfg", make_config({8, 1, 2, 2, 16, 5}));
  const auto r = run_cli({"init", "--config", cfg});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("--out"), std::string::npos);
}

TEST_F(CliTest, InitBadConfig) {
  std::ofstream(path("bad.cfg")) << "d=16\nn_heads=0\n";
  EXPECT_EQ(run_cli({"init", "--config", path("bad.cfg"), "--out", path("m.skf")}).code,
            cli::kConfigError);
  EXPECT_EQ(run_cli({"init", "--config", path("missing.cfg"), "--count-only"}).code,
            cli::kConfigError);
}

TEST_F(CliTest, FuseSerialQReportsDelta) {
  const auto cfg = write_config("tiny.cfg", make_config({16, 3, 4, 4, 32, 11}));
  ASSERT_EQ(run_cli({"init", "--config", cfg, "--out", path("m.skf")}).code, 0);
  const auto r = run_cli({"fuse", "--in", path("m.skf"), "--variant", "q", "--out", path("f.skf")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(as_map(r.out.substr(r.out.find("weights_before")))["delta"],
            std::to_string(2 * 16 * 16 * 3));
  EXPECT_EQ(load(path("f.skf")).config.reduced_form, ReducedForm::NoQP);
}

TEST_F(CliTest, FuseGqaVariantVNotApplicable) {
  const auto cfg = write_config("gqa.cfg", make_config({16, 2, 4, 2, 32, 11}));
  ASSERT_EQ(run_cli({"init", "--config", cfg, "--out", path("m.skf")}).code, 0);
  const auto r = run_cli({"fuse", "--in", path("m.skf"), "--variant", "v", "--out", path("f.skf")});
  EXPECT_EQ(r.code, cli::kNotApplicable);
  EXPECT_NE(r.err.find("e != d"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("f.skf")));
}

TEST_F(CliTest, FuseParallelQDelta) {
  const auto cfg = write_config("par.cfg", make_config({16, 3, 4, 4, 32, 11}, Topology::Parallel));
  ASSERT_EQ(run_cli({"init", "--config", cfg, "--out", path("m.skf")}).code, 0);
  const auto r = run_cli({"fuse", "--in", path("m.skf"), "--variant", "q", "--out", path("f.skf")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(as_map(r.out.substr(r.out.find("weights_before")))["delta"],
            std::to_string(16 * 16 * 3));
}

TEST_F(CliTest, FuseSingularExitsFiveWithBlock) {
  ModelWeights m = random_model(make_config({8, 3, 2, 2, 16, 5}), 1);
  for (std::size_t c = 0; c < 8; ++c) (*m.blocks[2].Q)(1, c) = (*m.blocks[2].Q)(0, c);
  save(m, Dtype::F64, path("m.skf"));
  const auto r = run_cli({"fuse", "--in", path("m.skf"), "--variant", "q", "--out", path("f.skf")});
  EXPECT_EQ(r.code, cli::kSingular);
  EXPECT_NE(r.err.find("blk2.Q"), std::string::npos) << r.err;
}

TEST_F(CliTest, FuseBadVariantAndMissingInput) {
  EXPECT_EQ(run_cli({"fuse", "--in", path("x.skf"), "--variant", "p", "--out", path("f.skf")}).code,
            cli::kConfigError);
  EXPECT_EQ(run_cli({"fuse", "--in", path("x.skf"), "--variant", "q", "--out", path("f.skf")}).code,
            cli::kIoError);
}

TEST_F(CliTest, VerifyOutcomes) {
  const auto cfg = write_config("tiny.cfg", make_config({16, 2, 4, 4, 32, 11}));
  ASSERT_EQ(run_cli({"init", "--config", cfg, "--seed", "3", "--out", path("m.skf")}).code, 0);
  ASSERT_EQ(run_cli({"fuse", "--in", path("m.skf"), "--variant", "k", "--out", path("f.skf")}).code, 0);

  auto r = run_cli({"verify", "--a", path("m.skf"), "--b", path("f.skf")});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_LT(std::stod(as_map(r.out)["max_abs_diff"]), 1e-9);

  r = run_cli({"verify", "--a", path("m.skf"), "--b", path("m.skf"), "--tokens", "16"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(as_map(r.out)["max_abs_diff"], "0");

  ModelWeights p = load(path("m.skf"));
  p.U(0, 0) += 1e-2;
  save(p, Dtype::F64, path("p.skf"));
  r = run_cli({"verify", "--a", path("m.skf"), "--b", path("p.skf")});
  EXPECT_EQ(r.code, cli::kFailed);
  EXPECT_EQ(as_map(r.out)["passed"], "false");

  const auto other = write_config("other.cfg", make_config({16, 2, 4, 4, 32, 13}));
  ASSERT_EQ(run_cli({"init", "--config", other, "--out", path("o.skf")}).code, 0);
  EXPECT_EQ(run_cli({"verify", "--a", path("m.skf"), "--b", path("o.skf")}).code, cli::kMismatch);
}

TEST_F(CliTest, CountPresets) {
  auto r = run_cli({"count", "--config", "pythia-6.9b"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("16%"), std::string::npos);
  EXPECT_NE(r.out.find("1.19x"), std::string::npos);
  r = run_cli({"count", "--config", "mistral-7b"});
  EXPECT_NE(r.out.find("15%"), std::string::npos);
  EXPECT_NE(r.out.find("1.17x"), std::string::npos);
  r = run_cli({"count", "--config", "mistral-7b", "--machine"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(as_map(r.out)["total"], "7241465856");
  EXPECT_EQ(run_cli({"count", "--config", "llama-13b"}).code, cli::kConfigError);
}

TEST_F(CliTest, ForwardZeroLayerHiddenIsEmbedding) {
  const auto cfg = write_config("zero.cfg", make_config({4, 0, 2, 2, 8, 5}));
  ASSERT_EQ(run_cli({"init", "--config", cfg, "--out", path("m.skf")}).code, 0);
  const auto r = run_cli({"forward", "--model", path("m.skf"), "--tokens", "3,1,4", "--hidden"});
  ASSERT_EQ(r.code, 0) << r.err;
  const ModelWeights m = load(path("m.skf"));
  std::ostringstream expected;
  Matrix rows(3, 4);
  const std::size_t toks[] = {3, 1, 4};
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) rows(t, j) = m.E(toks[t], j);
  cli::print_matrix(expected, rows);
  EXPECT_EQ(r.out, expected.str());
  // 17 significant digits round-trip exactly.
  std::istringstream in(r.out);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) {
      double v;
      in >> v;
      EXPECT_EQ(v, rows(t, j));
    }
}

TEST_F(CliTest, ForwardDeterministicAndArgmaxStableUnderFusion) {
  const auto cfg = write_config("tiny.cfg", make_config({16, 2, 4, 4, 32, 11}));
  ASSERT_EQ(run_cli({"init", "--config", cfg, "--out", path("m.skf")}).code, 0);
  ASSERT_EQ(run_cli({"fuse", "--in", path("m.skf"), "--variant", "v", "--out", path("f.skf")}).code, 0);
  const auto a = run_cli({"forward", "--model", path("m.skf"), "--tokens", "3,1,4,1,5,9,2,6"});
  const auto b = run_cli({"forward", "--model", path("m.skf"), "--tokens", "3,1,4,1,5,9,2,6"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto f = run_cli({"forward", "--model", path("f.skf"), "--tokens", "3,1,4,1,5,9,2,6"});
  auto argmax = [](const std::string& text) {
    std::vector<std::size_t> out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      std::istringstream vals(line);
      double v, best = -INFINITY;
      std::size_t i = 0, arg = 0;
      while (vals >> v) {
        if (v > best) best = v, arg = i;
        ++i;
      }
      out.push_back(arg);
    }
    return out;
  };
  EXPECT_EQ(argmax(a.out), argmax(f.out));
}

TEST_F(CliTest, ForwardTokenOutOfRange) {
  const auto cfg = write_config("tiny.cfg", make_config({8, 1, 2, 2, 16, 5}));
  ASSERT_EQ(run_cli({"init", "--config", cfg, "--out", path("m.skf")}).code, 0);
  EXPECT_EQ(run_cli({"forward", "--model", path("m.skf"), "--tokens", "1,5"}).code,
            cli::kTokenRange);
  EXPECT_EQ(run_cli({"forward", "--model", path("m.skf"), "--tokens", "1,x"}).code,
            cli::kConfigError);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"count"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliTest, ApplicabilityMatrixEndToEnd) {
  for (auto topology : {Topology::Serial, Topology::Parallel})
    for (std::size_t kv : {4, 2, 1})
      for (const std::string variant : {"q", "k", "v"}) {
        const bool supported =
            variant == "q" || (topology == Topology::Serial && kv == 4);
        const auto cfg = write_config("m.cfg", make_config({16, 2, 4, kv, 32, 11}, topology));
        ASSERT_EQ(run_cli({"init", "--config", cfg, "--seed", "11", "--out", path("m.skf")}).code, 0);
        const auto fuse =
            run_cli({"fuse", "--in", path("m.skf"), "--variant", variant, "--out", path("f.skf")});
        const std::string label = std::string(to_string(topology)) + " kv=" +
                                  std::to_string(kv) + " variant " + variant;
        if (!supported) {
          EXPECT_EQ(fuse.code, cli::kNotApplicable) << label;
          continue;
        }
        ASSERT_EQ(fuse.code, 0) << label << ": " << fuse.err;
        EXPECT_EQ(run_cli({"verify", "--a", path("m.skf"), "--b", path("f.skf")}).code, 0) << label;
        fs::remove(path("f.skf"));
      }
}
