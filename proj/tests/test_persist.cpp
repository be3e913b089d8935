// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "psl/cli.hpp"
#include "psl/digest.hpp"
#include "psl/error.hpp"
#include "psl/persist.hpp"
#include "psl/plot.hpp"
#include "psl/random.hpp"

using namespace psl;
namespace fs = std::filesystem;

namespace {

ConceptSlider make_slider(std::size_t d, std::uint64_t seed = 1) {
  ConceptSlider s;
  s.name = "radius_slider";
  Rng rng = make_rng(seed);
  s.embedding = standard_normal(rng, d);
  s.alpha_min = -1.0;
  s.alpha_max = 3.0;
  s.eta = 0.25;
  s.encoder_hash = EncoderHash{0x0123456789abcdefULL};
  return s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) : path_(fs::temp_directory_path() / ("psl_" + tag)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

ProbeResult sample_result(std::size_t n_alpha) {
  ProbeResult r;
  r.concept_label = "radius";
  r.n_samples = 500;
  for (std::size_t i = 0; i < n_alpha; ++i)
    r.per_alpha.push_back({0.5 * static_cast<double>(i), 1.0 + 0.3 * static_cast<double>(i), 0.1});
  r.spearman_rho = 1.0;
  return r;
}

}  // namespace

TEST(SliderFile, LayoutAndStorageSize) {
  auto s = make_slider(768);
  const auto bytes = encode_slider(s);
  const std::size_t header = slider_header_size(s);
  EXPECT_EQ(header, 4u + 2 + 4 + 1 + 12 + 2 + s.name.size() + 2 + 0 + 8);
  EXPECT_EQ(bytes.size() - header, 3072u);
  EXPECT_LE(bytes.size(), 3200u);
  EXPECT_EQ(bytes.substr(0, 4), "CSE1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0u);
  std::uint32_t d = 0;
  std::memcpy(&d, bytes.data() + 6, 4);
  EXPECT_EQ(d, 768u);
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + header, 4);
  EXPECT_EQ(first, static_cast<float>(s.embedding[0]));
}

TEST(SliderFile, RoundTripAtSinglePrecision) {
  auto s = make_slider(32);
  s.kind = SliderKind::erasure;
  s.target_token = "large_radius";
  auto back = decode_slider(encode_slider(s));
  EXPECT_EQ(back.name, s.name);
  EXPECT_EQ(back.kind, s.kind);
  EXPECT_EQ(back.target_token, s.target_token);
  EXPECT_EQ(back.encoder_hash, s.encoder_hash);
  EXPECT_EQ(back.alpha_min, -1.0);
  EXPECT_EQ(back.eta, 0.25);
  ASSERT_EQ(back.dim(), 32u);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(back.embedding[i], static_cast<double>(static_cast<float>(s.embedding[i])));
  EXPECT_EQ(encode_slider(back), encode_slider(s));
}

TEST(SliderFile, TruncationReportsOffset) {
  auto s = make_slider(16);
  auto bytes = encode_slider(s);
  bytes.pop_back();
  try {
    decode_slider(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), slider_header_size(s) + 4 * 16 - 1);
  }
}

TEST(SliderFile, BadMagicAndVersion) {
  auto bytes = encode_slider(make_slider(8));
  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_slider(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto future = bytes;
  future[4] = 2;
  try {
    decode_slider(future);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(decode_slider(bytes + "x"), FormatError);
  EXPECT_THROW(decode_slider(""), FormatError);
}

TEST(SliderFile, LoadChecksEncoder) {
  TempDir dir("slider_load");
  auto enc = PromptEncoder::build(toy_vocabulary(32), 7);
  auto s = make_slider(16);
  s.encoder_hash = enc.hash();
  save_slider(s, dir / "s.cse");
  EXPECT_THROW(load_slider(dir / "s.cse", enc), CompatibilityError);
  auto ok = make_slider(32);
  ok.encoder_hash = enc.hash();
  save_slider(ok, dir / "ok.cse");
  EXPECT_EQ(load_slider(dir / "ok.cse", enc).dim(), 32u);
  ok.encoder_hash = PromptEncoder::build(toy_vocabulary(32), 8).hash();
  save_slider(ok, dir / "other.cse");
  EXPECT_THROW(load_slider(dir / "other.cse", enc), CompatibilityError);
}

TEST(ModelFile, RoundTripIsExact) {
  auto enc = PromptEncoder::build(toy_vocabulary(32), 7);
  auto sched = default_schedule();
  auto m = DenoiserModel::build(Arch::model_b, enc, sched.steps(), 3);
  Rng rng = make_rng(2);
  for (auto& p : m.trainable_parameters())
    for (auto& v : p.mutable_values()) v += standard_normal(rng);
  m.freeze();
  const auto bytes = encode_model(m, enc, sched);
  auto b = decode_model(bytes);
  EXPECT_EQ(b.model.parameter_digest(), m.parameter_digest());
  EXPECT_EQ(b.encoder.hash(), enc.hash());
  EXPECT_EQ(b.schedule.alpha_bars(), sched.alpha_bars());
  EXPECT_TRUE(b.model.frozen());
  EXPECT_EQ(encode_model(b.model, b.encoder, b.schedule), bytes);
  EXPECT_THROW(decode_model(bytes.substr(0, bytes.size() - 3)), FormatError);
}

TEST(Manifest, TextRoundTripWithEscapes) {
  RunManifest m;
  m.command = "train-slider";
  m.argv = {"train-slider", "--name", "a=b\nc\\d"};
  m.config = {{"lr", "0.0005"}, {"target", "point\r"}};
  m.seed = 42;
  m.inputs["/tmp/x.psm"] = std::string(64, 'a');
  m.outputs["/tmp/y.cse"] = std::string(64, 'b');
  m.exit_code = 1;
  m.error = "boom\nline two";
  m.duration_seconds = 1.25;
  auto back = RunManifest::parse(m.to_text());
  EXPECT_EQ(back.command, m.command);
  EXPECT_EQ(back.argv, m.argv);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.inputs, m.inputs);
  EXPECT_EQ(back.outputs, m.outputs);
  EXPECT_EQ(back.exit_code, 1);
  EXPECT_EQ(back.error, m.error);
  EXPECT_EQ(back.to_text(), m.to_text());
  EXPECT_THROW(RunManifest::parse("format=other\n"), FormatError);
}

TEST(SweepPlot, CsvAndSvg) {
  TempDir dir("plot");
  sweep_plot(sample_result(6), dir / "sweep.svg");
  const auto csv = read_file(dir / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  const auto svg = read_file(dir / "sweep.svg");
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
  EXPECT_EQ(svg, render_sweep_svg(sample_result(6)));
}

TEST(SweepPlot, SingleAlphaHasMarkerWithoutLine) {
  const auto svg = render_sweep_svg(sample_result(1));
  EXPECT_EQ(svg.find("<polyline"), std::string::npos);
  EXPECT_NE(svg.find("<circle"), std::string::npos);
  EXPECT_THROW(render_sweep_svg(ProbeResult{}), ContractError);
}

TEST(FileIo, AtomicWriteLeavesNoTemporaries) {
  TempDir dir("atomic");
  write_file_atomic(dir / "f.bin", "abc");
  write_file_atomic(dir / "f.bin", "defg");
  EXPECT_EQ(read_file(dir / "f.bin"), "defg");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(fs::path(dir / "f.bin").parent_path())) files += e.is_regular_file();
  EXPECT_EQ(files, 1u);
  EXPECT_THROW(write_file_atomic(dir / "missing/f.bin", "x"), std::runtime_error);
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir("cli_usage");
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"no-such-command"}).code, kExitUsage);
  EXPECT_EQ(run({"gen-data", "--bogus"}).code, kExitUsage);
  auto r = run({"sweep-plot", "--out", dir / "x.svg"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--slider"), std::string::npos);
  EXPECT_EQ(run({"train-slider", "--model", dir / "missing.psm"}).code, kExitUsage);
  EXPECT_FALSE(fs::exists(dir / "x.svg.manifest"));
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, DomainErrorExitsOneAndRecordsManifest) {
  TempDir dir("cli_domain");
  ASSERT_EQ(run({"gen-data", "--count", "300", "--out", dir / "d.csv"}).code, kExitOk);
  auto r = run({"train-base", "--data", dir / "d.csv", "--iters", "2", "--batch", "8", "--beta-end", "1.5", "--out",
                dir / "m.psm"});
  EXPECT_EQ(r.code, kExitDomainError);
  auto m = load_manifest(dir / "m.psm.manifest");
  EXPECT_EQ(m.exit_code, 1);
  EXPECT_FALSE(m.error.empty());
  EXPECT_FALSE(fs::exists(dir / "m.psm"));
}

TEST(Cli, PipelineAndReplayAreByteIdentical) {
  TempDir dir("cli_replay");
  ASSERT_EQ(run({"gen-data", "--count", "400", "--seed", "3", "--out", dir / "d.csv"}).code, kExitOk);
  ASSERT_EQ(run({"train-base", "--data", dir / "d.csv", "--iters", "30", "--batch", "32", "--out", dir / "m.psm"}).code,
            kExitOk);
  ASSERT_EQ(run({"train-slider", "--model", dir / "m.psm", "--data", dir / "d.csv", "--concept", "radius", "--iters", "20", "--out",
                 dir / "s.cse"})
                .code,
            kExitOk);
  EXPECT_EQ(load_slider(dir / "s.cse").dim(), 32u);
  const auto m = load_manifest(dir / "s.cse.manifest");
  EXPECT_EQ(m.command, "train-slider");
  EXPECT_EQ(m.exit_code, 0);
  ASSERT_EQ(m.outputs.count(dir / "s.cse"), 1u);
  EXPECT_EQ(m.outputs.at(dir / "s.cse"), sha256_file(dir / "s.cse"));
  EXPECT_EQ(m.inputs.at(dir / "m.psm"), sha256_file(dir / "m.psm"));

  const auto before = sha256_file(dir / "s.cse");
  fs::remove(dir / "s.cse");
  std::ostringstream out, err;
  ASSERT_EQ(replay_manifest(dir / "s.cse.manifest", out, err), kExitOk) << err.str();
  EXPECT_EQ(sha256_file(dir / "s.cse"), before);

  ASSERT_EQ(run({"sample", "--model", dir / "m.psm", "--prompt", "point", "--slider", dir / "s.cse", "--alpha", "1",
                 "--n", "50", "--steps", "10", "--out", dir / "samples.csv"})
                .code,
            kExitOk);
  const auto samples = read_file(dir / "samples.csv");
  EXPECT_EQ(std::count(samples.begin(), samples.end(), '\n'), 51);
}
