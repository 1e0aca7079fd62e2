#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bsrkit/bsr.hpp"
#include "bsrkit/error.hpp"
#include "bsrkit/hash.hpp"
#include "bsrkit/noise.hpp"
#include "bsrkit/pipeline.hpp"
#include "bsrkit/spectral.hpp"
#include "fixtures.hpp"

namespace bsrkit {
namespace {

namespace fs = std::filesystem;
using pipeline::FeatureType;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(BSRKIT_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

void write_config(const fs::path& path, const pipeline::PipelineConfig& cfg) {
  std::ofstream(path) << pipeline::to_json(cfg);
}

pipeline::PipelineConfig small_config(const fs::path& root, const fs::path& out) {
  pipeline::PipelineConfig cfg;
  cfg.dataset_root = root;
  cfg.output_dir = out;
  cfg.train.epochs = 20;
  cfg.jobs = 1;
  return cfg;
}

TEST(Config, RoundTrip) {
  pipeline::PipelineConfig cfg;
  cfg.dataset_root = "/data/speech";
  cfg.manifest = "/data/m.tsv";
  cfg.output_dir = "out dir";
  cfg.features = {FeatureType::kBsrInt16, FeatureType::kMfcc};
  cfg.noise = noise::standard_conditions({"/n/a.wav", "/n/b.wav"});
  cfg.noise[4].seed = 18446744073709551615ull;
  cfg.condition_export = pipeline::ConditionExport::kPcm16;
  cfg.train.lr0 = 0.1 / 3;
  cfg.train.restart_epochs = {3, 9};
  cfg.fusion_subsets = {{"bsr-int16"}, {"bsr-int16", "mfcc"}};
  cfg.confusion_pair = {"mfcc", "bsr-int16"};
  cfg.master_seed = 1234567890123ull;
  cfg.jobs = 3;
  cfg.allow_other_rates = true;
  cfg.clip_length = 8000;
  cfg.splits.testing_pct = 12.5;
  cfg.frame.preemphasis = 0.95;
  const auto text = pipeline::to_json(cfg);
  const auto back = pipeline::from_json(text);
  EXPECT_TRUE(back == cfg);
  EXPECT_EQ(pipeline::to_json(back), text);
  EXPECT_TRUE(pipeline::from_json(pipeline::to_json({})) == pipeline::PipelineConfig{});
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(pipeline::from_json("{"), Error);
  EXPECT_THROW(pipeline::from_json(R"({"features": ["spectrogram"]})"), Error);
  EXPECT_THROW(pipeline::from_json(R"({"condition_export": "mp3"})"), Error);
  const auto root = testing::scratch_dir("cfg_validate");
  auto cfg = small_config(root, root / "out");
  EXPECT_NO_THROW(cfg.validate());
  auto c = cfg;
  c.dataset_root = root / "missing";
  EXPECT_THROW(c.validate(), Error);
  c = cfg;
  c.noise = {{noise::NoiseKind::kBackground, 10, 0, {root / "nope.wav"}}};
  EXPECT_THROW(c.validate(), Error);
  c = cfg;
  c.fusion_subsets = {{"fbank", "bsr-int16"}};
  EXPECT_THROW(c.validate(), Error);
  c = cfg;
  c.features = {FeatureType::kFbank, FeatureType::kFbank};
  EXPECT_THROW(c.validate(), Error);
  c = cfg;
  c.noise = {{noise::NoiseKind::kWhite, 10, 0, {}}, {noise::NoiseKind::kWhite, 10, 5, {}}};
  EXPECT_THROW(c.validate(), Error);
}

TEST(Pipeline, SubsetNamingAndOrder) {
  pipeline::PipelineConfig cfg;
  const auto subsets = pipeline::fusion_subsets(cfg);
  ASSERT_EQ(subsets.size(), 14u);
  EXPECT_EQ(pipeline::subset_name(subsets[0]), "bsr-float16");
  EXPECT_EQ(pipeline::subset_name(subsets[4]), "bsr-float16&fbank");
  EXPECT_EQ(pipeline::subset_name(subsets[13]), "fbank&mfcc&raw");
}

TEST(Pipeline, ParallelForCoversEveryIndexAndRethrows) {
  std::vector<int> hits(1000, 0);
  pipeline::parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  EXPECT_THROW(pipeline::parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw std::runtime_error("x");
               }),
               std::runtime_error);
}

TEST(Cli, ExtractWritesOneFilePerClip) {
  const auto dir = testing::scratch_dir("cli_extract");
  testing::make_dataset(dir / "data", 4, 1, 1, 1);
  const auto cfg = small_config(dir / "data", dir / "out");
  write_config(dir / "cfg.json", cfg);

  auto r = cli("--config " + (dir / "cfg.json").string() + " extract --kind fbank", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(read_text(dir / "out/features/clear/fbank/manifest.tsv"));
  ASSERT_EQ(rows.size(), 13u);
  EXPECT_EQ(rows[0], "clip_id\tlabel\tsplit\tpath");
  EXPECT_EQ(rows[1].substr(0, rows[1].find('\t')), "chirp/chirp_0");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto path = rows[i].substr(rows[i].rfind('\t') + 1);
    const auto fm = spectral::load(dir / "out" / path);
    EXPECT_EQ(fm.frames(), 99u);
    EXPECT_EQ(fm.dims(), 120u);
  }
  EXPECT_FALSE(fs::exists(dir / "out/features/clear/mfcc"));

  r = cli("--config " + (dir / "cfg.json").string() + " extract --kind bsr-float16", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = bsr::load(dir / "out/features/clear/bsr-float16/tone/tone_0.bsr");
  EXPECT_EQ(m.rows(), 16000u);
  EXPECT_EQ(m.kind(), bsr::Kind::kFloat16);
}

TEST(Cli, UsageAndDataErrors) {
  const auto dir = testing::scratch_dir("cli_errors");
  EXPECT_EQ(cli("", dir).code, 1);
  EXPECT_EQ(cli("extract", dir).code, 1);
  EXPECT_EQ(cli("--config " + (dir / "none.json").string() + " extract", dir).code, 1);
  fs::create_directories(dir / "empty");
  write_config(dir / "empty.json", small_config(dir / "empty", dir / "out_empty"));
  auto r = cli("--config " + (dir / "empty.json").string() + " extract", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir / "out_empty/features/clear/fbank/manifest.tsv"));

  testing::make_dataset(dir / "data", 3, 2, 1, 1);
  write_config(dir / "cfg.json", small_config(dir / "data", dir / "out"));
  r = cli("--config " + (dir / "cfg.json").string() + " train", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("manifest.tsv"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("extract"), std::string::npos) << r.err;
}

TEST(Cli, UnreadableClipIsPartialFailure) {
  const auto dir = testing::scratch_dir("cli_partial");
  testing::make_dataset(dir / "data", 3, 3, 1, 1);
  std::ofstream(dir / "data/tone/broken.wav") << "RIFF....WAVEfmt ";
  write_config(dir / "cfg.json", small_config(dir / "data", dir / "out"));
  const auto r = cli("--config " + (dir / "cfg.json").string() + " extract --kind mfcc", dir);
  EXPECT_EQ(r.code, 3) << r.err;
  const auto failures = read_text(dir / "out/failures.tsv");
  EXPECT_NE(failures.find("tone/broken.wav"), std::string::npos);
  EXPECT_EQ(lines(read_text(dir / "out/features/clear/mfcc/manifest.tsv")).size(), 10u);
}

TEST(Cli, SynthesizeIsDeterministic) {
  const auto dir = testing::scratch_dir("cli_synth");
  testing::make_dataset(dir / "data", 3, 4, 1, 1);
  auto cfg = small_config(dir / "data", dir / "a");
  cfg.features = {FeatureType::kFbank};
  cfg.noise = {{noise::NoiseKind::kWhite, 0.0, 0, {}}};
  cfg.condition_export = pipeline::ConditionExport::kPcm16;
  write_config(dir / "a.json", cfg);
  cfg.output_dir = dir / "b";
  write_config(dir / "b.json", cfg);
  ASSERT_EQ(cli("--config " + (dir / "a.json").string() + " synthesize", dir).code, 0);
  ASSERT_EQ(cli("--config " + (dir / "b.json").string() + " --jobs 2 synthesize", dir).code, 0);
  const auto manifest_a = read_text(dir / "a/conditions/white_0dB/manifest.tsv");
  EXPECT_EQ(manifest_a, read_text(dir / "b/conditions/white_0dB/manifest.tsv"));
  EXPECT_EQ(lines(manifest_a).size(), 10u);
  EXPECT_EQ(lines(manifest_a)[0], "path\tlabel\tcondition\tsnr_db\tseed");
  for (const char* clip : {"tone/tone_0.wav", "chirp/chirp_2.wav"}) {
    const fs::path rel = fs::path("conditions/white_0dB/wav") / clip;
    EXPECT_EQ(hash_file(dir / "a" / rel), hash_file(dir / "b" / rel));
  }
  // Noisy features are extracted for the test split only.
  EXPECT_EQ(lines(read_text(dir / "a/features/white_0dB/fbank/manifest.tsv")).size(), 4u);

  auto r = cli("--config " + (dir / "a.json").string() + " --seed 99 --out " + (dir / "c").string() + " synthesize", dir);
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(read_text(dir / "c/conditions/white_0dB/manifest.tsv"), manifest_a);
}

TEST(Cli, EndToEndTableAndCache) {
  const auto dir = testing::scratch_dir("cli_e2e");
  testing::make_dataset(dir / "data", 5, 5, 1, 1);
  fs::create_directories(dir / "data/_background_noise_");
  audio::write_wav(dir / "data/_background_noise_/hum.wav",
                   audio::quantize(audio::normalize_peak(noise::pink_noise(3 * 16000, 9))));

  auto r = cli("config --dataset " + (dir / "data").string() + " --out " + (dir / "out").string(), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  auto cfg = pipeline::from_json(r.out);
  EXPECT_EQ(cfg.noise.size(), 9u);
  cfg.train.epochs = 20;
  write_config(dir / "cfg.json", cfg);

  r = cli("--config " + (dir / "cfg.json").string() + " run", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_text(dir / "out/report/accuracy.tsv");
  const auto rows = lines(report);
  ASSERT_EQ(rows.size(), 15u);
  EXPECT_EQ(rows[0].rfind("features\tclear\t", 0), 0u);
  for (const auto& row : rows) EXPECT_EQ(count_of(row, "\t"), 10u) << row;
  EXPECT_EQ(count_of(report, "\nbsr-float16&fbank\t"), 1u);
  EXPECT_TRUE(fs::exists(dir / "out/report/confusion_fbank.csv"));
  EXPECT_TRUE(fs::exists(dir / "out/report/confusion_bsr-float16.svg"));
  EXPECT_TRUE(fs::exists(dir / "out/report/confusion_diff_bsr-float16_vs_fbank.tsv"));
  EXPECT_TRUE(fs::exists(dir / "out/models/fbank.smx"));
  EXPECT_TRUE(fs::exists(dir / "out/models/fbank.loss.tsv"));

  r = cli("--config " + (dir / "cfg.json").string() + " run", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_of(r.err, "clips written"), 0u) << r.err;
  EXPECT_EQ(count_of(r.err, "cache hit"), 9u + 36u + 40u + 4u + 40u + 140u + 1u) << r.err;
  EXPECT_EQ(read_text(dir / "out/report/accuracy.tsv"), report);

  // Touching one model's training input reruns only what depends on it.
  auto tweaked = cfg;
  tweaked.train.seed = 77;
  write_config(dir / "cfg2.json", tweaked);
  r = cli("--config " + (dir / "cfg2.json").string() + " train", dir);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(count_of(r.err, "cache hit"), 0u);

  std::ofstream(dir / "out/scores/clear/fbank.tsv", std::ios::trunc) << "utt_id\ta\nx\t7\n";
  r = cli("--config " + (dir / "cfg.json").string() + " fuse", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("scores/clear/fbank.tsv"), std::string::npos) << r.err;
}

TEST(Cli, Selftest) {
  const auto dir = testing::scratch_dir("cli_selftest");
  const auto r = cli("selftest", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(count_of(r.out, "[PASS]"), 5u);
}

}  // namespace
}  // namespace bsrkit
