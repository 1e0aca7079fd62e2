// bsrkit command-line driver.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "bsrkit/error.hpp"
#include "bsrkit/noise.hpp"
#include "bsrkit/pipeline.hpp"
#include "bsrkit/selftest.hpp"

namespace fs = std::filesystem;
using namespace bsrkit;

namespace {

int exit_code(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfig:
      return static_cast<int>(pipeline::Status::kUsage);
    default:
      return static_cast<int>(pipeline::Status::kDataError);
  }
}

// Defaults: the nine {background, white, pink} x {20, 10, 0} dB
// conditions, with background noise from the dataset's own noise folder.
pipeline::PipelineConfig default_config(const fs::path& dataset) {
  pipeline::PipelineConfig cfg;
  cfg.dataset_root = dataset;
  std::vector<fs::path> background;
  const fs::path noise_dir = dataset / "_background_noise_";
  if (fs::is_directory(noise_dir)) {
    for (const auto& e : fs::directory_iterator(noise_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") background.push_back(e.path());
    }
  }
  std::sort(background.begin(), background.end());
  for (auto& spec : noise::standard_conditions(background)) {
    if (spec.kind == noise::NoiseKind::kBackground && background.empty()) continue;
    cfg.noise.push_back(std::move(spec));
  }
  if (background.empty()) std::cerr << "warning: no files in " << noise_dir << ", background conditions omitted\n";
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bit sequence representation features, noise conditions, classifiers and score fusion"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::string out_dir;
  bool quiet = false;
  app.add_option("--config", config_path, "Pipeline config (JSON)");
  app.add_option("--seed", seed, "Override the master seed");
  app.add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  app.add_option("--out", out_dir, "Override the output directory");
  app.add_flag("-q,--quiet", quiet, "Suppress progress log");

  std::string kind;
  auto* extract = app.add_subcommand("extract", "Extract features for the clean dataset");
  extract->add_option("--kind", kind, "Only this feature kind")
      ->check(CLI::IsMember({"raw", "bsr-int16", "bsr-float16", "fbank", "mfcc"}));
  auto* synthesize = app.add_subcommand("synthesize", "Build noisy condition datasets and their features");
  auto* train = app.add_subcommand("train", "Train one classifier per feature kind");
  auto* score = app.add_subcommand("score", "Score test clips under every condition");
  auto* fuse = app.add_subcommand("fuse", "Fuse scores for every configured subset");
  auto* report = app.add_subcommand("report", "Accuracy table and confusion artifacts");
  auto* run = app.add_subcommand("run", "All stages in order");
  auto* selftest = app.add_subcommand("selftest", "Invariant checks on built-in fixtures");
  std::string dataset;
  auto* config = app.add_subcommand("config", "Print the effective config as JSON");
  config->add_option("--dataset", dataset, "Start from defaults for this dataset root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(pipeline::Status::kUsage);
  }

  if (selftest->parsed()) {
    bool ok = true;
    for (const auto& r : run_selftest()) {
      std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name;
      if (!r.detail.empty()) std::cout << ": " << r.detail;
      std::cout << '\n';
      ok = ok && r.passed;
    }
    return ok ? 0 : static_cast<int>(pipeline::Status::kDataError);
  }

  try {
    pipeline::Context ctx;
    if (!config_path.empty()) {
      ctx.config = pipeline::load_config(config_path);
    } else if (config->parsed() && !dataset.empty()) {
      ctx.config = default_config(dataset);
    } else {
      std::cerr << "error: --config is required\n";
      return static_cast<int>(pipeline::Status::kUsage);
    }
    if (seed) ctx.config.master_seed = *seed;
    if (jobs) ctx.config.jobs = *jobs;
    if (!out_dir.empty()) ctx.config.output_dir = out_dir;
    ctx.log = quiet ? nullptr : &std::cerr;

    pipeline::Status st = pipeline::Status::kOk;
    if (config->parsed()) {
      std::cout << pipeline::to_json(ctx.config);
    } else if (extract->parsed()) {
      st = pipeline::extract(ctx, kind.empty() ? std::nullopt : std::optional(pipeline::parse_feature(kind)));
    } else if (synthesize->parsed()) {
      st = pipeline::synthesize(ctx);
    } else if (train->parsed()) {
      st = pipeline::train(ctx);
    } else if (score->parsed()) {
      st = pipeline::score(ctx);
    } else if (fuse->parsed()) {
      st = pipeline::fuse(ctx);
    } else if (report->parsed()) {
      st = pipeline::report(ctx);
    } else if (run->parsed()) {
      st = pipeline::run_all(ctx);
    }
    if (st == pipeline::Status::kPartial) {
      std::cerr << "some clips failed; see " << (ctx.config.output_dir / "failures.tsv") << '\n';
    }
    return static_cast<int>(st);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(pipeline::Status::kDataError);
  }
}
