#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bsrkit/audio.hpp"
#include "bsrkit/classifier.hpp"
#include "bsrkit/noise.hpp"
#include "bsrkit/spectral.hpp"

namespace bsrkit::pipeline {

enum class FeatureType : std::uint8_t { kRaw, kBsrInt16, kBsrFloat16, kFbank, kMfcc };

/// "raw", "bsr-int16", "bsr-float16", "fbank", "mfcc".
const char* feature_name(FeatureType type) noexcept;
FeatureType parse_feature(std::string_view name);

enum class ConditionExport : std::uint8_t { kFloat, kPcm16 };

inline constexpr std::string_view kClearCondition = "clear";

struct PipelineConfig {
  std::filesystem::path dataset_root;
  std::optional<std::filesystem::path> manifest;
  std::filesystem::path output_dir = "bsrkit-out";
  std::vector<FeatureType> features{FeatureType::kBsrFloat16, FeatureType::kFbank, FeatureType::kMfcc,
                                    FeatureType::kRaw};
  std::vector<noise::NoiseSpec> noise;
  ConditionExport condition_export = ConditionExport::kFloat;
  clf::TrainConfig train;
  /// Feature-name subsets to fuse; empty means every subset of size 1..3.
  std::vector<std::vector<std::string>> fusion_subsets;
  /// Pair compared cell by cell in the report; empty picks a default.
  std::vector<std::string> confusion_pair;
  std::uint64_t master_seed = 0;
  unsigned jobs = 0;  // 0 = hardware concurrency
  std::uint32_t sample_rate = kSampleRate;
  bool allow_other_rates = false;
  std::size_t clip_length = kClipLength;
  audio::SplitOptions splits;
  spectral::FrameConfig frame;

  /// Throws Error(kConfig) for invalid fields or unresolvable paths.
  void validate() const;

  bool operator==(const PipelineConfig&) const;
};

std::string to_json(const PipelineConfig& cfg);
PipelineConfig from_json(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

enum class Status : int { kOk = 0, kUsage = 1, kDataError = 2, kPartial = 3 };

struct Context {
  PipelineConfig config;
  std::ostream* log = nullptr;
};

/// Each stage is idempotent: work units whose inputs hash to the stamp
/// recorded on the previous run are skipped and logged as cache hits.
Status extract(const Context& ctx, std::optional<FeatureType> only = std::nullopt);
Status synthesize(const Context& ctx);
Status train(const Context& ctx);
Status score(const Context& ctx);
Status fuse(const Context& ctx);
Status report(const Context& ctx);
/// synthesize, extract, train, score, fuse, report.
Status run_all(const Context& ctx);

/// Condition names in report column order: "clear" then configured specs.
std::vector<std::string> condition_names(const PipelineConfig& cfg);

/// Fusion subsets as feature-name lists, in report row order.
std::vector<std::vector<std::string>> fusion_subsets(const PipelineConfig& cfg);

std::string subset_name(const std::vector<std::string>& members);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

}  // namespace bsrkit::pipeline
