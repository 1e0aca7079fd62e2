#include "bsrkit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "bsrkit/bsr.hpp"
#include "bsrkit/error.hpp"
#include "bsrkit/fusion.hpp"
#include "bsrkit/hash.hpp"
#include "bsrkit/score_matrix.hpp"

namespace bsrkit::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Names and configuration

const char* feature_name(FeatureType type) noexcept {
  switch (type) {
    case FeatureType::kRaw: return "raw";
    case FeatureType::kBsrInt16: return "bsr-int16";
    case FeatureType::kBsrFloat16: return "bsr-float16";
    case FeatureType::kFbank: return "fbank";
    case FeatureType::kMfcc: return "mfcc";
  }
  return "raw";
}

FeatureType parse_feature(std::string_view name) {
  for (auto t : {FeatureType::kRaw, FeatureType::kBsrInt16, FeatureType::kBsrFloat16, FeatureType::kFbank,
                 FeatureType::kMfcc}) {
    if (name == feature_name(t)) return t;
  }
  throw Error(ErrorCode::kConfig, "unknown feature kind '" + std::string(name) + "'");
}

namespace {

json frame_to_json(const spectral::FrameConfig& f) {
  return {{"sample_rate", f.sample_rate}, {"window_len", f.window_len}, {"hop", f.hop},
          {"fft_size", f.fft_size},       {"preemphasis", f.preemphasis}, {"n_mels", f.n_mels},
          {"n_ceps", f.n_ceps},           {"mel_fmin", f.mel_fmin},     {"mel_fmax", f.mel_fmax},
          {"delta_window", f.delta_window}, {"log_floor", f.log_floor}};
}

spectral::FrameConfig frame_from_json(const json& j) {
  spectral::FrameConfig f;
  f.sample_rate = j.value("sample_rate", f.sample_rate);
  f.window_len = j.value("window_len", f.window_len);
  f.hop = j.value("hop", f.hop);
  f.fft_size = j.value("fft_size", f.fft_size);
  f.preemphasis = j.value("preemphasis", f.preemphasis);
  f.n_mels = j.value("n_mels", f.n_mels);
  f.n_ceps = j.value("n_ceps", f.n_ceps);
  f.mel_fmin = j.value("mel_fmin", f.mel_fmin);
  f.mel_fmax = j.value("mel_fmax", f.mel_fmax);
  f.delta_window = j.value("delta_window", f.delta_window);
  f.log_floor = j.value("log_floor", f.log_floor);
  return f;
}

json train_to_json(const clf::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"momentum", t.momentum},
          {"lr0", t.lr0},
          {"restart_epochs", t.restart_epochs},
          {"restart_decay", t.restart_decay},
          {"seed", t.seed}};
}

clf::TrainConfig train_from_json(const json& j) {
  clf::TrainConfig t;
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.momentum = j.value("momentum", t.momentum);
  t.lr0 = j.value("lr0", t.lr0);
  t.restart_epochs = j.value("restart_epochs", t.restart_epochs);
  t.restart_decay = j.value("restart_decay", t.restart_decay);
  t.seed = j.value("seed", t.seed);
  return t;
}

json noise_to_json(const noise::NoiseSpec& s) {
  json sources = json::array();
  for (const auto& p : s.sources) sources.push_back(p.generic_string());
  return {{"kind", noise::kind_name(s.kind)}, {"snr_db", s.snr_db}, {"seed", s.seed}, {"sources", sources}};
}

noise::NoiseSpec noise_from_json(const json& j) {
  noise::NoiseSpec s;
  s.kind = noise::parse_kind(j.at("kind").get<std::string>());
  s.snr_db = j.at("snr_db").get<double>();
  s.seed = j.value("seed", std::uint64_t{0});
  for (const auto& p : j.value("sources", json::array())) s.sources.emplace_back(p.get<std::string>());
  return s;
}

}  // namespace

bool PipelineConfig::operator==(const PipelineConfig& o) const {
  return dataset_root == o.dataset_root && manifest == o.manifest && output_dir == o.output_dir &&
         features == o.features && noise == o.noise && condition_export == o.condition_export &&
         train == o.train && fusion_subsets == o.fusion_subsets && confusion_pair == o.confusion_pair &&
         master_seed == o.master_seed && jobs == o.jobs && sample_rate == o.sample_rate &&
         allow_other_rates == o.allow_other_rates && clip_length == o.clip_length &&
         splits.validation_pct == o.splits.validation_pct && splits.testing_pct == o.splits.testing_pct &&
         frame == o.frame;
}

std::string to_json(const PipelineConfig& cfg) {
  json features = json::array();
  for (auto f : cfg.features) features.push_back(feature_name(f));
  json noise = json::array();
  for (const auto& s : cfg.noise) noise.push_back(noise_to_json(s));
  json j = {
      {"dataset_root", cfg.dataset_root.generic_string()},
      {"manifest", cfg.manifest ? json(cfg.manifest->generic_string()) : json(nullptr)},
      {"output_dir", cfg.output_dir.generic_string()},
      {"features", features},
      {"noise", noise},
      {"condition_export", cfg.condition_export == ConditionExport::kPcm16 ? "pcm16" : "float"},
      {"train", train_to_json(cfg.train)},
      {"fusion_subsets", cfg.fusion_subsets},
      {"confusion_pair", cfg.confusion_pair},
      {"master_seed", cfg.master_seed},
      {"jobs", cfg.jobs},
      {"sample_rate", cfg.sample_rate},
      {"allow_other_rates", cfg.allow_other_rates},
      {"clip_length", cfg.clip_length},
      {"splits", {{"validation_pct", cfg.splits.validation_pct}, {"testing_pct", cfg.splits.testing_pct}}},
      {"frame", frame_to_json(cfg.frame)},
  };
  return j.dump(2) + "\n";
}

PipelineConfig from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    PipelineConfig cfg;
    cfg.dataset_root = j.value("dataset_root", std::string{});
    if (j.contains("manifest") && !j["manifest"].is_null()) cfg.manifest = j["manifest"].get<std::string>();
    cfg.output_dir = j.value("output_dir", cfg.output_dir.generic_string());
    if (j.contains("features")) {
      cfg.features.clear();
      for (const auto& f : j["features"]) cfg.features.push_back(parse_feature(f.get<std::string>()));
    }
    for (const auto& s : j.value("noise", json::array())) cfg.noise.push_back(noise_from_json(s));
    const auto mode = j.value("condition_export", std::string("float"));
    if (mode != "float" && mode != "pcm16") throw Error(ErrorCode::kConfig, "condition_export must be float or pcm16");
    cfg.condition_export = mode == "pcm16" ? ConditionExport::kPcm16 : ConditionExport::kFloat;
    if (j.contains("train")) cfg.train = train_from_json(j["train"]);
    cfg.fusion_subsets = j.value("fusion_subsets", cfg.fusion_subsets);
    cfg.confusion_pair = j.value("confusion_pair", cfg.confusion_pair);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.sample_rate = j.value("sample_rate", cfg.sample_rate);
    cfg.allow_other_rates = j.value("allow_other_rates", cfg.allow_other_rates);
    cfg.clip_length = j.value("clip_length", cfg.clip_length);
    if (j.contains("splits")) {
      cfg.splits.validation_pct = j["splits"].value("validation_pct", cfg.splits.validation_pct);
      cfg.splits.testing_pct = j["splits"].value("testing_pct", cfg.splits.testing_pct);
    }
    if (j.contains("frame")) cfg.frame = frame_from_json(j["frame"]);
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, "config: " + msg); };
  if (dataset_root.empty() || !fs::is_directory(dataset_root)) {
    fail("dataset_root '" + dataset_root.string() + "' is not a directory");
  }
  if (manifest && !fs::is_regular_file(*manifest)) fail("manifest '" + manifest->string() + "' not found");
  if (features.empty()) fail("no feature kinds configured");
  std::set<FeatureType> seen(features.begin(), features.end());
  if (seen.size() != features.size()) fail("duplicate feature kinds");
  std::set<std::string> names;
  for (const auto& s : noise) {
    if (!names.insert(s.name()).second) fail("duplicate noise condition " + s.name());
    if (s.kind == noise::NoiseKind::kBackground) {
      if (s.sources.empty()) fail(s.name() + " needs at least one noise source");
      for (const auto& p : s.sources) {
        if (!fs::is_regular_file(p)) fail("noise source '" + p.string() + "' not found");
      }
    }
  }
  if (clip_length == 0) fail("clip_length must be positive");
  std::set<std::string> feature_names;
  for (auto f : features) feature_names.insert(feature_name(f));
  for (const auto& subset : fusion_subsets) {
    if (subset.empty()) fail("empty fusion subset");
    for (const auto& m : subset) {
      if (!feature_names.contains(m)) fail("fusion subset references unconfigured feature '" + m + "'");
    }
  }
  if (!confusion_pair.empty()) {
    if (confusion_pair.size() != 2) fail("confusion_pair must name two features");
    for (const auto& m : confusion_pair) {
      if (!feature_names.contains(m)) fail("confusion_pair references unconfigured feature '" + m + "'");
    }
  }
  frame.validate();
  train.validate();
}

std::vector<std::string> condition_names(const PipelineConfig& cfg) {
  std::vector<std::string> out{std::string(kClearCondition)};
  for (const auto& s : cfg.noise) out.push_back(s.name());
  return out;
}

std::string subset_name(const std::vector<std::string>& members) {
  std::string out;
  for (std::size_t i = 0; i < members.size(); ++i) out += (i ? "&" : "") + members[i];
  return out;
}

std::vector<std::vector<std::string>> fusion_subsets(const PipelineConfig& cfg) {
  if (!cfg.fusion_subsets.empty()) return cfg.fusion_subsets;
  std::vector<std::vector<std::string>> out;
  for (const auto& idx : fusion::subsets(cfg.features.size(), 3)) {
    std::vector<std::string> names;
    for (auto i : idx) names.push_back(feature_name(cfg.features[i]));
    out.push_back(std::move(names));
  }
  return out;
}

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Stage plumbing

namespace {

struct Clip {
  audio::DatasetEntry entry;
  audio::Split split = audio::Split::kTrain;
};

struct FeatureRow {
  std::string clip_id;
  std::string label;
  std::string split;
  std::string path;  // relative to the output directory
};

struct Failure {
  std::string stage;
  std::string unit;
  std::string item;
  std::string error;
};

class Log {
 public:
  explicit Log(std::ostream* out) : out_(out) {}
  void operator()(std::string_view stage, const std::string& msg) const {
    if (out_) *out_ << '[' << stage << "] " << msg << '\n';
  }

 private:
  std::ostream* out_;
};

// Content keys of finished work units, persisted between runs.
class StampStore {
 public:
  explicit StampStore(const fs::path& out_dir) : file_(out_dir / ".cache" / "stamps.json") {
    std::ifstream in(file_);
    if (in) {
      try {
        stamps_ = json::parse(in).get<std::map<std::string, std::string>>();
      } catch (const json::exception&) {
        stamps_.clear();  // unreadable cache just means recompute
      }
    }
  }

  bool fresh(const std::string& unit, const std::string& key, const std::vector<fs::path>& outputs) const {
    auto it = stamps_.find(unit);
    if (it == stamps_.end() || it->second != key) return false;
    return std::all_of(outputs.begin(), outputs.end(), [](const fs::path& p) { return fs::exists(p); });
  }

  void record(const std::string& unit, const std::string& key) {
    stamps_[unit] = key;
    save();
  }

  void forget(const std::string& unit) {
    if (stamps_.erase(unit)) save();
  }

 private:
  void save() const {
    fs::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::trunc);
    out << json(stamps_).dump(1) << '\n';
  }

  fs::path file_;
  std::map<std::string, std::string> stamps_;
};

unsigned jobs_of(const PipelineConfig& cfg) {
  return cfg.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.jobs;
}

std::vector<Clip> load_dataset(const PipelineConfig& cfg) {
  const auto entries = audio::scan_dataset(cfg.dataset_root, cfg.manifest);
  const auto splits = audio::assign_splits(entries, cfg.dataset_root, cfg.splits);
  std::vector<Clip> clips;
  clips.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) clips.push_back({entries[i], splits[i]});
  return clips;
}

struct CleanClip {
  PcmClip pcm;
  Waveform wave;
};

// Pad first, then normalize.
CleanClip load_clean(const fs::path& path, const std::string& id, const std::string& label,
                     const PipelineConfig& cfg) {
  CleanClip c;
  c.pcm = audio::load_wav(path);
  if (!cfg.allow_other_rates) audio::require_sample_rate(c.pcm, cfg.sample_rate, path.string());
  c.pcm = audio::pad_or_trim(std::move(c.pcm), cfg.clip_length);
  c.wave = audio::normalize_peak(c.pcm);
  c.wave.source_id = id;
  c.wave.label = label;
  return c;
}

bool is_bsr(FeatureType t) { return t == FeatureType::kBsrInt16 || t == FeatureType::kBsrFloat16; }

void write_feature(FeatureType t, const PcmClip* pcm, const Waveform& wave, const spectral::FeatureExtractor& fx,
                   const fs::path& out) {
  switch (t) {
    case FeatureType::kRaw:
      spectral::save(out, spectral::raw_feature(wave));
      break;
    case FeatureType::kBsrInt16:
      bsr::save(out, bsr::waveform_to_bsr(pcm ? *pcm : audio::quantize(wave), bsr::Kind::kInt16));
      break;
    case FeatureType::kBsrFloat16:
      bsr::save(out, bsr::waveform_to_bsr(wave, bsr::Kind::kFloat16));
      break;
    case FeatureType::kFbank:
      spectral::save(out, fx.fbank(wave));
      break;
    case FeatureType::kMfcc:
      spectral::save(out, fx.mfcc(wave));
      break;
  }
}

Vector load_pooled(FeatureType t, const fs::path& path) {
  if (is_bsr(t)) return clf::pool(bsr::load(path));
  return clf::pool(spectral::load(path).values);
}

fs::path feature_dir(const PipelineConfig& cfg, std::string_view cond, FeatureType t) {
  return cfg.output_dir / "features" / std::string(cond) / feature_name(t);
}

fs::path condition_dir(const PipelineConfig& cfg, const std::string& cond) {
  return cfg.output_dir / "conditions" / cond;
}

fs::path model_path(const PipelineConfig& cfg, FeatureType t) {
  return cfg.output_dir / "models" / (std::string(feature_name(t)) + ".smx");
}

fs::path score_path(const PipelineConfig& cfg, const std::string& cond, const std::string& feature) {
  return cfg.output_dir / "scores" / cond / (feature + ".tsv");
}

fs::path fused_path(const PipelineConfig& cfg, const std::string& cond, const std::string& subset) {
  return cfg.output_dir / "fused" / cond / (subset + ".tsv");
}

void write_feature_manifest(const fs::path& path, const std::vector<FeatureRow>& rows) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "clip_id\tlabel\tsplit\tpath\n";
  for (const auto& r : rows) out << r.clip_id << '\t' << r.label << '\t' << r.split << '\t' << r.path << '\n';
}

std::vector<FeatureRow> read_feature_manifest(const fs::path& path, std::string_view upstream) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "missing upstream artifact " + path.string() + " (run `" + std::string(upstream) + "` first)");
  }
  std::string line;
  std::getline(in, line);
  if (line != "clip_id\tlabel\tsplit\tpath") throw Error(ErrorCode::kCorruptFile, path.string() + ": bad manifest header");
  std::vector<FeatureRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    FeatureRow r;
    if (!std::getline(ss, r.clip_id, '\t') || !std::getline(ss, r.label, '\t') || !std::getline(ss, r.split, '\t') ||
        !std::getline(ss, r.path)) {
      throw Error(ErrorCode::kCorruptFile, path.string() + ": malformed row");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string hash_files(Hasher h, const std::vector<fs::path>& files) {
  for (const auto& f : files) {
    if (!fs::exists(f)) throw Error(ErrorCode::kIo, "missing upstream artifact " + f.string());
    h.update(f.generic_string()).update(hash_file(f));
  }
  return h.hex();
}

void hash_frame(Hasher& h, const spectral::FrameConfig& f) {
  h.update(static_cast<std::uint64_t>(f.sample_rate)).update(f.window_len).update(f.hop);
  h.update(static_cast<std::uint64_t>(f.fft_size)).update(f.preemphasis);
  h.update(static_cast<std::uint64_t>(f.n_mels)).update(static_cast<std::uint64_t>(f.n_ceps));
  h.update(f.mel_fmin).update(f.mel_fmax).update(static_cast<std::uint64_t>(f.delta_window)).update(f.log_floor);
}

std::string condition_clip_path(const std::string& cond, const audio::DatasetEntry& e, ConditionExport mode) {
  if (mode == ConditionExport::kFloat) return e.relative_path;
  return "conditions/" + cond + "/wav/" + e.relative_path;
}

void write_failures(const PipelineConfig& cfg, const std::vector<Failure>& failures) {
  const fs::path path = cfg.output_dir / "failures.tsv";
  if (failures.empty()) {
    fs::remove(path);
    return;
  }
  fs::create_directories(cfg.output_dir);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "stage\tunit\titem\terror\n";
  for (const auto& f : failures) out << f.stage << '\t' << f.unit << '\t' << f.item << '\t' << f.error << '\n';
}

// Extraction of one (condition, feature) unit. `spec` is null for the clean
// condition.
void extract_unit(const PipelineConfig& cfg, const std::vector<Clip>& clips, const noise::NoiseSpec* spec,
                  FeatureType type, const spectral::FeatureExtractor& fx, StampStore& stamps, const Log& log,
                  std::vector<Failure>& failures) {
  const std::string cond = spec ? spec->name() : std::string(kClearCondition);
  const std::string unit = "extract/" + cond + "/" + feature_name(type);
  const fs::path dir = feature_dir(cfg, cond, type);
  const fs::path manifest_path = dir / "manifest.tsv";

  struct Item {
    const Clip* clip;
    fs::path input;              // file read for this item
    std::uint64_t seed = 0;      // noisy float mode only
  };
  std::vector<Item> items;
  std::vector<Waveform> background;

  Hasher key;
  key.update(std::string_view("extract")).update(std::string_view(feature_name(type))).update(cond);
  hash_frame(key, cfg.frame);
  key.update(static_cast<std::uint64_t>(cfg.clip_length)).update(static_cast<std::uint64_t>(cfg.sample_rate));
  key.update(static_cast<std::uint64_t>(cfg.allow_other_rates));

  if (!spec) {
    for (const auto& c : clips) items.push_back({&c, c.entry.path, 0});
  } else {
    const fs::path cond_manifest = condition_dir(cfg, cond) / "manifest.tsv";
    if (!fs::exists(cond_manifest)) {
      throw Error(ErrorCode::kIo, "missing upstream artifact " + cond_manifest.string() + " (run `synthesize` first)");
    }
    std::map<std::string, noise::ManifestRow> by_path;
    for (auto& r : noise::read_manifest(cond_manifest)) by_path.emplace(r.path, r);
    key.update(hash_file(cond_manifest)).update(static_cast<std::uint64_t>(cfg.condition_export));
    key.update(spec->snr_db).update(static_cast<std::uint64_t>(spec->kind)).update(spec->seed);
    key.update(cfg.master_seed);
    for (const auto& src : spec->sources) key.update(hash_file(src));
    for (const auto& c : clips) {
      if (c.split != audio::Split::kTest) continue;
      auto it = by_path.find(condition_clip_path(cond, c.entry, cfg.condition_export));
      if (it == by_path.end()) continue;  // failed during synthesis
      const fs::path input = cfg.condition_export == ConditionExport::kFloat
                                 ? c.entry.path
                                 : cfg.output_dir / it->second.path;
      items.push_back({&c, input, it->second.seed});
    }
    if (cfg.condition_export == ConditionExport::kFloat) background = noise::load_background(*spec, cfg.clip_length);
  }
  for (const auto& it : items) {
    key.update(it.clip->entry.source_id).update(it.clip->entry.label);
    key.update(static_cast<std::uint64_t>(it.clip->split)).update(it.seed).update(hash_file(it.input));
  }

  if (stamps.fresh(unit, key.hex(), {manifest_path})) {
    log("extract", cond + "/" + feature_name(type) + ": cache hit");
    return;
  }

  std::vector<std::string> errors(items.size());
  std::vector<std::string> outputs(items.size());
  const std::string ext = is_bsr(type) ? ".bsr" : ".fea";
  parallel_for(items.size(), jobs_of(cfg), [&](std::size_t i) {
    const Item& item = items[i];
    const auto& e = item.clip->entry;
    try {
      CleanClip clean = load_clean(item.input, e.source_id, e.label, cfg);
      const fs::path rel = fs::path("features") / cond / feature_name(type) / (e.source_id + ext);
      if (spec && cfg.condition_export == ConditionExport::kFloat) {
        Waveform noisy = noise::make_noisy(clean.wave, *spec, background, item.seed);
        write_feature(type, nullptr, noisy, fx, cfg.output_dir / rel);
      } else {
        write_feature(type, &clean.pcm, clean.wave, fx, cfg.output_dir / rel);
      }
      outputs[i] = rel.generic_string();
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  });

  std::vector<FeatureRow> rows;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& e = items[i].clip->entry;
    if (!errors[i].empty()) {
      failures.push_back({"extract", cond + "/" + feature_name(type), e.relative_path, errors[i]});
      ++failed;
      continue;
    }
    rows.push_back({e.source_id, e.label, std::string(audio::split_name(items[i].clip->split)), outputs[i]});
  }
  write_feature_manifest(manifest_path, rows);
  if (failed == 0) {
    stamps.record(unit, key.hex());
  } else {
    stamps.forget(unit);
  }
  log("extract", cond + "/" + feature_name(type) + ": " + std::to_string(rows.size()) + " clips written, " +
                     std::to_string(failed) + " failed");
}

Status extract_conditions(const PipelineConfig& cfg, const std::vector<Clip>& clips,
                          const std::vector<const noise::NoiseSpec*>& conditions, std::optional<FeatureType> only,
                          const Log& log, std::vector<Failure>& failures) {
  StampStore stamps(cfg.output_dir);
  const spectral::FeatureExtractor fx(cfg.frame);
  for (const auto* spec : conditions) {
    for (FeatureType t : cfg.features) {
      if (only && *only != t) continue;
      extract_unit(cfg, clips, spec, t, fx, stamps, log, failures);
    }
  }
  return failures.empty() ? Status::kOk : Status::kPartial;
}

Status worst(Status a, Status b) { return static_cast<int>(a) >= static_cast<int>(b) ? a : b; }

}  // namespace

// ---------------------------------------------------------------------------
// Stages

Status extract(const Context& ctx, std::optional<FeatureType> only) {
  const auto& cfg = ctx.config;
  cfg.validate();
  const Log log(ctx.log);
  if (only && std::find(cfg.features.begin(), cfg.features.end(), *only) == cfg.features.end()) {
    throw Error(ErrorCode::kConfig, std::string("feature '") + feature_name(*only) + "' is not configured");
  }
  const auto clips = load_dataset(cfg);
  std::vector<const noise::NoiseSpec*> conditions{nullptr};
  for (const auto& s : cfg.noise) {
    if (fs::exists(condition_dir(cfg, s.name()) / "manifest.tsv")) conditions.push_back(&s);
  }
  std::vector<Failure> failures;
  const Status st = extract_conditions(cfg, clips, conditions, only, log, failures);
  write_failures(cfg, failures);
  return st;
}

Status synthesize(const Context& ctx) {
  const auto& cfg = ctx.config;
  cfg.validate();
  const Log log(ctx.log);
  const auto clips = load_dataset(cfg);
  StampStore stamps(cfg.output_dir);
  std::vector<Failure> failures;
  std::vector<const noise::NoiseSpec*> made;

  for (const auto& spec : cfg.noise) {
    const std::string cond = spec.name();
    const std::string unit = "synthesize/" + cond;
    const fs::path manifest_path = condition_dir(cfg, cond) / "manifest.tsv";
    made.push_back(&spec);

    Hasher key;
    key.update(std::string_view("synthesize")).update(cond).update(cfg.master_seed).update(spec.seed);
    key.update(static_cast<std::uint64_t>(cfg.condition_export)).update(static_cast<std::uint64_t>(cfg.clip_length));
    for (const auto& src : spec.sources) key.update(hash_file(src));
    for (const auto& c : clips) key.update(c.entry.relative_path).update(c.entry.label).update(hash_file(c.entry.path));
    if (stamps.fresh(unit, key.hex(), {manifest_path})) {
      log("synthesize", cond + ": cache hit");
      continue;
    }

    const auto background = noise::load_background(spec, cfg.clip_length);
    std::vector<std::string> errors(clips.size());
    std::vector<std::uint64_t> seeds(clips.size());
    parallel_for(clips.size(), jobs_of(cfg), [&](std::size_t i) {
      const auto& e = clips[i].entry;
      seeds[i] = noise::condition_clip_seed(cfg.master_seed, spec, e.source_id);
      try {
        CleanClip clean = load_clean(e.path, e.source_id, e.label, cfg);
        Waveform noisy = noise::make_noisy(clean.wave, spec, background, seeds[i]);
        if (cfg.condition_export == ConditionExport::kPcm16) {
          audio::write_wav(cfg.output_dir / condition_clip_path(cond, e, cfg.condition_export), audio::quantize(noisy));
        }
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
      }
    });

    std::vector<noise::ManifestRow> rows;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      if (!errors[i].empty()) {
        failures.push_back({"synthesize", cond, clips[i].entry.relative_path, errors[i]});
        continue;
      }
      rows.push_back({condition_clip_path(cond, clips[i].entry, cfg.condition_export), clips[i].entry.label, cond,
                      spec.snr_db, seeds[i]});
    }
    noise::write_manifest(manifest_path, rows);
    if (std::none_of(errors.begin(), errors.end(), [](const std::string& s) { return !s.empty(); })) {
      stamps.record(unit, key.hex());
    } else {
      stamps.forget(unit);
    }
    log("synthesize", cond + ": " + std::to_string(rows.size()) + " clips");
  }

  // Noisy features come straight out of the float pipeline, so extract them
  // here rather than requiring another `extract` pass.
  extract_conditions(cfg, clips, made, std::nullopt, log, failures);
  write_failures(cfg, failures);
  return failures.empty() ? Status::kOk : Status::kPartial;
}

Status train(const Context& ctx) {
  const auto& cfg = ctx.config;
  cfg.validate();
  const Log log(ctx.log);
  StampStore stamps(cfg.output_dir);

  for (FeatureType t : cfg.features) {
    const std::string name = feature_name(t);
    const std::string unit = "train/" + name;
    const fs::path manifest_path = feature_dir(cfg, kClearCondition, t) / "manifest.tsv";
    const auto rows = read_feature_manifest(manifest_path, "extract");

    std::vector<fs::path> inputs{manifest_path};
    for (const auto& r : rows) inputs.push_back(cfg.output_dir / r.path);
    Hasher key;
    key.update(std::string_view("train")).update(name);
    key.update(nlohmann::json(train_to_json(cfg.train)).dump());
    const std::string k = hash_files(key, inputs);
    const fs::path out = model_path(cfg, t);
    const fs::path loss_log = cfg.output_dir / "models" / (name + ".loss.tsv");
    if (stamps.fresh(unit, k, {out, loss_log})) {
      log("train", name + ": cache hit");
      continue;
    }

    std::vector<clf::LabeledVector> samples(rows.size());
    parallel_for(rows.size(), jobs_of(cfg), [&](std::size_t i) {
      samples[i] = {rows[i].clip_id, rows[i].label, load_pooled(t, cfg.output_dir / rows[i].path)};
    });
    std::vector<clf::LabeledVector> train_set;
    std::vector<clf::LabeledVector> val_set;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].split == "train") train_set.push_back(samples[i]);
      if (rows[i].split == "validation") val_set.push_back(samples[i]);
    }
    if (train_set.empty()) throw Error(ErrorCode::kEmptyInput, "train: no training clips for " + name);

    const auto result = clf::train(train_set, cfg.train, val_set);
    clf::save(out, result.model);
    {
      std::ofstream lf(loss_log, std::ios::binary | std::ios::trunc);
      lf << "epoch\tloss\n";
      char buf[32];
      for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%.9g", result.loss_history[e]);
        lf << e << '\t' << buf << '\n';
      }
    }
    stamps.record(unit, k);
    std::string msg = name + ": " + std::to_string(train_set.size()) + " clips, " +
                      std::to_string(cfg.train.epochs) + " epochs, final loss " +
                      std::to_string(result.loss_history.back());
    if (result.best_validation_accuracy) {
      msg += ", best validation accuracy " + std::to_string(*result.best_validation_accuracy) + "% at epoch " +
             std::to_string(result.best_epoch);
    }
    log("train", msg);
  }
  return Status::kOk;
}

Status score(const Context& ctx) {
  const auto& cfg = ctx.config;
  cfg.validate();
  const Log log(ctx.log);
  StampStore stamps(cfg.output_dir);

  for (FeatureType t : cfg.features) {
    const std::string name = feature_name(t);
    const fs::path model_file = model_path(cfg, t);
    if (!fs::exists(model_file)) {
      throw Error(ErrorCode::kIo, "missing upstream artifact " + model_file.string() + " (run `train` first)");
    }
    for (const auto& cond : condition_names(cfg)) {
      const std::string unit = "score/" + cond + "/" + name;
      const fs::path manifest_path = feature_dir(cfg, cond, t) / "manifest.tsv";
      const auto rows = read_feature_manifest(manifest_path, cond == kClearCondition ? "extract" : "synthesize");
      std::vector<FeatureRow> test_rows;
      for (const auto& r : rows) {
        if (r.split == "test") test_rows.push_back(r);
      }
      std::vector<fs::path> inputs{model_file, manifest_path};
      for (const auto& r : test_rows) inputs.push_back(cfg.output_dir / r.path);
      const std::string k = hash_files(Hasher().update(std::string_view("score")), inputs);
      const fs::path out = score_path(cfg, cond, name);
      if (stamps.fresh(unit, k, {out})) {
        log("score", cond + "/" + name + ": cache hit");
        continue;
      }
      if (test_rows.empty()) throw Error(ErrorCode::kEmptyInput, "score: no test clips in " + manifest_path.string());

      const auto model = clf::load(model_file);
      std::vector<clf::LabeledVector> samples(test_rows.size());
      parallel_for(test_rows.size(), jobs_of(cfg), [&](std::size_t i) {
        samples[i] = {test_rows[i].clip_id, test_rows[i].label, load_pooled(t, cfg.output_dir / test_rows[i].path)};
      });
      write_scores(out, clf::score_dataset(model, samples));
      stamps.record(unit, k);
      log("score", cond + "/" + name + ": " + std::to_string(samples.size()) + " utterances");
    }
  }
  return Status::kOk;
}

Status fuse(const Context& ctx) {
  const auto& cfg = ctx.config;
  cfg.validate();
  const Log log(ctx.log);
  StampStore stamps(cfg.output_dir);

  for (const auto& cond : condition_names(cfg)) {
    for (const auto& subset : fusion_subsets(cfg)) {
      const std::string name = subset_name(subset);
      const std::string unit = "fuse/" + cond + "/" + name;
      std::vector<fs::path> inputs;
      for (const auto& m : subset) inputs.push_back(score_path(cfg, cond, m));
      for (const auto& p : inputs) {
        if (!fs::exists(p)) throw Error(ErrorCode::kIo, "missing upstream artifact " + p.string() + " (run `score` first)");
      }
      const std::string k = hash_files(Hasher().update(std::string_view("fuse")).update(name), inputs);
      const fs::path out = fused_path(cfg, cond, name);
      if (stamps.fresh(unit, k, {out})) {
        log("fuse", cond + "/" + name + ": cache hit");
        continue;
      }
      std::vector<ScoreMatrix> sources;
      for (const auto& p : inputs) sources.push_back(read_scores(p));
      write_scores(out, fusion::fuse(sources));
      stamps.record(unit, k);
      log("fuse", cond + "/" + name);
    }
  }
  return Status::kOk;
}

Status report(const Context& ctx) {
  const auto& cfg = ctx.config;
  cfg.validate();
  const Log log(ctx.log);
  StampStore stamps(cfg.output_dir);

  const auto conditions = condition_names(cfg);
  const auto subsets = fusion_subsets(cfg);
  const fs::path truth_manifest = feature_dir(cfg, kClearCondition, cfg.features.front()) / "manifest.tsv";

  std::vector<fs::path> inputs{truth_manifest};
  for (const auto& cond : conditions) {
    for (const auto& s : subsets) inputs.push_back(fused_path(cfg, cond, subset_name(s)));
  }
  for (FeatureType t : cfg.features) inputs.push_back(score_path(cfg, std::string(kClearCondition), feature_name(t)));
  for (const auto& p : inputs) {
    if (!fs::exists(p)) throw Error(ErrorCode::kIo, "missing upstream artifact " + p.string());
  }

  std::vector<std::string> pair = cfg.confusion_pair;
  if (pair.empty()) {
    auto has = [&](FeatureType t) { return std::find(cfg.features.begin(), cfg.features.end(), t) != cfg.features.end(); };
    if (has(FeatureType::kBsrFloat16) && has(FeatureType::kFbank)) {
      pair = {"bsr-float16", "fbank"};
    } else if (cfg.features.size() >= 2) {
      pair = {feature_name(cfg.features[0]), feature_name(cfg.features[1])};
    }
  }

  const fs::path dir = cfg.output_dir / "report";
  const fs::path table_path = dir / "accuracy.tsv";
  Hasher key;
  key.update(std::string_view("report"));
  for (const auto& p : pair) key.update(p);
  const std::string k = hash_files(key, inputs);
  if (stamps.fresh("report", k, {table_path})) {
    log("report", "cache hit");
    return Status::kOk;
  }

  fusion::Truth truth;
  for (const auto& r : read_feature_manifest(truth_manifest, "extract")) truth[r.clip_id] = r.label;

  fusion::AccuracyTable table;
  table.conditions = conditions;
  for (const auto& s : subsets) {
    table.row_names.push_back(subset_name(s));
    std::vector<double> accs;
    for (const auto& cond : conditions) {
      accs.push_back(fusion::accuracy(read_scores(fused_path(cfg, cond, subset_name(s))), truth));
    }
    table.accuracy.push_back(std::move(accs));
  }
  fs::create_directories(dir);
  {
    std::ofstream out(table_path, std::ios::binary | std::ios::trunc);
    fusion::write_accuracy_tsv(out, table);
  }

  std::map<std::string, fusion::ConfusionMatrix> matrices;
  for (FeatureType t : cfg.features) {
    const std::string name = feature_name(t);
    auto cm = fusion::confusion(read_scores(score_path(cfg, std::string(kClearCondition), name)), truth);
    std::ofstream csv(dir / ("confusion_" + name + ".csv"), std::ios::binary | std::ios::trunc);
    fusion::write_confusion_csv(csv, cm);
    std::ofstream svg(dir / ("confusion_" + name + ".svg"), std::ios::binary | std::ios::trunc);
    fusion::write_confusion_svg(svg, cm, name + " (clear)");
    matrices.emplace(name, std::move(cm));
  }
  if (pair.size() == 2) {
    const auto diff = fusion::confusion_diff(matrices.at(pair[0]), matrices.at(pair[1]));
    std::ofstream out(dir / ("confusion_diff_" + pair[0] + "_vs_" + pair[1] + ".tsv"), std::ios::binary | std::ios::trunc);
    fusion::write_diff_tsv(out, diff);
  }
  stamps.record("report", k);
  log("report", std::to_string(table.row_names.size()) + " rows x " + std::to_string(conditions.size()) +
                    " conditions -> " + table_path.string());
  return Status::kOk;
}

Status run_all(const Context& ctx) {
  Status st = Status::kOk;
  if (!ctx.config.noise.empty()) st = worst(st, synthesize(ctx));
  st = worst(st, extract(ctx));
  st = worst(st, train(ctx));
  st = worst(st, score(ctx));
  st = worst(st, fuse(ctx));
  st = worst(st, report(ctx));
  return st;
}

}  // namespace bsrkit::pipeline
