#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <iostream>
#include <sstream>

#include "bsrkit/audio.hpp"
#include "bsrkit/bsr.hpp"
#include "bsrkit/classifier.hpp"
#include "bsrkit/error.hpp"
#include "bsrkit/fusion.hpp"
#include "bsrkit/noise.hpp"
#include "bsrkit/pipeline.hpp"
#include "bsrkit/score_matrix.hpp"
#include "bsrkit/selftest.hpp"
#include "bsrkit/spectral.hpp"

namespace py = pybind11;
using namespace bsrkit;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const F64& a) {
  if (a.ndim() != 1) throw Error(ErrorCode::kInvalidArgument, "expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

py::array_t<double> to_array(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

Waveform normalized_wave(const F64& samples, std::uint32_t sample_rate) {
  Waveform w;
  w.samples = to_vec(samples);
  w.sample_rate = sample_rate;
  for (double s : w.samples) {
    if (!std::isfinite(s) || std::abs(s) > 1.0) {
      throw Error(ErrorCode::kInvalidArgument, "samples must be finite and within [-1, 1]");
    }
  }
  w.normalized = true;
  return w;
}

py::array_t<std::uint8_t> bits_array(const bsr::BitMatrix& m) {
  py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(bsr::kWidth)});
  auto r = out.mutable_unchecked<2>();
  for (std::size_t t = 0; t < m.rows(); ++t) {
    const auto bits = bsr::unpack_bits(m.row(t));
    for (std::size_t k = 0; k < bsr::kWidth; ++k) r(t, k) = bits[k];
  }
  return out;
}

ScoreMatrix scores_from(const Matrix& probs, std::vector<std::string> labels) {
  ScoreMatrix m;
  m.probs = probs;
  if (labels.empty()) {
    for (Eigen::Index c = 0; c < probs.cols(); ++c) labels.push_back(std::to_string(c));
  }
  m.labels = std::move(labels);
  for (Eigen::Index u = 0; u < probs.rows(); ++u) m.utt_ids.push_back(std::to_string(u));
  m.validate();
  return m;
}

pipeline::Status run_stage(const std::string& stage, const pipeline::Context& ctx) {
  if (stage == "all") return pipeline::run_all(ctx);
  if (stage == "extract") return pipeline::extract(ctx);
  if (stage == "synthesize") return pipeline::synthesize(ctx);
  if (stage == "train") return pipeline::train(ctx);
  if (stage == "score") return pipeline::score(ctx);
  if (stage == "fuse") return pipeline::fuse(ctx);
  if (stage == "report") return pipeline::report(ctx);
  throw Error(ErrorCode::kInvalidArgument, "unknown stage: " + stage);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bit sequence representation, spectral features, noise synthesis and score fusion";

  static py::handle error = py::exception<Error>(m, "Error", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(error_code_name(e.code())) + ": " + e.what();
      py::set_error(error, msg.c_str());
    }
  });

  m.def("encode_float16", [](double x) { return bsr::encode_float16(x).packed(); }, py::arg("x"),
        "Packed binary16 pattern of x, round to nearest even, clamped to +-65504.");
  m.def("decode_float16",
        [](std::uint16_t p) { return bsr::decode_float16(bsr::Float16Bits::from_packed(p)); },
        py::arg("bits"));

  m.def(
      "load_wav",
      [](const std::filesystem::path& path) {
        const PcmClip clip = audio::load_wav(path);
        return py::make_tuple(py::array_t<std::int16_t>(static_cast<py::ssize_t>(clip.samples.size()),
                                                        clip.samples.data()),
                              clip.sample_rate);
      },
      py::arg("path"), "(int16 samples, sample rate)");
  m.def(
      "normalize_peak",
      [](const py::array_t<std::int16_t, py::array::c_style | py::array::forcecast>& pcm) {
        PcmClip clip;
        clip.samples.assign(pcm.data(), pcm.data() + pcm.size());
        return to_array(audio::normalize_peak(clip).samples);
      },
      py::arg("pcm"));

  m.def(
      "bsr_float16",
      [](const F64& samples) {
        return bits_array(bsr::waveform_to_bsr(normalized_wave(samples, kSampleRate), bsr::Kind::kFloat16));
      },
      py::arg("samples"), "T x 16 uint8 bit matrix from samples in [-1, 1].");
  m.def(
      "bsr_int16",
      [](const py::array_t<std::int16_t, py::array::c_style | py::array::forcecast>& pcm) {
        PcmClip clip;
        clip.samples.assign(pcm.data(), pcm.data() + pcm.size());
        return bits_array(bsr::waveform_to_bsr(clip, bsr::Kind::kInt16));
      },
      py::arg("pcm"));

  m.def(
      "fbank",
      [](const F64& samples, std::uint32_t sr) {
        return Matrix(spectral::fbank(normalized_wave(samples, sr)).values);
      },
      py::arg("samples"), py::arg("sample_rate") = kSampleRate, "frames x 120 log-mel with deltas.");
  m.def(
      "mfcc",
      [](const F64& samples, std::uint32_t sr) {
        return Matrix(spectral::mfcc(normalized_wave(samples, sr)).values);
      },
      py::arg("samples"), py::arg("sample_rate") = kSampleRate, "frames x 39 cepstra with deltas.");
  m.def("power_spectrum",
        [](const F64& frame, std::size_t n) { return to_array(spectral::power_spectrum(to_vec(frame), n)); },
        py::arg("frame"), py::arg("fft_size") = 512);
  m.def("dct_matrix", &spectral::dct_matrix, py::arg("n"));

  m.def("white_noise", [](std::size_t n, std::uint64_t seed) { return to_array(noise::white_noise(n, seed).samples); },
        py::arg("n"), py::arg("seed"));
  m.def("pink_noise", [](std::size_t n, std::uint64_t seed) { return to_array(noise::pink_noise(n, seed).samples); },
        py::arg("n"), py::arg("seed"));
  m.def(
      "mix",
      [](const F64& signal, const F64& noise_samples, double snr_db) {
        Waveform s, n;
        s.samples = to_vec(signal);
        n.samples = to_vec(noise_samples);
        const noise::MixResult r = noise::mix(s, n, snr_db);
        return py::make_tuple(to_array(r.mixed.samples), r.gain);
      },
      py::arg("signal"), py::arg("noise"), py::arg("snr_db"),
      "(mixture, gain applied to the noise); the mixture is peak-renormalized if it leaves [-1, 1].");
  m.def("snr_gain",
        [](const F64& s, const F64& n, double snr_db) { return noise::snr_gain(to_vec(s), to_vec(n), snr_db); },
        py::arg("signal"), py::arg("noise"), py::arg("snr_db"));

  m.def(
      "sgdr_lr",
      [](int epoch) { return clf::sgdr_lr(epoch, clf::TrainConfig{}); }, py::arg("epoch"));

  m.def(
      "fuse",
      [](const std::vector<Matrix>& sources, std::vector<double> weights) {
        std::vector<ScoreMatrix> mats;
        for (const Matrix& s : sources) mats.push_back(scores_from(s, {}));
        fusion::FusionSpec spec;
        for (const ScoreMatrix& s : mats) spec.sources.emplace_back(s);
        spec.weights = std::move(weights);
        return Matrix(fusion::fuse(spec).probs);
      },
      py::arg("sources"), py::arg("weights") = std::vector<double>{},
      "Weighted sum of utterances x classes posterior matrices; equal weights by default.");
  m.def(
      "predict",
      [](const Matrix& probs) { return fusion::predict(scores_from(probs, {})); }, py::arg("probs"));
  m.def(
      "read_scores",
      [](const std::filesystem::path& path) {
        ScoreMatrix s = read_scores(path);
        return py::make_tuple(s.utt_ids, s.labels, Matrix(s.probs));
      },
      py::arg("path"), "(utterance ids, labels, probabilities)");

  m.def(
      "default_config",
      [](const std::filesystem::path& dataset, const std::filesystem::path& out) {
        pipeline::PipelineConfig cfg;
        cfg.dataset_root = dataset;
        cfg.output_dir = out;
        return pipeline::to_json(cfg);
      },
      py::arg("dataset"), py::arg("out"), "Pipeline config JSON with default settings and no noise.");
  m.def(
      "run",
      [](const std::string& config_json, const std::string& stage, bool quiet) {
        pipeline::Context ctx;
        ctx.config = pipeline::from_json(config_json);
        ctx.config.validate();
        std::ostringstream sink;
        ctx.log = quiet ? &sink : &std::cerr;
        py::gil_scoped_release release;
        return static_cast<int>(run_stage(stage, ctx));
      },
      py::arg("config_json"), py::arg("stage") = "all", py::arg("quiet") = true,
      "Run a pipeline stage; returns 0 ok, 3 partial (see failures.tsv).");

  m.def("selftest", [] {
    std::vector<py::tuple> out;
    for (const CheckResult& r : run_selftest()) out.push_back(py::make_tuple(r.name, r.passed, r.detail));
    return out;
  });
}
