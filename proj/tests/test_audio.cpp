#include <gtest/gtest.h>

#include <cstring>
#include <functional>
#include <map>
#include <fstream>

#include "bsrkit/audio.hpp"
#include "bsrkit/error.hpp"
#include "fixtures.hpp"

namespace bsrkit {
namespace {

namespace fs = std::filesystem;

// Hand-assembled RIFF bytes, independent of encode_wav.
std::vector<std::uint8_t> oracle_wav(const std::vector<std::int16_t>& s, std::uint16_t format = 1,
                                     std::uint16_t channels = 1, std::uint16_t bits = 16,
                                     std::uint32_t rate = 16000, bool junk_chunk = false) {
  std::vector<std::uint8_t> b;
  auto put = [&](const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    b.insert(b.end(), c, c + n);
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto u16 = [&](std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(s.size() * 2);
  put("RIFF", 4);
  u32(0);
  put("WAVE", 4);
  if (junk_chunk) {
    put("LIST", 4);
    u32(3);
    put("abc", 3);
    b.push_back(0);  // pad byte
  }
  put("fmt ", 4);
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  put("data", 4);
  u32(data_bytes);
  for (auto v : s) u16(static_cast<std::uint16_t>(v));
  const std::uint32_t riff = static_cast<std::uint32_t>(b.size() - 8);
  std::memcpy(b.data() + 4, &riff, 4);
  return b;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

TEST(Wav, ParsesMinimalClip) {
  const auto clip = audio::parse_wav(oracle_wav({0, 16384, -16384}));
  EXPECT_EQ(clip.samples, (std::vector<std::int16_t>{0, 16384, -16384}));
  EXPECT_EQ(clip.sample_rate, 16000u);
}

TEST(Wav, SkipsOddSizedChunks) {
  const auto clip = audio::parse_wav(oracle_wav({7, -7}, 1, 1, 16, 16000, true));
  EXPECT_EQ(clip.samples, (std::vector<std::int16_t>{7, -7}));
}

TEST(Wav, EncoderMatchesOracleBytes) {
  std::vector<std::int16_t> s(16000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<std::int16_t>((i * 37) % 65536 - 32768);
  const auto golden = oracle_wav(s);
  const auto clip = audio::parse_wav(golden);
  EXPECT_EQ(clip.samples.size(), 16000u);
  EXPECT_EQ(clip.sample_rate, 16000u);
  EXPECT_EQ(audio::encode_wav(clip), golden);
}

TEST(Wav, FileRoundTripIsBitExact) {
  const auto dir = testing::scratch_dir("wav_rt");
  PcmClip c{{1, -2, 3, 32767, -32768}, 16000};
  audio::write_wav(dir / "a.wav", c);
  EXPECT_EQ(audio::load_wav(dir / "a.wav"), c);
  audio::write_wav(dir / "b.wav", audio::load_wav(dir / "a.wav"));
  std::ifstream a(dir / "a.wav", std::ios::binary), b(dir / "b.wav", std::ios::binary);
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(a), {}, std::istreambuf_iterator<char>(b)));
}

TEST(Wav, DistinctErrorClasses) {
  EXPECT_EQ(code_of([] { audio::parse_wav(oracle_wav({1}, 3, 1, 32)); }), ErrorCode::kUnsupportedEncoding);
  EXPECT_EQ(code_of([] { audio::parse_wav(oracle_wav({1}, 1, 2)); }), ErrorCode::kUnsupportedEncoding);
  EXPECT_EQ(code_of([] { audio::parse_wav(oracle_wav({1}, 1, 1, 8)); }), ErrorCode::kUnsupportedEncoding);
  auto bad_magic = oracle_wav({1});
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { audio::parse_wav(bad_magic); }), ErrorCode::kMalformedHeader);
  EXPECT_EQ(code_of([] { audio::parse_wav(std::vector<std::uint8_t>(6, 0)); }), ErrorCode::kMalformedHeader);
  auto truncated = oracle_wav({1, 2, 3, 4});
  truncated.resize(truncated.size() - 3);
  EXPECT_EQ(code_of([&] { audio::parse_wav(truncated); }), ErrorCode::kTruncatedData);
}

TEST(Wav, SampleRateCheck) {
  PcmClip c{{1}, 8000};
  EXPECT_THROW(audio::require_sample_rate(c, 16000, "x.wav"), Error);
  EXPECT_NO_THROW(audio::require_sample_rate(c, 8000, "x.wav"));
}

TEST(PadOrTrim, Examples) {
  EXPECT_EQ(audio::pad_or_trim(PcmClip{{1, 2, 3}, 16000}, 5).samples, (std::vector<std::int16_t>{1, 2, 3, 0, 0}));
  EXPECT_EQ(audio::pad_or_trim(PcmClip{{1, 2, 3, 4, 5}, 16000}, 3).samples, (std::vector<std::int16_t>{1, 2, 3}));
  PcmClip c{std::vector<std::int16_t>(14000, 9), 16000};
  const auto p = audio::pad_or_trim(c, 16000);
  ASSERT_EQ(p.samples.size(), 16000u);
  for (std::size_t i = 14000; i < 16000; ++i) ASSERT_EQ(p.samples[i], 0);
  EXPECT_EQ(audio::pad_or_trim(p, 16000), p);
  EXPECT_THROW(audio::pad_or_trim(c, 0), Error);
}

TEST(NormalizePeak, Examples) {
  EXPECT_EQ(audio::normalize_peak(PcmClip{{16384, -32768}, 16000}).samples, (std::vector<double>{0.5, -1.0}));
  EXPECT_EQ(audio::normalize_peak(PcmClip{{0, 0, 0}, 16000}).samples, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(audio::normalize_peak(PcmClip{{100}, 16000}).samples, (std::vector<double>{1.0}));
}

TEST(NormalizePeak, PeakIsExactlyOneAndArgmaxPreserved) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(-32768, 32767);
  for (int trial = 0; trial < 200; ++trial) {
    PcmClip c;
    for (int i = 0; i < 257; ++i) c.samples.push_back(static_cast<std::int16_t>(d(rng)));
    const auto w = audio::normalize_peak(c);
    std::size_t arg_in = 0, arg_out = 0;
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
      if (std::abs(c.samples[i]) > std::abs(c.samples[arg_in])) arg_in = i;
      if (std::abs(w.samples[i]) > std::abs(w.samples[arg_out])) arg_out = i;
    }
    EXPECT_EQ(std::abs(w.samples[arg_out]), 1.0);
    EXPECT_EQ(arg_in, arg_out);
    EXPECT_TRUE(w.normalized);
  }
}

TEST(Quantize, RoundsAndSaturates) {
  Waveform w;
  w.samples = {0.0, 1.0, -1.0, 0.5, 2.0, -2.0};
  EXPECT_EQ(audio::quantize(w).samples, (std::vector<std::int16_t>{0, 32767, -32767, 16384, 32767, -32767}));
}

TEST(ScanDataset, SortedLabelledAndExcludesBackground) {
  const auto root = testing::scratch_dir("scan");
  PcmClip c{{1, 2}, 16000};
  audio::write_wav(root / "yes" / "a.wav", c);
  audio::write_wav(root / "no" / "b.wav", c);
  audio::write_wav(root / "_background_noise_" / "x.wav", c);
  const auto entries = audio::scan_dataset(root);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].relative_path, "no/b.wav");
  EXPECT_EQ(entries[0].label, "no");
  EXPECT_EQ(entries[0].source_id, "no/b");
  EXPECT_EQ(entries[1].relative_path, "yes/a.wav");
  EXPECT_EQ(entries[1].label, "yes");
}

TEST(ScanDataset, ManifestLabels) {
  const auto root = testing::scratch_dir("scan_manifest");
  audio::write_wav(root / "yes" / "a.wav", PcmClip{{1}, 16000});
  std::ofstream(root / "m.tsv") << "yes/a.wav\tyes\n";
  const auto entries = audio::scan_dataset(root, root / "m.tsv");
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].label, "yes");
}

TEST(ScanDataset, EmptyAndMissing) {
  const auto root = testing::scratch_dir("scan_empty");
  EXPECT_THROW(audio::scan_dataset(root), Error);
  EXPECT_THROW(audio::scan_dataset(root / "nope"), Error);
  EXPECT_THROW(audio::scan_dataset(root, root / "missing.tsv"), Error);
}

TEST(Splits, ListsOverrideHash) {
  const auto root = testing::scratch_dir("splits");
  testing::make_dataset(root, 5, 1, 1, 1);
  const auto entries = audio::scan_dataset(root);
  const auto splits = audio::assign_splits(entries, root);
  std::map<audio::Split, int> counts;
  for (auto s : splits) counts[s]++;
  EXPECT_EQ(counts[audio::Split::kTrain], 9);
  EXPECT_EQ(counts[audio::Split::kValidation], 3);
  EXPECT_EQ(counts[audio::Split::kTest], 3);
}

TEST(Splits, HashSplitIsStableAndSpeakerConsistent) {
  std::vector<audio::DatasetEntry> entries;
  for (int i = 0; i < 2000; ++i) {
    const std::string spk = "spk" + std::to_string(i / 2);
    const std::string label = i % 2 ? "yes" : "no";
    entries.push_back({label + "/" + spk + "_nohash_0", label, label + "/" + spk + "_nohash_0.wav", {}});
  }
  const auto a = audio::assign_splits(entries, "/nonexistent");
  EXPECT_EQ(a, audio::assign_splits(entries, "/nonexistent"));
  std::map<audio::Split, int> counts;
  for (std::size_t i = 0; i < a.size(); i += 2) {
    EXPECT_EQ(a[i], a[i + 1]);
    counts[a[i]]++;
  }
  EXPECT_NEAR(counts[audio::Split::kTest], 100, 40);
  EXPECT_NEAR(counts[audio::Split::kValidation], 100, 40);
}

}  // namespace
}  // namespace bsrkit
