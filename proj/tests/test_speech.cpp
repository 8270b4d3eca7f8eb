#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <numbers>

#include "deepsc/errors.hpp"
#include "deepsc/harness.hpp"
#include "deepsc/speech.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace deepsc;
using deepsc::testutil::TempDir;

namespace {

SpeechClip sine_clip(double freq_hz, int rate, int n, double amp = 0.5) {
  SpeechClip c;
  c.sample_rate_hz = rate;
  c.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    c.samples[static_cast<std::size_t>(i)] =
        static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq_hz * i / rate));
  }
  return c;
}

double rms(std::span<const float> v, std::size_t from, std::size_t to) {
  double acc = 0.0;
  for (std::size_t i = from; i < to; ++i) acc += static_cast<double>(v[i]) * v[i];
  return std::sqrt(acc / static_cast<double>(to - from));
}

}  // namespace

TEST_CASE("wav scaling and round trip") {
  TempDir dir("wav");

  // hand-built PCM16 wav with samples [0, 16384, -32768]
  {
    SpeechClip c;
    c.sample_rate_hz = 8000;
    c.samples = {0.0f, 0.5f, -1.0f};
    save_wav(dir.file("x.wav"), c);
  }
  const SpeechClip back = load_wav(dir.file("x.wav"));
  REQUIRE(back.samples.size() == 3);
  CHECK(back.samples[0] == 0.0f);
  CHECK(back.samples[1] == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(back.samples[2] == doctest::Approx(-1.0).epsilon(1e-4));

  // empty data chunk is a valid zero-length clip
  {
    SpeechClip c;
    c.sample_rate_hz = 8000;
    save_wav(dir.file("empty.wav"), c);
  }
  CHECK(load_wav(dir.file("empty.wav")).samples.empty());

  // synthetic sine survives a write/read cycle within one quantization step
  const SpeechClip sine = sine_clip(1000.0, 8000, 800);
  save_wav(dir.file("sine.wav"), sine);
  const SpeechClip sine2 = load_wav(dir.file("sine.wav"));
  REQUIRE(sine2.samples.size() == sine.samples.size());
  for (std::size_t i = 0; i < sine.samples.size(); ++i) {
    CHECK(std::abs(sine2.samples[i] - sine.samples[i]) < 1.0f / 32768.0f);
  }

  // malformed header
  {
    std::ofstream bad(dir.file("bad.wav"), std::ios::binary);
    bad << "JUNKJUNKJUNK";
  }
  CHECK_THROWS_AS(load_wav(dir.file("bad.wav")), ParseError);
}

TEST_CASE("resampler") {
  // DC gain 1
  SpeechClip dc;
  dc.sample_rate_hz = 16000;
  dc.samples.assign(2000, 0.25f);
  const SpeechClip dc8 = resample_to_8k(dc);
  CHECK(dc8.samples.size() == 1000);
  for (std::size_t i = 100; i + 100 < dc8.samples.size(); ++i) {
    CHECK(std::abs(dc8.samples[i] - 0.25f) < 1e-3f);
  }

  // 1 kHz passband amplitude preserved within 1% (edges trimmed)
  const SpeechClip tone = sine_clip(1000.0, 16000, 16000);
  const SpeechClip tone8 = resample_to_8k(tone);
  const double in_rms = rms(tone.samples, 1000, 15000);
  const double out_rms = rms(tone8.samples, 500, 7500);
  CHECK(out_rms == doctest::Approx(in_rms).epsilon(0.01));

  // 7 kHz is above the new Nyquist: stopband leaves < 5% RMS
  const SpeechClip hi = sine_clip(7000.0, 16000, 16000);
  const SpeechClip hi8 = resample_to_8k(hi);
  CHECK(rms(hi8.samples, 500, 7500) < 0.05 * rms(hi.samples, 1000, 15000));

  // linearity: resample(a*x) == a*resample(x)
  SpeechClip scaled = tone;
  for (auto& v : scaled.samples) v *= 0.3f;
  const SpeechClip scaled8 = resample_to_8k(scaled);
  for (std::size_t i = 0; i < scaled8.samples.size(); ++i) {
    CHECK(std::abs(scaled8.samples[i] - 0.3f * tone8.samples[i]) < 1e-6f);
  }

  SpeechClip wrong;
  wrong.sample_rate_hz = 8000;
  wrong.samples.assign(100, 0.0f);
  CHECK_THROWS_AS(resample_to_8k(wrong), UnsupportedFormatError);
}

TEST_CASE("framing") {
  SpeechClip a;
  a.sample_rate_hz = 8000;
  a.samples = {1, 2, 3, 4};
  const FrameBatch fb = frame_clips({a}, 4, 2, 2);
  CHECK(fb.data.at({0, 0, 0}) == 1.0f);
  CHECK(fb.data.at({0, 0, 1}) == 2.0f);
  CHECK(fb.data.at({0, 1, 0}) == 3.0f);
  CHECK(fb.data.at({0, 1, 1}) == 4.0f);

  // zero pad short clips
  SpeechClip s;
  s.sample_rate_hz = 8000;
  s.samples = {9, 8, 7};
  const FrameBatch fp = frame_clips({s}, 4, 2, 2);
  CHECK(fp.data.at({0, 1, 1}) == 0.0f);

  CHECK_THROWS_AS(frame_clips({a}, 4, 3, 2), ConfigError);

  // frame then deframe is the identity, and energy is preserved bit-exactly
  const SpeechClip r = make_synth_clip(5, 600, 8000);
  const FrameBatch fr = frame_clips({r}, 512, 8, 64);
  const auto back = deframe(fr.data);
  double e_frames = 0.0, e_raw = 0.0;
  for (int i = 0; i < 512; ++i) {
    CHECK(back[0][static_cast<std::size_t>(i)] == r.samples[static_cast<std::size_t>(i)]);
    e_raw += static_cast<double>(r.samples[static_cast<std::size_t>(i)]) *
             r.samples[static_cast<std::size_t>(i)];
  }
  for (float v : fr.data.data()) e_frames += static_cast<double>(v) * v;
  CHECK(e_frames == e_raw);
}

TEST_CASE("dataset batching") {
  TempDir dir("ds");
  write_synth_dataset(dir.str(), 5, 700, 8000, 21);
  const SpeechDataset ds(dir.str());
  CHECK(ds.num_clips() == 5);

  // floor(5/2) = 2 batches per epoch
  const auto batches = ds.epoch_batches(2, 512, 8, 64, 77, 0);
  CHECK(batches.size() == 2);

  // same seed -> identical order; different seed -> different permutation
  const auto again = ds.epoch_batches(2, 512, 8, 64, 77, 0);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    CHECK(batches[b].clip_ids == again[b].clip_ids);
  }
  TempDir dir2("ds2");
  write_synth_dataset(dir2.str(), 12, 700, 8000, 22);
  const SpeechDataset ds2(dir2.str());
  const auto p1 = ds2.epoch_batches(12, 512, 8, 64, 1, 0);
  const auto p2 = ds2.epoch_batches(12, 512, 8, 64, 2, 0);
  CHECK(p1[0].clip_ids != p2[0].clip_ids);

  CHECK_THROWS_AS(SpeechDataset("/nonexistent_dir_deepsc"), DatasetError);

  // manifest restricts the set
  {
    std::ofstream mf(dir.file("manifest.txt"));
    mf << "synth_000.wav\nsynth_002.wav\n";
  }
  const SpeechDataset restricted(dir.str(), dir.file("manifest.txt"));
  CHECK(restricted.num_clips() == 2);
}
