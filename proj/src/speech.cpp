#include "deepsc/speech.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "deepsc/errors.hpp"
#include "deepsc/rng.hpp"

namespace deepsc {

namespace {

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ParseError("wav: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw ParseError("wav: truncated header");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

SpeechClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("wav: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw ParseError("wav: missing RIFF tag in " + path);
  read_u32(in);  // riff size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw ParseError("wav: missing WAVE tag in " + path);

  bool got_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  SpeechClip clip;
  clip.source_id = std::filesystem::path(path).filename().string();

  while (in.peek() != EOF) {
    in.read(tag, 4);
    if (!in) break;
    const std::uint32_t chunk_size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw ParseError("wav: short fmt chunk");
      format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      in.seekg(chunk_size - 16, std::ios::cur);
      got_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw ParseError("wav: data chunk before fmt in " + path);
      if (format != 1 || bits != 16) {
        throw UnsupportedFormatError("wav: only PCM16 supported, got format=" +
                                     std::to_string(format) + " bits=" + std::to_string(bits));
      }
      if (channels < 1) throw ParseError("wav: zero channels");
      const std::uint32_t n_frames = chunk_size / (2u * channels);
      clip.samples.resize(n_frames);
      std::vector<char> raw(chunk_size);
      in.read(raw.data(), chunk_size);
      if (!in) throw ParseError("wav: truncated data chunk in " + path);
      for (std::uint32_t i = 0; i < n_frames; ++i) {
        // first channel only
        const unsigned char lo = static_cast<unsigned char>(raw[2u * channels * i]);
        const unsigned char hi = static_cast<unsigned char>(raw[2u * channels * i + 1]);
        const std::int16_t s = static_cast<std::int16_t>(lo | (hi << 8));
        clip.samples[i] = static_cast<float>(s) / 32768.0f;
      }
      clip.sample_rate_hz = static_cast<int>(rate);
      if (clip.sample_rate_hz != 8000 && clip.sample_rate_hz != 16000) {
        throw UnsupportedFormatError("wav: sample rate " + std::to_string(rate) +
                                     " not in {8000,16000}");
      }
      return clip;
    } else {
      in.seekg(chunk_size + (chunk_size & 1u), std::ios::cur);
    }
  }
  throw ParseError("wav: no data chunk in " + path);
}

void save_wav(const std::string& path, const SpeechClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("wav: cannot write " + path);
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = 2u * n;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  write_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2u);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (float v : clip.samples) {
    const float c = std::clamp(v, -1.0f, 1.0f);
    auto s = static_cast<std::int16_t>(std::lrintf(c * 32767.0f));
    write_u16(out, static_cast<std::uint16_t>(s));
  }
}

SpeechClip resample_to_8k(const SpeechClip& clip) {
  if (clip.sample_rate_hz != 16000) {
    throw UnsupportedFormatError("resample_to_8k: input must be 16 kHz, got " +
                                 std::to_string(clip.sample_rate_hz));
  }
  constexpr int kTaps = 64;
  static const std::vector<double> taps = [] {
    std::vector<double> h(kTaps);
    const double fc = 0.25;  // 4 kHz / 16 kHz
    const double center = (kTaps - 1) / 2.0;
    double sum = 0.0;
    for (int n = 0; n < kTaps; ++n) {
      const double t = n - center;
      const double sinc =
          t == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * t) / (std::numbers::pi * t);
      const double win =
          0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (kTaps - 1));  // Hamming
      h[static_cast<std::size_t>(n)] = sinc * win;
      sum += h[static_cast<std::size_t>(n)];
    }
    for (double& v : h) v /= sum;  // unity DC gain
    return h;
  }();

  SpeechClip out;
  out.sample_rate_hz = 8000;
  out.source_id = clip.source_id;
  const std::int64_t n_in = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t n_out = n_in / 2;
  out.samples.resize(static_cast<std::size_t>(n_out));
  const int center = (kTaps - 1) / 2;
  for (std::int64_t o = 0; o < n_out; ++o) {
    const std::int64_t pos = 2 * o;
    double acc = 0.0;
    for (int t = 0; t < kTaps; ++t) {
      const std::int64_t idx = pos + t - center;
      if (idx < 0 || idx >= n_in) continue;  // zero-padded edges
      acc += taps[static_cast<std::size_t>(t)] * clip.samples[static_cast<std::size_t>(idx)];
    }
    out.samples[static_cast<std::size_t>(o)] = static_cast<float>(acc);
  }
  return out;
}

FrameBatch frame_clips(const std::vector<SpeechClip>& clips, int W, int F, int L) {
  if (F * L != W) {
    throw ConfigError("frame: F*L must equal W, got " + std::to_string(F) + "*" +
                      std::to_string(L) + " != " + std::to_string(W));
  }
  const int B = static_cast<int>(clips.size());
  if (B == 0) throw ConfigError("frame: empty clip list");
  FrameBatch batch;
  batch.data = Tensor::zeros({B, F, L});
  batch.scale.assign(static_cast<std::size_t>(B), 1.0f);
  auto dst = batch.data.data();
  for (int b = 0; b < B; ++b) {
    const auto& s = clips[static_cast<std::size_t>(b)].samples;
    const std::size_t n = std::min<std::size_t>(s.size(), static_cast<std::size_t>(W));
    std::copy_n(s.begin(), n, dst.begin() + static_cast<std::size_t>(b) * W);
    batch.clip_ids.push_back(clips[static_cast<std::size_t>(b)].source_id);
  }
  return batch;
}

std::vector<std::vector<float>> deframe(const Tensor& m_hat) {
  if (m_hat.rank() != 3) throw ShapeError("deframe: expects [B,F,L], got " + shape_str(m_hat.shape()));
  const int B = m_hat.dim(0);
  const std::int64_t W = static_cast<std::int64_t>(m_hat.dim(1)) * m_hat.dim(2);
  std::vector<std::vector<float>> out(static_cast<std::size_t>(B));
  auto src = m_hat.data();
  for (int b = 0; b < B; ++b) {
    out[static_cast<std::size_t>(b)].assign(src.begin() + b * W, src.begin() + (b + 1) * W);
  }
  return out;
}

SpeechDataset::SpeechDataset(const std::string& dir, const std::string& manifest) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (!manifest.empty()) {
    std::ifstream in(manifest);
    if (!in) throw DatasetError("dataset: cannot open manifest " + manifest);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) files.push_back((fs::path(dir) / line).string());
    }
  } else {
    if (!fs::is_directory(dir)) throw DatasetError("dataset: not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") {
        files.push_back(e.path().string());
      }
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw DatasetError("dataset: no wav files under " + dir);
  for (const auto& f : files) {
    SpeechClip c = load_wav(f);
    if (c.sample_rate_hz == 16000) c = resample_to_8k(c);
    clips_.push_back(std::move(c));
  }
}

std::vector<FrameBatch> SpeechDataset::epoch_batches(int batch_size, int W, int F, int L,
                                                     std::uint64_t seed, int epoch) const {
  if (batch_size < 1) throw ConfigError("dataset: batch_size must be >= 1");
  std::vector<std::size_t> order(clips_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::derive(seed, 0x5a5aULL, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);

  std::vector<FrameBatch> batches;
  const std::size_t n_full = clips_.size() / static_cast<std::size_t>(batch_size);
  for (std::size_t k = 0; k < n_full; ++k) {
    std::vector<SpeechClip> group;
    for (int j = 0; j < batch_size; ++j) {
      group.push_back(clips_[order[k * static_cast<std::size_t>(batch_size) +
                                   static_cast<std::size_t>(j)]]);
    }
    batches.push_back(frame_clips(group, W, F, L));
  }
  return batches;
}

FrameBatch SpeechDataset::all_frames(int W, int F, int L) const {
  return frame_clips(clips_, W, F, L);
}

}  // namespace deepsc
