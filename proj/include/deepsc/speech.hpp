#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepsc/tensor.hpp"

namespace deepsc {

// Mono speech clip with samples normalized to [-1, 1].
struct SpeechClip {
  std::vector<float> samples;
  int sample_rate_hz = 8000;
  std::string source_id;
};

// Framed batch: data is [B, F, L]; clip_ids carries provenance.
struct FrameBatch {
  Tensor data;
  std::vector<float> scale;  // reserved per-clip gain, 1.0 unless configured
  std::vector<std::string> clip_ids;

  int batch() const { return data.dim(0); }
  int frames() const { return data.dim(1); }
  int frame_len() const { return data.dim(2); }
};

// RIFF/WAVE PCM16 loader. Mono or first channel; samples scaled by 1/32768.
SpeechClip load_wav(const std::string& path);
void save_wav(const std::string& path, const SpeechClip& clip);

// 16 kHz -> 8 kHz: 64-tap Hamming windowed-sinc low pass (4 kHz cutoff),
// then decimation by 2. Output length is floor(input/2).
SpeechClip resample_to_8k(const SpeechClip& clip);

// Row-major reshape of the first W samples of each clip into F x L frames.
// Short clips are zero padded up to W. Requires F*L == W.
FrameBatch frame_clips(const std::vector<SpeechClip>& clips, int W, int F, int L);

// Exact inverse of frame_clips: [B,F,L] -> B sequences of length F*L.
std::vector<std::vector<float>> deframe(const Tensor& m_hat);

// Deterministic shuffled batch iteration over a directory of WAV files.
class SpeechDataset {
 public:
  // `manifest` (optional) restricts the set: one relative path per line.
  SpeechDataset(const std::string& dir, const std::string& manifest = "");

  std::size_t num_clips() const { return clips_.size(); }
  const SpeechClip& clip(std::size_t i) const { return clips_[i]; }

  // Batches for one epoch: shuffled by (seed, epoch), final partial batch dropped.
  std::vector<FrameBatch> epoch_batches(int batch_size, int W, int F, int L,
                                        std::uint64_t seed, int epoch) const;

  // All clips framed in file order (evaluation path).
  FrameBatch all_frames(int W, int F, int L) const;

 private:
  std::vector<SpeechClip> clips_;
};

}  // namespace deepsc
