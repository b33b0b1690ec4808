#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"
#include "core/config.hpp"
#include "core/rng.hpp"
#include "teacher/conditioning.hpp"

namespace pdistill {

// Synthetic stand-in for conditioned speech: pseudo-phones with fixed
// harmonic profiles, driven by a smooth per-speaker f0 contour.
struct CorpusSpec {
  std::size_t num_phones = 8;
  std::size_t num_speakers = 2;
  double sample_rate = 4000.0;
  std::size_t clip_length = 2048;
  std::size_t frame_divisor = 64;
  double f0_min = 120.0;
  double f0_max = 280.0;
  std::size_t min_phone_frames = 3;
  std::size_t max_phone_frames = 8;
  std::size_t crossfade = 16;
  double noise_level = 0.005;
  double peak = 0.8;
  int bit_depth = 8;
  std::size_t train_clips = 64;
  std::size_t heldout_clips = 16;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t frames_per_clip() const { return clip_length / frame_divisor; }
  // One-hot phone, normalized log f0, one-hot speaker.
  std::size_t conditioning_channels() const { return num_phones + 1 + num_speakers; }
  std::size_t num_harmonics() const { return 6; }
  // Relative amplitude of harmonic h (1-based) for a phone. The fundamental
  // is always the loudest.
  double harmonic_amplitude(std::size_t phone, std::size_t harmonic) const;

  void store(KeyValues& kv, const std::string& prefix) const;
  static CorpusSpec load(const KeyValues& kv, const std::string& prefix);
};

struct Clip {
  std::vector<double> waveform;      // clip_length bin centers
  std::vector<std::size_t> phones;   // one per frame
  std::size_t speaker = 0;
  std::vector<double> f0;            // Hz, one per sample
  std::vector<double> conditioning;  // [channels, frames], row-major
};

// Clip `index` of the corpus. A pure function of (spec, index).
Clip synth_clip(const CorpusSpec& spec, std::size_t index);
// Training clips are indices [0, train_clips), held-out ones follow.
std::vector<Clip> synth_corpus(const CorpusSpec& spec, std::size_t first, std::size_t count);
std::vector<Clip> training_clips(const CorpusSpec& spec);
std::vector<Clip> heldout_clips(const CorpusSpec& spec);

struct Batch {
  Tensor x;                         // [B, 1, T]
  ConditioningSeq c;                // [B, C, T / frame_divisor]
  std::vector<std::size_t> labels;  // [B * frames]
};

// Frame-aligned crops of `crop_length` samples, starting at `start_frames[i]`
// within clip `rows[i]`.
Batch make_batch(const CorpusSpec& spec, const std::vector<Clip>& clips, const std::vector<std::size_t>& rows,
                 const std::vector<std::size_t>& start_frames, std::size_t crop_length);
// Random rows and crop offsets drawn from `rng`.
Batch random_batch(const CorpusSpec& spec, const std::vector<Clip>& clips, std::size_t batch_size,
                   std::size_t crop_length, CounterRng& rng);
// Every clip whole, in order.
Batch whole_clips(const CorpusSpec& spec, const std::vector<Clip>& clips);

}  // namespace pdistill
