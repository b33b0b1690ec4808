#include "harness/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "core/error.hpp"
#include "distributions/distributions.hpp"

namespace pdistill {

void CorpusSpec::validate() const {
  require(num_phones >= 2, "corpus needs at least two phones");
  require(num_phones <= 10, "corpus supports at most 10 phones");
  require(num_speakers >= 1, "corpus needs at least one speaker");
  require(sample_rate > 0.0, "sample_rate must be positive");
  require(frame_divisor >= 1 && clip_length % frame_divisor == 0, "clip_length must be a multiple of frame_divisor");
  require(clip_length >= frame_divisor, "clip_length must cover at least one frame");
  require(f0_min > 0.0 && f0_max > f0_min, "need 0 < f0_min < f0_max");
  require(f0_max * 2.0 < sample_rate / 2.0, "f0_max leaves no room for harmonics below Nyquist");
  require(min_phone_frames >= 1 && max_phone_frames >= min_phone_frames, "bad phone duration range");
  require(2 * crossfade <= min_phone_frames * frame_divisor, "crossfade longer than the shortest phone");
  require(noise_level >= 0.0, "noise_level must be non-negative");
  require(peak > 0.0 && peak <= 1.0, "peak must lie in (0, 1]");
  require(bit_depth >= 2 && bit_depth <= 16, "bit_depth must lie in [2, 16]");
  require(train_clips >= 1, "need at least one training clip");
}

double CorpusSpec::harmonic_amplitude(std::size_t phone, std::size_t harmonic) const {
  if (harmonic == 1) return 1.0;
  // Each phone boosts its own pair of harmonics out of 2..6.
  std::size_t n = 0;
  for (std::size_t a = 2; a <= 6; ++a)
    for (std::size_t b = a + 1; b <= 6; ++b, ++n)
      if (n == phone) return (harmonic == a || harmonic == b) ? 0.8 : 0.08;
  return 0.08;
}

void CorpusSpec::store(KeyValues& kv, const std::string& p) const {
  kv.set(p + "num_phones", std::to_string(num_phones));
  kv.set(p + "num_speakers", std::to_string(num_speakers));
  kv.set(p + "sample_rate", format_double(sample_rate));
  kv.set(p + "clip_length", std::to_string(clip_length));
  kv.set(p + "frame_divisor", std::to_string(frame_divisor));
  kv.set(p + "f0_min", format_double(f0_min));
  kv.set(p + "f0_max", format_double(f0_max));
  kv.set(p + "min_phone_frames", std::to_string(min_phone_frames));
  kv.set(p + "max_phone_frames", std::to_string(max_phone_frames));
  kv.set(p + "crossfade", std::to_string(crossfade));
  kv.set(p + "noise_level", format_double(noise_level));
  kv.set(p + "peak", format_double(peak));
  kv.set(p + "bit_depth", std::to_string(bit_depth));
  kv.set(p + "train_clips", std::to_string(train_clips));
  kv.set(p + "heldout_clips", std::to_string(heldout_clips));
  kv.set(p + "seed", std::to_string(seed));
}

CorpusSpec CorpusSpec::load(const KeyValues& kv, const std::string& p) {
  CorpusSpec s;
  s.num_phones = kv.get_size(p + "num_phones", s.num_phones);
  s.num_speakers = kv.get_size(p + "num_speakers", s.num_speakers);
  s.sample_rate = kv.get_double(p + "sample_rate", s.sample_rate);
  s.clip_length = kv.get_size(p + "clip_length", s.clip_length);
  s.frame_divisor = kv.get_size(p + "frame_divisor", s.frame_divisor);
  s.f0_min = kv.get_double(p + "f0_min", s.f0_min);
  s.f0_max = kv.get_double(p + "f0_max", s.f0_max);
  s.min_phone_frames = kv.get_size(p + "min_phone_frames", s.min_phone_frames);
  s.max_phone_frames = kv.get_size(p + "max_phone_frames", s.max_phone_frames);
  s.crossfade = kv.get_size(p + "crossfade", s.crossfade);
  s.noise_level = kv.get_double(p + "noise_level", s.noise_level);
  s.peak = kv.get_double(p + "peak", s.peak);
  s.bit_depth = static_cast<int>(kv.get_int(p + "bit_depth", s.bit_depth));
  s.train_clips = kv.get_size(p + "train_clips", s.train_clips);
  s.heldout_clips = kv.get_size(p + "heldout_clips", s.heldout_clips);
  s.seed = static_cast<std::uint64_t>(kv.get_int(p + "seed", static_cast<std::int64_t>(s.seed)));
  s.validate();
  return s;
}

Clip synth_clip(const CorpusSpec& spec, std::size_t index) {
  spec.validate();
  CounterRng rng(spec.seed, stream_id(StreamPurpose::kCorpus, index));
  const std::size_t len = spec.clip_length, frames = spec.frames_per_clip(), div = spec.frame_divisor;
  Clip clip;
  clip.speaker = static_cast<std::size_t>(rng.below(spec.num_speakers));

  // Phone sequence with random durations; neighbours always differ.
  clip.phones.reserve(frames);
  std::size_t previous = spec.num_phones;
  while (clip.phones.size() < frames) {
    std::size_t phone = static_cast<std::size_t>(rng.below(spec.num_phones - 1));
    if (previous < spec.num_phones && phone >= previous) ++phone;
    const std::size_t dur =
        spec.min_phone_frames + static_cast<std::size_t>(rng.below(spec.max_phone_frames - spec.min_phone_frames + 1));
    for (std::size_t k = 0; k < dur && clip.phones.size() < frames; ++k) clip.phones.push_back(phone);
    previous = phone;
  }

  // Smooth f0 around the speaker's centre, kept inside [f0_min, f0_max].
  const double span = spec.f0_max - spec.f0_min;
  const double centre = spec.f0_min + span * (static_cast<double>(clip.speaker) + 0.5) /
                                          static_cast<double>(spec.num_speakers);
  const double cycles = 0.5 + rng.uniform_open();
  const double phase0 = 2.0 * std::numbers::pi * rng.uniform_open();
  const double depth = 0.1;
  clip.f0.resize(len);
  for (std::size_t t = 0; t < len; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(len);
    const double f = centre * std::exp(depth * std::sin(2.0 * std::numbers::pi * cycles * u + phase0));
    clip.f0[t] = std::clamp(f, spec.f0_min, spec.f0_max);
  }

  // Per-sample phone weights with linear crossfades at phone changes.
  const std::size_t np = spec.num_phones;
  std::vector<double> weight(len * np, 0.0);
  for (std::size_t t = 0; t < len; ++t) weight[t * np + clip.phones[t / div]] = 1.0;
  for (std::size_t fr = 1; fr < frames; ++fr) {
    const std::size_t a = clip.phones[fr - 1], b = clip.phones[fr];
    if (a == b) continue;
    const std::size_t edge = fr * div;
    for (std::size_t t = edge - spec.crossfade; t < edge + spec.crossfade; ++t) {
      const double mix = (static_cast<double>(t - (edge - spec.crossfade)) + 0.5) / (2.0 * spec.crossfade);
      weight[t * np + a] = 1.0 - mix;
      weight[t * np + b] = mix;
    }
  }

  std::vector<double> wave(len);
  double phase = 2.0 * std::numbers::pi * rng.uniform_open();
  for (std::size_t t = 0; t < len; ++t) {
    double v = 0.0;
    for (std::size_t h = 1; h <= spec.num_harmonics(); ++h) {
      if (static_cast<double>(h) * clip.f0[t] >= 0.45 * spec.sample_rate) break;
      double amp = 0.0;
      for (std::size_t p = 0; p < np; ++p) amp += weight[t * np + p] * spec.harmonic_amplitude(p, h);
      v += amp * std::sin(static_cast<double>(h) * phase);
    }
    wave[t] = v + spec.noise_level * rng.normal();
    phase = std::fmod(phase + 2.0 * std::numbers::pi * clip.f0[t] / spec.sample_rate, 2.0 * std::numbers::pi);
  }
  double peak = 0.0;
  for (const double v : wave) peak = std::max(peak, std::abs(v));
  const DiscretizationSpec grid{spec.bit_depth};
  clip.waveform.resize(len);
  for (std::size_t t = 0; t < len; ++t) clip.waveform[t] = grid.quantize(wave[t] * spec.peak / peak);

  const std::size_t ch = spec.conditioning_channels();
  const double log_lo = std::log(spec.f0_min), log_hi = std::log(spec.f0_max);
  clip.conditioning.assign(ch * frames, 0.0);
  for (std::size_t fr = 0; fr < frames; ++fr) {
    clip.conditioning[clip.phones[fr] * frames + fr] = 1.0;
    double mean_log = 0.0;
    for (std::size_t t = fr * div; t < (fr + 1) * div; ++t) mean_log += std::log(clip.f0[t]) / static_cast<double>(div);
    clip.conditioning[np * frames + fr] = 2.0 * (mean_log - log_lo) / (log_hi - log_lo) - 1.0;
    clip.conditioning[(np + 1 + clip.speaker) * frames + fr] = 1.0;
  }
  return clip;
}

std::vector<Clip> synth_corpus(const CorpusSpec& spec, std::size_t first, std::size_t count) {
  std::vector<Clip> clips;
  clips.reserve(count);
  for (std::size_t i = 0; i < count; ++i) clips.push_back(synth_clip(spec, first + i));
  return clips;
}

std::vector<Clip> training_clips(const CorpusSpec& spec) { return synth_corpus(spec, 0, spec.train_clips); }

std::vector<Clip> heldout_clips(const CorpusSpec& spec) {
  return synth_corpus(spec, spec.train_clips, spec.heldout_clips);
}

Batch make_batch(const CorpusSpec& spec, const std::vector<Clip>& clips, const std::vector<std::size_t>& rows,
                 const std::vector<std::size_t>& start_frames, std::size_t crop_length) {
  require(!rows.empty() && rows.size() == start_frames.size(), "make_batch needs one start frame per row");
  require(crop_length >= spec.frame_divisor && crop_length % spec.frame_divisor == 0,
          "crop_length must be a positive multiple of frame_divisor");
  require(crop_length <= spec.clip_length, "crop_length exceeds the clip length");
  const std::size_t b = rows.size(), div = spec.frame_divisor, crop_frames = crop_length / div;
  const std::size_t frames = spec.frames_per_clip(), ch = spec.conditioning_channels();
  std::vector<double> x(b * crop_length), c(b * ch * crop_frames);
  Batch out;
  out.labels.reserve(b * crop_frames);
  for (std::size_t i = 0; i < b; ++i) {
    require(rows[i] < clips.size(), "batch row out of range");
    require(start_frames[i] + crop_frames <= frames, "crop runs past the end of the clip");
    const Clip& clip = clips[rows[i]];
    const std::size_t s = start_frames[i];
    std::copy_n(clip.waveform.begin() + static_cast<std::ptrdiff_t>(s * div), crop_length, x.begin() + i * crop_length);
    for (std::size_t k = 0; k < ch; ++k)
      std::copy_n(clip.conditioning.begin() + static_cast<std::ptrdiff_t>(k * frames + s), crop_frames,
                  c.begin() + (i * ch + k) * crop_frames);
    for (std::size_t f = 0; f < crop_frames; ++f) out.labels.push_back(clip.phones[s + f]);
  }
  out.x = Tensor(Shape{b, 1, crop_length}, std::move(x));
  out.c = {Tensor(Shape{b, ch, crop_frames}, std::move(c)), div};
  return out;
}

Batch random_batch(const CorpusSpec& spec, const std::vector<Clip>& clips, std::size_t batch_size,
                   std::size_t crop_length, CounterRng& rng) {
  require(!clips.empty(), "random_batch needs clips");
  const std::size_t spare = spec.frames_per_clip() - crop_length / spec.frame_divisor;
  std::vector<std::size_t> rows(batch_size), starts(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    rows[i] = static_cast<std::size_t>(rng.below(clips.size()));
    starts[i] = static_cast<std::size_t>(rng.below(spare + 1));
  }
  return make_batch(spec, clips, rows, starts, crop_length);
}

Batch whole_clips(const CorpusSpec& spec, const std::vector<Clip>& clips) {
  std::vector<std::size_t> rows(clips.size()), starts(clips.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return make_batch(spec, clips, rows, starts, spec.clip_length);
}

}  // namespace pdistill
