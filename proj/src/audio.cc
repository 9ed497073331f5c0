// src/audio.cc

// Copyright 2026  The laud authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "laud/audio.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "laud/io.h"

namespace laud {

// ---------------------------------------------------------------------------
// WAV

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

Waveform DecodeWav(const std::vector<std::uint8_t> &bytes) {
  ByteReader in(bytes, "wav");
  if (in.Tag() != "RIFF") Fail(ErrorKind::kFormat, "wav: missing RIFF tag");
  in.U32();  // riff size; not trusted
  if (in.Tag() != "WAVE") Fail(ErrorKind::kFormat, "wav: missing WAVE tag");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (in.remaining() >= 8) {
    const std::string id = in.Tag();
    const std::uint32_t size = in.U32();
    if (id == "fmt ") {
      if (size < 16) Fail(ErrorKind::kFormat, "wav: fmt chunk too small");
      format = in.U16();
      channels = in.U16();
      rate = in.U32();
      in.U32();  // byte rate
      in.U16();  // block align
      bits = in.U16();
      std::size_t used = 16;
      if (format == kFormatExtensible && size >= 26) {
        in.U16();  // cbSize
        in.U16();  // valid bits
        in.U32();  // channel mask
        format = in.U16();  // first two bytes of the subformat GUID
        in.Skip(14);
        used = 40;
      }
      if (size < used) Fail(ErrorKind::kFormat, "wav: fmt chunk too small");
      in.Skip(size - used + (size & 1));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) Fail(ErrorKind::kFormat, "wav: data before fmt");
      if (channels == 0 || rate == 0)
        Fail(ErrorKind::kFormat, "wav: zero channels or sample rate");
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32)
        Fail(ErrorKind::kUnsupportedEncoding,
             "wav: format " + std::to_string(format) + " with " +
                 std::to_string(bits) + " bits");
      const std::size_t frame_bytes = std::size_t(channels) * (bits / 8);
      if (size > in.remaining())
        Fail(ErrorKind::kFormat, "wav: data chunk truncated");
      const std::size_t frames = size / frame_bytes;
      Waveform w;
      w.sample_rate_hz = static_cast<int>(rate);
      w.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
          if (pcm16)
            acc += in.Pod<std::int16_t>() / 32768.0;
          else
            acc += in.F32();
        }
        w.samples[i] = acc / channels;
      }
      return w;
    } else {
      in.Skip(std::min<std::size_t>(size + (size & 1), in.remaining()));
    }
  }
  Fail(ErrorKind::kFormat, have_fmt ? "wav: no data chunk" : "wav: no fmt chunk");
}

Waveform ReadWav(const std::string &path) {
  try {
    return DecodeWav(ReadFileBytes(path));
  } catch (const Error &e) {
    throw Error(e.kind(), std::string(e.what()) + " (" + path + ")");
  }
}

std::vector<std::uint8_t> EncodeWav(const Waveform &w) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  ByteWriter out;
  out.Tag("RIFF");
  out.U32(36 + data_bytes);
  out.Tag("WAVE");
  out.Tag("fmt ");
  out.U32(16);
  out.U16(kFormatPcm);
  out.U16(1);
  out.U32(static_cast<std::uint32_t>(w.sample_rate_hz));
  out.U32(static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  out.U16(2);
  out.U16(16);
  out.Tag("data");
  out.U32(data_bytes);
  for (double x : w.samples) {
    if (!std::isfinite(x)) Fail(ErrorKind::kNumeric, "wav: non-finite sample");
    // 32768 scaling with an upper clamp keeps the round-trip within one LSB
    // for every amplitude in [-1, 1].
    const double scaled = std::round(std::clamp(x, -1.0, 1.0) * 32768.0);
    out.Pod(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
  }
  return std::move(out.buffer());
}

void WriteWav(const Waveform &w, const std::string &path) {
  WriteFileAtomic(path, EncodeWav(w));
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

double Sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(M_PI * x) / (M_PI * x);
}

double Kaiser(double x, double beta) {
  // x in [-1, 1]
  if (std::abs(x) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) /
         std::cyl_bessel_i(0.0, beta);
}

}  // namespace

Waveform Resample(const Waveform &w, int target_hz) {
  if (target_hz <= 0) Fail(ErrorKind::kConfig, "resample: target rate must be > 0");
  if (w.sample_rate_hz <= 0) Fail(ErrorKind::kConfig, "resample: bad source rate");
  if (target_hz == w.sample_rate_hz) return w;

  const long g = std::gcd(static_cast<long>(target_hz),
                          static_cast<long>(w.sample_rate_hz));
  const long up = target_hz / g;
  const long down = w.sample_rate_hz / g;
  const std::size_t n_in = w.size();
  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * target_hz / w.sample_rate_hz));

  constexpr double kRolloff = 0.95;
  constexpr double kZeroCrossings = 16.0;
  constexpr double kBeta = 8.6;
  const double fc = 0.5 * std::min(1.0, static_cast<double>(up) / down) * kRolloff;
  const double half_width = kZeroCrossings / (2.0 * fc);
  const long taps_half = static_cast<long>(std::ceil(half_width));
  const long taps = 2 * taps_half;

  // table[p * taps + j] weights input sample base - taps_half + 1 + j for an
  // output whose position is base + p / up.
  std::vector<double> table(static_cast<std::size_t>(up * taps));
  for (long p = 0; p < up; ++p) {
    double sum = 0.0;
    for (long j = 0; j < taps; ++j) {
      const double x = static_cast<double>(p) / up + taps_half - 1 - j;
      const double h = 2.0 * fc * Sinc(2.0 * fc * x) * Kaiser(x / half_width, kBeta);
      table[p * taps + j] = h;
      sum += h;
    }
    for (long j = 0; j < taps; ++j) table[p * taps + j] /= sum;
  }

  Waveform out;
  out.sample_rate_hz = target_hz;
  out.samples.assign(n_out, 0.0);
  for (std::size_t n = 0; n < n_out; ++n) {
    const long long pos = static_cast<long long>(n) * down;
    const long long base = pos / up;
    const long p = static_cast<long>(pos % up);
    const double *h = &table[p * taps];
    double acc = 0.0;
    for (long j = 0; j < taps; ++j) {
      const long long k = base - taps_half + 1 + j;
      if (k < 0 || k >= static_cast<long long>(n_in)) continue;
      acc += h[j] * w.samples[static_cast<std::size_t>(k)];
    }
    out.samples[n] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mixing

double Rms(const std::vector<double> &x) {
  if (x.empty()) return 0.0;
  long double acc = 0.0;
  for (double v : x) acc += static_cast<long double>(v) * v;
  return static_cast<double>(std::sqrt(acc / x.size()));
}

MixResult MixAtSnr(const Waveform &speech, const Waveform &noise, double snr_db,
                   Rng &rng) {
  if (speech.sample_rate_hz != noise.sample_rate_hz)
    Fail(ErrorKind::kConfig, "mix: sample rates differ");
  if (speech.samples.empty() || noise.samples.empty())
    Fail(ErrorKind::kDegenerateSignal, "mix: empty signal");
  if (!std::isfinite(snr_db)) Fail(ErrorKind::kConfig, "mix: SNR must be finite");

  const std::size_t n = speech.size();
  std::vector<double> tiled = noise.samples;
  while (tiled.size() < n)
    tiled.insert(tiled.end(), noise.samples.begin(), noise.samples.end());

  MixResult r;
  r.offset = static_cast<std::size_t>(UniformIndex(rng, tiled.size() - n + 1));
  std::vector<double> crop(tiled.begin() + r.offset, tiled.begin() + r.offset + n);

  const double speech_rms = Rms(speech.samples);
  const double noise_rms = Rms(crop);
  if (speech_rms == 0.0) Fail(ErrorKind::kDegenerateSignal, "mix: zero-RMS speech");
  if (noise_rms == 0.0) Fail(ErrorKind::kDegenerateSignal, "mix: zero-RMS noise");

  r.gain = speech_rms / (noise_rms * std::pow(10.0, snr_db / 20.0));
  r.scaled_noise.resize(n);
  r.mixed.sample_rate_hz = speech.sample_rate_hz;
  r.mixed.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.scaled_noise[i] = r.gain * crop[i];
    r.mixed.samples[i] = speech.samples[i] + r.scaled_noise[i];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct TokenShape {
  bool voiced;
  double formant[3];     // Hz, voiced only
  double bandwidth[3];   // Hz
  double gain_db[3];
  double band_lo, band_hi;  // Hz, fricatives only
};

// Vowel formants are the classic adult averages; fricatives are noise bands.
const TokenShape kTokenShapes[] = {
    {true, {730, 1090, 2440}, {90, 110, 170}, {0, -5, -12}, 0, 0},
    {true, {270, 2290, 3010}, {60, 100, 170}, {0, -12, -14}, 0, 0},
    {true, {300, 870, 2240}, {60, 90, 170}, {0, -6, -20}, 0, 0},
    {false, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}, 4000, 7200},
    {true, {530, 1840, 2480}, {80, 100, 170}, {0, -6, -12}, 0, 0},
    {false, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}, 1800, 3600},
    {true, {570, 840, 2410}, {80, 90, 170}, {0, -2, -18}, 0, 0},
    {true, {660, 1720, 2410}, {90, 110, 170}, {0, -4, -10}, 0, 0},
    {true, {490, 1350, 1690}, {70, 100, 120}, {0, -4, -6}, 0, 0},
    {true, {390, 1990, 2550}, {70, 100, 170}, {0, -8, -10}, 0, 0},
    {false, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}, 1000, 7500},
    {true, {520, 1190, 2390}, {80, 100, 170}, {0, -2, -14}, 0, 0},
};
constexpr int kMaxVocabulary = static_cast<int>(std::size(kTokenShapes));

struct Voice {
  double f0;            // Hz
  double formant_scale;
  double tilt_db_per_octave;
  double timbre_hz;  // token-independent resonance
};

double SpectralEnvelope(const TokenShape &t, const Voice &v, double f) {
  double e = 0.003;
  for (int j = 0; j < 3; ++j) {
    const double center = t.formant[j] * v.formant_scale;
    const double z = (f - center) / t.bandwidth[j];
    e += std::pow(10.0, t.gain_db[j] / 20.0) * std::exp(-0.5 * z * z);
  }
  const double z = (f - v.timbre_hz) / 250.0;
  e += 0.6 * std::exp(-0.5 * z * z);
  return e;
}

void RaisedCosineEdges(std::vector<double> *x, std::size_t ramp) {
  const std::size_t n = x->size();
  ramp = std::min(ramp, n / 2);
  for (std::size_t i = 0; i < ramp; ++i) {
    const double g = 0.5 - 0.5 * std::cos(M_PI * (i + 0.5) / ramp);
    (*x)[i] *= g;
    (*x)[n - 1 - i] *= g;
  }
}

void NormalizeRms(std::vector<double> *x, double target) {
  const double r = Rms(*x);
  if (r > 0.0)
    for (double &v : *x) v *= target / r;
}

std::vector<double> VoicedSegment(const TokenShape &t, const Voice &v,
                                  std::size_t n, int sr, Rng &rng) {
  std::vector<double> x(n, 0.0);
  const double slope = UniformIn(rng, -0.08, 0.08);
  const double nyquist_guard = std::min(7600.0, 0.47 * sr);
  for (int k = 1; k * v.f0 * 1.1 < nyquist_guard; ++k) {
    const double f = k * v.f0;
    const double amp = SpectralEnvelope(t, v, f) / std::pow(k, 0.7) *
                       std::pow(10.0, v.tilt_db_per_octave *
                                          std::log2(f / 500.0) / 20.0);
    double phase = UniformIn(rng, 0.0, 2.0 * M_PI);
    for (std::size_t i = 0; i < n; ++i) {
      const double fi = f * (1.0 + slope * (static_cast<double>(i) / n - 0.5));
      phase += 2.0 * M_PI * fi / sr;
      x[i] += amp * std::sin(phase);
    }
  }
  return x;
}

std::vector<double> BandNoise(double lo, double hi, std::size_t n, int sr,
                              Rng &rng) {
  hi = std::min(hi, 0.47 * sr);
  std::vector<double> x(n, 0.0);
  constexpr int kPartials = 80;
  for (int p = 0; p < kPartials; ++p) {
    const double f = UniformIn(rng, lo, hi);
    const double phase = UniformIn(rng, 0.0, 2.0 * M_PI);
    const double w = 2.0 * M_PI * f / sr;
    for (std::size_t i = 0; i < n; ++i) x[i] += std::sin(w * i + phase);
  }
  return x;
}

std::size_t Samples(double seconds, int sr) {
  return static_cast<std::size_t>(std::llround(seconds * sr));
}

}  // namespace

std::vector<std::string> SynthTokenNames(int vocabulary_size) {
  std::vector<std::string> names;
  for (int i = 0; i < vocabulary_size; ++i)
    names.push_back(std::string(1, static_cast<char>('a' + i)));
  return names;
}

std::vector<Utterance> SynthCorpus(const CorpusSpec &spec) {
  if (spec.vocabulary_size <= 0)
    Fail(ErrorKind::kConfig, "synth corpus: empty vocabulary");
  if (spec.vocabulary_size > kMaxVocabulary)
    Fail(ErrorKind::kConfig, "synth corpus: vocabulary larger than " +
                                 std::to_string(kMaxVocabulary));
  if (spec.num_speakers <= 0 || spec.utterances_per_speaker <= 0 ||
      spec.tokens_per_utterance <= 0)
    Fail(ErrorKind::kConfig, "synth corpus: counts must be positive");
  const int sr = spec.sample_rate_hz;

  // Speaker identities depend only on the seed and speaker index, so the
  // train and test splits generated with the same seed share speakers.
  Rng speaker_rng = MakeRng(spec.seed, "corpus/speakers");
  std::vector<Voice> voices;
  // Each voice attribute is spread over a grid and shuffled independently.
  auto grid = [&](double lo, double hi) {
    std::vector<double> g(spec.num_speakers);
    for (int s = 0; s < spec.num_speakers; ++s)
      g[s] = spec.num_speakers == 1 ? 0.5 * (lo + hi)
                                    : lo + (hi - lo) * s / (spec.num_speakers - 1);
    for (int s = spec.num_speakers - 1; s > 0; --s)
      std::swap(g[s], g[UniformIndex(speaker_rng, s + 1)]);
    return g;
  };
  const std::vector<double> scale_grid = grid(0.93, 1.08);
  const std::vector<double> tilt_grid = grid(-4.0, 4.0);
  const std::vector<double> timbre_grid = grid(2800.0, 4600.0);
  for (int s = 0; s < spec.num_speakers; ++s) {
    Voice v;
    const double pos = spec.num_speakers == 1
                           ? 0.5
                           : (s + UniformIn(speaker_rng, -0.3, 0.3)) /
                                 (spec.num_speakers - 1);
    v.f0 = 100.0 + 120.0 * std::clamp(pos, 0.0, 1.0);
    v.formant_scale = scale_grid[s];
    v.tilt_db_per_octave = tilt_grid[s];
    v.timbre_hz = timbre_grid[s];
    voices.push_back(v);
  }

  Rng rng = MakeRng(spec.seed, "corpus/" + spec.id_prefix);
  std::vector<Utterance> corpus;
  for (int s = 0; s < spec.num_speakers; ++s) {
    for (int u = 0; u < spec.utterances_per_speaker; ++u) {
      Utterance utt;
      char id[64];
      std::snprintf(id, sizeof(id), "%s-spk%02d-%03d", spec.id_prefix.c_str(), s, u);
      utt.id = id;
      std::snprintf(id, sizeof(id), "spk%02d", s);
      utt.speaker_id = id;
      utt.wave.sample_rate_hz = sr;

      Voice voice = voices[s];
      voice.f0 *= std::exp(0.03 * Gaussian(rng));
      voice.formant_scale *= 1.0 + 0.01 * Gaussian(rng);
      const double level = 0.1 * std::pow(10.0, UniformIn(rng, -2.0, 2.0) / 20.0);

      std::vector<double> &x = utt.wave.samples;
      x.assign(Samples(UniformIn(rng, 0.08, 0.15), sr), 0.0);
      for (int k = 0; k < spec.tokens_per_utterance; ++k) {
        const int token = 1 + static_cast<int>(UniformIndex(rng, spec.vocabulary_size));
        const TokenShape &shape = kTokenShapes[token - 1];
        const std::size_t len = Samples(UniformIn(rng, 0.14, 0.22), sr);
        std::vector<double> seg;
        if (shape.voiced) {
          seg = VoicedSegment(shape, voice, len, sr, rng);
          NormalizeRms(&seg, level * std::pow(10.0, UniformIn(rng, -1.5, 1.5) / 20.0));
        } else {
          seg = BandNoise(shape.band_lo * voice.formant_scale,
                          shape.band_hi * voice.formant_scale, len, sr, rng);
          NormalizeRms(&seg, 0.4 * level);
        }
        RaisedCosineEdges(&seg, Samples(0.015, sr));
        utt.segments.push_back({token, x.size(), x.size() + len});
        utt.transcript.push_back(token);
        x.insert(x.end(), seg.begin(), seg.end());
        const double gap = k + 1 < spec.tokens_per_utterance
                               ? UniformIn(rng, 0.03, 0.07)
                               : UniformIn(rng, 0.08, 0.15);
        x.insert(x.end(), Samples(gap, sr), 0.0);
      }
      for (double &v : x) v += 3e-4 * Gaussian(rng);
      corpus.push_back(std::move(utt));
    }
  }
  return corpus;
}

Waveform SynthNoise(NoiseKind kind, double seconds, std::uint64_t seed,
                    int sample_rate_hz) {
  const int sr = sample_rate_hz;
  const std::size_t n = std::max<std::size_t>(1, Samples(seconds, sr));
  Rng rng(SubSeed(seed, "noise"));
  Waveform w;
  w.sample_rate_hz = sr;
  std::vector<double> &x = w.samples;
  x.assign(n, 0.0);
  switch (kind) {
    case NoiseKind::kWhite:
      for (double &v : x) v = Gaussian(rng);
      break;
    case NoiseKind::kPink: {
      // Paul Kellet's economy pink filter.
      double b0 = 0, b1 = 0, b2 = 0;
      for (double &v : x) {
        const double white = Gaussian(rng);
        b0 = 0.99765 * b0 + white * 0.0990460;
        b1 = 0.96300 * b1 + white * 0.2965164;
        b2 = 0.57000 * b2 + white * 1.0526913;
        v = b0 + b1 + b2 + white * 0.1848;
      }
      break;
    }
    case NoiseKind::kBabble: {
      constexpr int kTalkers = 4;
      for (int t = 0; t < kTalkers; ++t) {
        Voice v{UniformIn(rng, 95.0, 240.0), UniformIn(rng, 0.88, 1.12), 0.0,
                UniformIn(rng, 2800.0, 4600.0)};
        std::size_t pos = Samples(UniformIn(rng, 0.0, 0.1), sr);
        while (pos < n) {
          const TokenShape &shape = kTokenShapes[UniformIndex(rng, kMaxVocabulary)];
          const std::size_t len = Samples(UniformIn(rng, 0.12, 0.25), sr);
          std::vector<double> seg =
              shape.voiced ? VoicedSegment(shape, v, len, sr, rng)
                           : BandNoise(shape.band_lo, shape.band_hi, len, sr, rng);
          NormalizeRms(&seg, 1.0);
          RaisedCosineEdges(&seg, Samples(0.015, sr));
          for (std::size_t i = 0; i < len && pos + i < n; ++i) x[pos + i] += seg[i];
          pos += len + Samples(UniformIn(rng, 0.0, 0.05), sr);
        }
      }
      break;
    }
    case NoiseKind::kMusic: {
      std::size_t pos = 0;
      while (pos < n) {
        const std::size_t len = Samples(UniformIn(rng, 0.25, 0.5), sr);
        const int notes = 2 + static_cast<int>(UniformIndex(rng, 3));
        for (int k = 0; k < notes; ++k) {
          const int semitone = static_cast<int>(UniformIndex(rng, 36));
          const double f0 = 130.81 * std::pow(2.0, semitone / 12.0);
          const double decay = UniformIn(rng, 3.0, 8.0);
          for (int h = 1; h <= 8 && h * f0 < 0.45 * sr; ++h) {
            const double amp = 1.0 / (h * h);
            const double phase = UniformIn(rng, 0.0, 2.0 * M_PI);
            const double w0 = 2.0 * M_PI * h * f0 / sr;
            const std::size_t stop = std::min(n, pos + 2 * len);
            for (std::size_t i = pos; i < stop; ++i) {
              const double t = static_cast<double>(i - pos) / sr;
              x[i] += amp * std::exp(-decay * t) * std::sin(w0 * (i - pos) + phase);
            }
          }
        }
        pos += len;
      }
      break;
    }
  }
  NormalizeRms(&x, 0.1);
  return w;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {
constexpr const char *kManifestHeader = "path\ttranscript\tspeaker_id";
}

std::vector<ManifestEntry> ReadManifest(const std::string &path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open manifest " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line == kManifestHeader)) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3)
      Fail(ErrorKind::kFormat, path + ":" + std::to_string(line_no) +
                                   ": expected 3 tab-separated columns");
    entries.push_back({fields[0], fields[1], fields[2]});
  }
  return entries;
}

void WriteManifest(const std::vector<ManifestEntry> &entries,
                   const std::string &path) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  for (const ManifestEntry &e : entries)
    os << e.path << '\t' << e.transcript << '\t' << e.speaker_id << '\n';
  WriteFileAtomic(path, os.str());
}

}  // namespace laud
