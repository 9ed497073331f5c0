// laud/audio.h

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

#ifndef LAUD_AUDIO_H_
#define LAUD_AUDIO_H_

#include <cstdint>
#include <string>
#include <vector>

#include "laud/common.h"

namespace laud {

constexpr int kCanonicalSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = kCanonicalSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

/// Reads PCM16 or IEEE float32 RIFF/WAVE; multi-channel input is averaged to
/// mono. PCM16 is scaled by 1/32768.
Waveform ReadWav(const std::string &path);

/// Writes mono PCM16. Amplitudes are clamped to [-1, 1]; a read-back differs
/// from the input by at most 1/32768 per sample.
void WriteWav(const Waveform &w, const std::string &path);

/// Same as WriteWav but into a byte buffer (the whole RIFF file).
std::vector<std::uint8_t> EncodeWav(const Waveform &w);
Waveform DecodeWav(const std::vector<std::uint8_t> &bytes);

/// Kaiser-windowed sinc resampling evaluated per polyphase branch. Output
/// length is round(len * target / source).
Waveform Resample(const Waveform &w, int target_hz);

double Rms(const std::vector<double> &x);

struct MixResult {
  Waveform mixed;
  double gain = 0.0;          // applied to the noise crop
  std::size_t offset = 0;     // crop start within the (tiled) noise
  std::vector<double> scaled_noise;
};

/// speech + g * noise_crop with g chosen so that the full-utterance SNR of the
/// two addends is exactly snr_db. Noise shorter than speech is tiled; the crop
/// offset is uniform.
MixResult MixAtSnr(const Waveform &speech, const Waveform &noise, double snr_db,
                   Rng &rng);

/// A segment of an utterance occupied by one token, in samples.
struct TokenSegment {
  int token = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Utterance {
  std::string id;
  std::string speaker_id;
  Waveform wave;
  std::vector<int> transcript;  // token ids in [1, |V|]
  std::vector<TokenSegment> segments;
};

/// Configuration of the synthetic "spoken symbol" corpus.
struct CorpusSpec {
  int num_speakers = 4;
  int utterances_per_speaker = 10;
  int tokens_per_utterance = 4;
  int vocabulary_size = 6;
  std::uint64_t seed = 0;
  int sample_rate_hz = kCanonicalSampleRate;
  /// Used to keep utterance ids distinct between train and test splits.
  std::string id_prefix = "utt";
};

/// Token names "a", "b", ... for a vocabulary of the given size.
std::vector<std::string> SynthTokenNames(int vocabulary_size);

/// Deterministic synthetic corpus. Every token is a distinct harmonic formant
/// pattern (or a noise band); every speaker has its own fundamental frequency,
/// formant scale and spectral tilt. Identical specs give bit-identical output.
std::vector<Utterance> SynthCorpus(const CorpusSpec &spec);

enum class NoiseKind { kWhite, kPink, kBabble, kMusic };

Waveform SynthNoise(NoiseKind kind, double seconds, std::uint64_t seed,
                    int sample_rate_hz = kCanonicalSampleRate);

/// One row of a corpus manifest (TSV: path, transcript, speaker_id).
struct ManifestEntry {
  std::string path;
  std::string transcript;  // space separated token names
  std::string speaker_id;
};

std::vector<ManifestEntry> ReadManifest(const std::string &path);
void WriteManifest(const std::vector<ManifestEntry> &entries,
                   const std::string &path);

}  // namespace laud

#endif  // LAUD_AUDIO_H_
