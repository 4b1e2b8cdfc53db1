/// @file
/// @brief WAV decoding and cross-correlation based stream alignment.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pianofinger/midi.hpp"

namespace pianofinger {

/// Mono samples in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  std::uint32_t sample_rate = 44100;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct SyncResult {
  std::int64_t lag_samples = 0;
  double lag_s = 0.0;
  double peak_correlation = 0.0;
  double confidence = 1.0;
  std::uint32_t sample_rate = 0;  // rate the lag is expressed in (the reference's)
};

/// Decodes 16-bit PCM or 32-bit IEEE float RIFF/WAVE data, downmixing by channel mean.
AudioBuffer decode_wav(std::span<const std::uint8_t> bytes);

AudioBuffer read_wav_file(const std::string& path);

enum class WavEncoding { pcm16, float32 };

/// Mono WAV writer; used for fixtures and exported stems.
std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding encoding = WavEncoding::pcm16);

void write_wav_file(const AudioBuffer& audio, const std::string& path, WavEncoding encoding = WavEncoding::pcm16);

/// Linear-interpolation resampling.
AudioBuffer resample_linear(const AudioBuffer& audio, std::uint32_t target_rate);

/// Full cross-correlation c[k] = sum_n reference[n] * other[n + k] for
/// k in [-(reference.size() - 1), other.size() - 1], computed by FFT.
/// Element j of the result corresponds to lag j - (reference.size() - 1).
std::vector<double> cross_correlation(std::span<const double> reference, std::span<const double> other);

/// Lag maximizing the full cross-correlation; positive when `other` starts later.
/// `other` is resampled to the reference rate first. Throws Error{degenerate_signal}
/// when either buffer is silent.
SyncResult cross_correlate_offset(const AudioBuffer& reference, const AudioBuffer& other);

/// Shifts every note by offset_s, dropping notes that end at or before 0 and
/// clipping notes that straddle 0.
MidiPerformance apply_offset_to_midi(const MidiPerformance& perf, double offset_s);

}  // namespace pianofinger
