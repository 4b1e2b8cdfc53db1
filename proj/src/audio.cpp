/// @file
/// @brief RIFF/WAVE decoding, resampling and FFT cross-correlation.

#include "pianofinger/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>

#include "pianofinger/error.hpp"

namespace pianofinger {
namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

[[noreturn]] void wav_fail(std::size_t offset, const std::string& what) {
  throw Error(ErrorKind::parse, "wav: " + what + " at byte " + std::to_string(offset));
}

struct WavFormat {
  std::uint16_t codec = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

}  // namespace

AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    wav_fail(0, "missing RIFF/WAVE header");
  }
  std::optional<WavFormat> fmt;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;

    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > available) wav_fail(pos, "bad fmt chunk size " + std::to_string(size));
      const std::uint8_t* f = bytes.data() + body;
      WavFormat wf{le16(f), le16(f + 2), le32(f + 4), le16(f + 12), le16(f + 14)};
      if (wf.codec == kFormatExtensible) {
        if (size < 40) wav_fail(pos, "extensible fmt chunk too short");
        wf.codec = le16(f + 24);  // first two bytes of the subformat GUID
      }
      if (wf.codec != kFormatPcm && wf.codec != kFormatFloat) {
        char tag[8];
        std::snprintf(tag, sizeof tag, "0x%04X", wf.codec);
        throw Error(ErrorKind::unsupported_codec, std::string("wav: unsupported codec ") + tag);
      }
      if ((wf.codec == kFormatPcm && wf.bits != 16) || (wf.codec == kFormatFloat && wf.bits != 32)) {
        throw Error(ErrorKind::unsupported_codec,
                    "wav: unsupported sample width " + std::to_string(wf.bits) + " bits for codec");
      }
      if (wf.channels == 0 || wf.sample_rate == 0) wav_fail(body, "zero channels or sample rate");
      if (wf.block_align != wf.channels * (wf.bits / 8)) wav_fail(body + 12, "inconsistent block align");
      fmt = wf;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!fmt) wav_fail(pos, "data chunk before fmt chunk");
      if (size > available) wav_fail(pos, "truncated data chunk (declares " + std::to_string(size) +
                                              " bytes, " + std::to_string(available) + " present)");
      if (size % fmt->block_align != 0) wav_fail(pos, "data chunk ends mid-frame");

      AudioBuffer out;
      out.sample_rate = fmt->sample_rate;
      const std::size_t frames = size / fmt->block_align;
      out.samples.resize(frames);
      const std::uint8_t* p = bytes.data() + body;
      const double inv_channels = 1.0 / fmt->channels;
      for (std::size_t i = 0; i < frames; ++i) {
        double sum = 0.0;
        for (std::uint16_t c = 0; c < fmt->channels; ++c) {
          if (fmt->codec == kFormatPcm) {
            sum += static_cast<std::int16_t>(le16(p)) / 32768.0;
            p += 2;
          } else {
            const float v = std::bit_cast<float>(le32(p));
            sum += std::isfinite(v) ? std::clamp(static_cast<double>(v), -1.0, 1.0) : 0.0;
            p += 4;
          }
        }
        out.samples[i] = sum * inv_channels;
      }
      return out;
    }
    if (size > available) wav_fail(pos, "chunk length exceeds file");
    pos = body + size + (size & 1u);
  }
  wav_fail(pos, fmt ? "missing data chunk" : "missing fmt chunk");
}

AudioBuffer read_wav_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open WAV file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding encoding) {
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t codec = encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_size = static_cast<std::uint32_t>(audio.samples.size() * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  auto put16 = [&](std::uint16_t v) { out.insert(out.end(), {std::uint8_t(v), std::uint8_t(v >> 8)}); };
  auto put32 = [&](std::uint32_t v) {
    out.insert(out.end(), {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16), std::uint8_t(v >> 24)});
  };
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };

  tag("RIFF");
  put32(36 + data_size);
  tag("WAVE");
  tag("fmt ");
  put32(16);
  put16(codec);
  put16(1);
  put32(audio.sample_rate);
  put32(audio.sample_rate * (bits / 8));
  put16(bits / 8);
  put16(bits);
  tag("data");
  put32(data_size);
  for (double x : audio.samples) {
    if (encoding == WavEncoding::pcm16) {
      const auto v = static_cast<std::int16_t>(std::clamp(std::lround(x * 32768.0), -32768L, 32767L));
      put16(static_cast<std::uint16_t>(v));
    } else {
      put32(std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
  }
  return out;
}

void write_wav_file(const AudioBuffer& audio, const std::string& path, WavEncoding encoding) {
  const auto bytes = encode_wav(audio, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "cannot write WAV file: " + path);
}

AudioBuffer resample_linear(const AudioBuffer& audio, std::uint32_t target_rate) {
  if (target_rate == 0) throw Error(ErrorKind::validation, "resample: target rate must be positive");
  if (audio.sample_rate == target_rate || audio.samples.empty()) {
    AudioBuffer copy = audio;
    copy.sample_rate = target_rate;
    return copy;
  }
  const double step = static_cast<double>(audio.sample_rate) / target_rate;
  const std::size_t last = audio.samples.size() - 1;
  const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(last) / step)) + 1;
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = static_cast<double>(i) * step;
    const auto i0 = std::min(static_cast<std::size_t>(x), last);
    const std::size_t i1 = std::min(i0 + 1, last);
    const double t = x - static_cast<double>(i0);
    out.samples[i] = audio.samples[i0] + t * (audio.samples[i1] - audio.samples[i0]);
  }
  return out;
}

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Smallest 2^a 3^b 5^c >= n.
std::size_t fft_size(std::size_t n) {
  std::size_t best = std::bit_ceil(n);
  for (std::size_t p5 = 1; p5 < best; p5 *= 5) {
    for (std::size_t p35 = p5; p35 < best; p35 *= 3) {
      std::size_t v = p35;
      while (v < n) v *= 2;
      best = std::min(best, v);
    }
  }
  return best;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwArray = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwArray<T> fftw_array(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (!p) throw std::bad_alloc();
  return FftwArray<T>(p);
}

class RealPlan {
 public:
  explicit RealPlan(fftw_plan plan) : plan_(plan) {}
  RealPlan(const RealPlan&) = delete;
  RealPlan& operator=(const RealPlan&) = delete;
  ~RealPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double dot_at_lag(std::span<const double> reference, std::span<const double> other, std::int64_t lag) {
  // sum_n reference[n] * other[n + lag]
  const auto nr = static_cast<std::int64_t>(reference.size());
  const auto no = static_cast<std::int64_t>(other.size());
  const std::int64_t n0 = std::max<std::int64_t>(0, -lag);
  const std::int64_t n1 = std::min(nr, no - lag);
  double sum = 0.0;
  for (std::int64_t n = n0; n < n1; ++n) sum += reference[n] * other[n + lag];
  return sum;
}

}  // namespace

std::vector<double> cross_correlation(std::span<const double> reference, std::span<const double> other) {
  if (reference.empty() || other.empty()) return {};
  const std::size_t nr = reference.size();
  const std::size_t no = other.size();
  const std::size_t n = fft_size(nr + no - 1);
  const std::size_t bins = n / 2 + 1;

  auto ref_in = fftw_array<double>(n);
  auto oth_in = fftw_array<double>(n);
  auto ref_spec = fftw_array<fftw_complex>(bins);
  auto oth_spec = fftw_array<fftw_complex>(bins);

  std::unique_ptr<RealPlan> fwd_ref, fwd_oth, inv;
  {
    std::lock_guard lock(planner_mutex());
    fwd_ref = std::make_unique<RealPlan>(
        fftw_plan_dft_r2c_1d(static_cast<int>(n), ref_in.get(), ref_spec.get(), FFTW_ESTIMATE));
    fwd_oth = std::make_unique<RealPlan>(
        fftw_plan_dft_r2c_1d(static_cast<int>(n), oth_in.get(), oth_spec.get(), FFTW_ESTIMATE));
    inv = std::make_unique<RealPlan>(
        fftw_plan_dft_c2r_1d(static_cast<int>(n), oth_spec.get(), ref_in.get(), FFTW_ESTIMATE));
  }

  std::fill_n(ref_in.get(), n, 0.0);
  std::fill_n(oth_in.get(), n, 0.0);
  std::copy(reference.begin(), reference.end(), ref_in.get());
  std::copy(other.begin(), other.end(), oth_in.get());
  fwd_ref->execute();
  fwd_oth->execute();

  // conj(R) * O, stored in oth_spec; the inverse lands in ref_in.
  for (std::size_t k = 0; k < bins; ++k) {
    const double a = ref_spec[k][0], b = -ref_spec[k][1];
    const double c = oth_spec[k][0], d = oth_spec[k][1];
    oth_spec[k][0] = a * c - b * d;
    oth_spec[k][1] = a * d + b * c;
  }
  inv->execute();

  std::vector<double> out(nr + no - 1);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto lag = static_cast<std::int64_t>(j) - static_cast<std::int64_t>(nr - 1);
    const std::size_t idx = lag >= 0 ? static_cast<std::size_t>(lag) : n - static_cast<std::size_t>(-lag);
    out[j] = ref_in[idx] * scale;
  }
  return out;
}

SyncResult cross_correlate_offset(const AudioBuffer& reference, const AudioBuffer& other_in) {
  const AudioBuffer other = other_in.sample_rate == reference.sample_rate
                                ? other_in
                                : resample_linear(other_in, reference.sample_rate);
  const double e_ref = energy(reference.samples);
  const double e_oth = energy(other.samples);
  if (!(e_ref > 0.0)) throw Error(ErrorKind::degenerate_signal, "sync: reference audio is silent");
  if (!(e_oth > 0.0)) throw Error(ErrorKind::degenerate_signal, "sync: other audio is silent");
  const double norm = std::sqrt(e_ref * e_oth);

  const auto corr = cross_correlation(reference.samples, other.samples);
  const auto zero = static_cast<std::int64_t>(reference.samples.size()) - 1;
  const double fft_max = *std::max_element(corr.begin(), corr.end());

  // FFT round-off is ~1e-13 of the norm; everything within the band is rescored exactly.
  const double band = 1e-9 * norm;
  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < corr.size(); ++j) {
    if (corr[j] >= fft_max - band) candidates.push_back(j);
  }
  if (candidates.size() > 64) {
    std::partial_sort(candidates.begin(), candidates.begin() + 64, candidates.end(),
                      [&](std::size_t a, std::size_t b) { return corr[a] > corr[b]; });
    candidates.resize(64);
  }

  std::int64_t best_lag = 0;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_j = 0;
  for (std::size_t j : candidates) {
    const std::int64_t lag = static_cast<std::int64_t>(j) - zero;
    const double v = dot_at_lag(reference.samples, other.samples, lag);
    const bool better = v > best || (v == best && (std::llabs(lag) < std::llabs(best_lag) ||
                                                   (std::llabs(lag) == std::llabs(best_lag) && lag < best_lag)));
    if (better) {
      best = v;
      best_lag = lag;
      best_j = j;
    }
  }

  double second = 0.0;
  for (std::size_t j = 0; j < corr.size(); ++j) {
    if (j == best_j) continue;
    const double left = j > 0 ? corr[j - 1] : -std::numeric_limits<double>::infinity();
    const double right = j + 1 < corr.size() ? corr[j + 1] : -std::numeric_limits<double>::infinity();
    if (corr[j] > left && corr[j] >= right && corr[j] > second) second = corr[j];
  }

  SyncResult r;
  r.lag_samples = best_lag;
  r.sample_rate = reference.sample_rate;
  r.lag_s = static_cast<double>(best_lag) / reference.sample_rate;
  r.peak_correlation = std::clamp(best / norm, -1.0, 1.0);
  r.confidence = (best > 0.0 && second > 0.0) ? std::max(1.0, best / second) : 1.0;
  return r;
}

MidiPerformance apply_offset_to_midi(const MidiPerformance& perf, double offset_s) {
  if (offset_s == 0.0) return perf;
  MidiPerformance out;
  out.ppq = perf.ppq;
  out.tempo_map = perf.tempo_map;
  out.duration_s = std::max(0.0, perf.duration_s + offset_s);
  for (const auto& n : perf.notes) {
    NoteEvent shifted = n;
    shifted.onset_s = n.onset_s + offset_s;
    shifted.offset_s = n.offset_s + offset_s;
    if (shifted.offset_s <= 0.0) continue;
    shifted.onset_s = std::max(0.0, shifted.onset_s);
    out.notes.push_back(shifted);
  }
  // Clipping can collapse onsets to 0, so restore (onset, pitch) order before re-indexing.
  std::stable_sort(out.notes.begin(), out.notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return a.onset_s < b.onset_s || (a.onset_s == b.onset_s && a.pitch < b.pitch);
  });
  for (std::size_t i = 0; i < out.notes.size(); ++i) out.notes[i].index = i;
  return out;
}

}  // namespace pianofinger
