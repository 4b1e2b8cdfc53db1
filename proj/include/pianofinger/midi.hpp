/// @file
/// @brief Standard MIDI File (format 0/1) reader/writer and note-to-frame mapping.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pianofinger {

inline constexpr int kLowestPianoPitch = 21;   // A0
inline constexpr int kHighestPianoPitch = 108; // C8

struct NoteEvent {
  std::size_t index = 0;
  int pitch = 60;
  int velocity = 64;
  double onset_s = 0.0;
  double offset_s = 0.0;
  int channel = 0;

  /// True when a piano key region exists for this pitch.
  bool mappable() const { return pitch >= kLowestPianoPitch && pitch <= kHighestPianoPitch; }

  bool operator==(const NoteEvent&) const = default;
};

struct TempoChange {
  std::uint32_t tick = 0;
  std::uint32_t us_per_quarter = 500000;

  bool operator==(const TempoChange&) const = default;
};

struct MidiPerformance {
  std::vector<NoteEvent> notes;
  std::uint16_t ppq = 480;
  std::vector<TempoChange> tempo_map{TempoChange{}};
  double duration_s = 0.0;
};

/// Frames [first_frame, first_frame + frame_count) at `fps`.
struct FrameInterval {
  std::int64_t first_frame = 0;
  std::int64_t frame_count = 0;
  double fps = 30.0;

  std::int64_t end_frame() const { return first_frame + frame_count; }
  bool empty() const { return frame_count == 0; }

  bool operator==(const FrameInterval&) const = default;
};

/// Parses an SMF byte stream. Throws Error{parse} with a byte offset on malformed
/// input and Error{unsupported_format} for format 2 or SMPTE division.
MidiPerformance parse_midi(std::span<const std::uint8_t> bytes);

MidiPerformance read_midi_file(const std::string& path);

/// Converts an absolute tick to seconds by integrating the tempo map.
double ticks_to_seconds(std::uint64_t tick, std::uint16_t ppq, std::span<const TempoChange> tempo_map);

/// Inverse of ticks_to_seconds, rounded to the nearest tick.
std::uint64_t seconds_to_ticks(double seconds, std::uint16_t ppq, std::span<const TempoChange> tempo_map);

/// Serializes a performance as a format-0 SMF with one track. Note times are
/// quantized to the performance's ppq/tempo grid.
std::vector<std::uint8_t> write_midi(const MidiPerformance& perf);

void write_midi_file(const MidiPerformance& perf, const std::string& path);

/// All frames f with onset + offset <= f/fps < offset_s + offset, clipped to f >= 0.
FrameInterval note_frame_interval(const NoteEvent& note, double fps, double video_offset_s);

}  // namespace pianofinger
