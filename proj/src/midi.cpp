/// @file
/// @brief SMF format 0/1 reader and format 0 writer.

#include "pianofinger/midi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <tuple>
#include <utility>

#include "pianofinger/error.hpp"

namespace pianofinger {
namespace {

[[noreturn]] void fail_at(std::size_t offset, const std::string& what) {
  throw Error(ErrorKind::parse, "midi: " + what + " at byte " + std::to_string(offset));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint8_t peek() {
    need(1);
    return bytes_[pos_];
  }

  std::uint16_t u16() {
    need(2);
    auto v = static_cast<std::uint16_t>((bytes_[pos_] << 8) | bytes_[pos_ + 1]);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }

  // Variable-length quantity, at most four bytes.
  std::uint32_t vlq() {
    const std::size_t start = pos_;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if ((b & 0x80) == 0) return v;
    }
    fail_at(start, "variable-length quantity longer than 4 bytes");
  }

  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail_at(pos_, "unexpected end of data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct RawNote {
  std::uint64_t on_tick = 0;
  std::uint64_t off_tick = 0;
  int pitch = 0;
  int velocity = 0;
  int channel = 0;
};

struct RawTempo {
  std::uint64_t tick = 0;
  std::uint32_t us_per_quarter = 0;
  std::size_t order = 0;
};

// Parses one MTrk body; returns the tick of the track's last event.
std::uint64_t parse_track(ByteReader& rd, std::size_t end, std::vector<RawNote>& notes,
                          std::vector<RawTempo>& tempos) {
  std::map<std::pair<int, int>, std::size_t> open;  // (channel, pitch) -> notes index
  std::uint64_t tick = 0;
  std::uint8_t running = 0;

  auto close_all = [&](std::uint64_t at) {
    for (auto& [key, idx] : open) notes[idx].off_tick = at;
    open.clear();
  };

  while (rd.pos() < end) {
    tick += rd.vlq();
    const std::size_t event_pos = rd.pos();
    std::uint8_t status = rd.peek();
    if (status & 0x80) {
      rd.u8();
    } else {
      if (running == 0) fail_at(event_pos, "data byte without running status");
      status = running;
    }

    if (status == 0xFF) {
      running = 0;
      const std::uint8_t type = rd.u8();
      const std::uint32_t len = rd.vlq();
      const std::size_t data_pos = rd.pos();
      auto data = rd.take(len);
      if (type == 0x51) {
        if (len != 3) fail_at(data_pos, "tempo meta event with length " + std::to_string(len));
        const std::uint32_t us = (std::uint32_t{data[0]} << 16) | (std::uint32_t{data[1]} << 8) | data[2];
        if (us == 0) fail_at(data_pos, "zero tempo");
        tempos.push_back({tick, us, tempos.size()});
      } else if (type == 0x2F) {
        if (rd.pos() > end) fail_at(event_pos, "event overruns track chunk");
        close_all(tick);
        rd.skip(end - rd.pos());
        return tick;
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      running = 0;
      rd.skip(rd.vlq());
      continue;
    }
    if (status >= 0xF0) fail_at(event_pos, "unexpected system message in file");

    running = status;
    const int kind = status & 0xF0;
    const int channel = status & 0x0F;
    const bool two_bytes = kind != 0xC0 && kind != 0xD0;
    const std::size_t data_pos = rd.pos();
    const std::uint8_t d1 = rd.u8();
    const std::uint8_t d2 = two_bytes ? rd.u8() : 0;
    if ((d1 | d2) & 0x80) fail_at(data_pos, "data byte with high bit set");

    const bool note_on = kind == 0x90 && d2 > 0;
    const bool note_off = kind == 0x80 || (kind == 0x90 && d2 == 0);
    const auto key = std::make_pair(channel, static_cast<int>(d1));
    if (note_on || note_off) {
      // Last-on/first-off: a re-strike closes the sounding note first.
      if (auto it = open.find(key); it != open.end()) {
        notes[it->second].off_tick = tick;
        open.erase(it);
      }
      if (note_on) {
        open.emplace(key, notes.size());
        notes.push_back({tick, tick, d1, d2, channel});
      }
    }
  }
  if (rd.pos() != end) fail_at(rd.pos(), "event overruns track chunk");
  close_all(tick);
  return tick;
}

}  // namespace

double ticks_to_seconds(std::uint64_t tick, std::uint16_t ppq, std::span<const TempoChange> tempo_map) {
  double seconds = 0.0;
  std::uint64_t seg_tick = 0;
  std::uint32_t us = 500000;
  for (const auto& change : tempo_map) {
    if (change.tick >= tick) break;
    seconds += static_cast<double>(change.tick - seg_tick) * us / (1e6 * ppq);
    seg_tick = change.tick;
    us = change.us_per_quarter;
  }
  return seconds + static_cast<double>(tick - seg_tick) * us / (1e6 * ppq);
}

std::uint64_t seconds_to_ticks(double seconds, std::uint16_t ppq, std::span<const TempoChange> tempo_map) {
  if (seconds <= 0.0) return 0;
  std::uint64_t seg_tick = 0;
  double seg_s = 0.0;
  std::uint32_t us = 500000;
  for (const auto& change : tempo_map) {
    const double change_s = seg_s + static_cast<double>(change.tick - seg_tick) * us / (1e6 * ppq);
    if (change_s > seconds) break;
    seg_tick = change.tick;
    seg_s = change_s;
    us = change.us_per_quarter;
  }
  const double ticks = (seconds - seg_s) * 1e6 * ppq / us;
  return seg_tick + static_cast<std::uint64_t>(std::llround(ticks));
}

MidiPerformance parse_midi(std::span<const std::uint8_t> bytes) {
  ByteReader rd(bytes);
  if (rd.remaining() < 14 || rd.u32() != 0x4D546864) fail_at(0, "missing MThd header");
  const std::uint32_t header_len = rd.u32();
  if (header_len < 6) fail_at(4, "MThd length " + std::to_string(header_len) + " < 6");
  const std::uint16_t format = rd.u16();
  const std::uint16_t ntracks = rd.u16();
  const std::uint16_t division = rd.u16();
  rd.skip(header_len - 6);
  if (format == 2) throw Error(ErrorKind::unsupported_format, "midi: format 2 files are not supported");
  if (format > 2) fail_at(8, "unknown format " + std::to_string(format));
  if (division & 0x8000) throw Error(ErrorKind::unsupported_format, "midi: SMPTE division is not supported");
  if (division == 0) fail_at(12, "zero ticks per quarter note");

  std::vector<RawNote> raw_notes;
  std::vector<RawTempo> raw_tempos;
  std::uint64_t last_tick = 0;
  int tracks_seen = 0;
  while (!rd.at_end() && tracks_seen < ntracks) {
    const std::size_t chunk_pos = rd.pos();
    if (rd.remaining() < 8) fail_at(chunk_pos, "truncated chunk header");
    const std::uint32_t id = rd.u32();
    const std::uint32_t len = rd.u32();
    if (len > rd.remaining()) fail_at(chunk_pos + 4, "chunk length " + std::to_string(len) + " exceeds file");
    if (id != 0x4D54726B) {  // not MTrk: skip unknown chunk
      rd.skip(len);
      continue;
    }
    last_tick = std::max(last_tick, parse_track(rd, rd.pos() + len, raw_notes, raw_tempos));
    ++tracks_seen;
  }
  if (tracks_seen < ntracks) fail_at(rd.pos(), "header declares " + std::to_string(ntracks) + " tracks, found " +
                                                   std::to_string(tracks_seen));

  MidiPerformance perf;
  perf.ppq = division;
  std::stable_sort(raw_tempos.begin(), raw_tempos.end(),
                   [](const RawTempo& a, const RawTempo& b) { return a.tick < b.tick; });
  perf.tempo_map.clear();
  for (const auto& t : raw_tempos) {
    if (t.tick > 0xFFFFFFFFu) fail_at(rd.pos(), "tempo event tick overflow");
    if (!perf.tempo_map.empty() && perf.tempo_map.back().tick == t.tick) {
      perf.tempo_map.back().us_per_quarter = t.us_per_quarter;
    } else {
      perf.tempo_map.push_back({static_cast<std::uint32_t>(t.tick), t.us_per_quarter});
    }
  }
  if (perf.tempo_map.empty() || perf.tempo_map.front().tick != 0) {
    perf.tempo_map.insert(perf.tempo_map.begin(), TempoChange{});
  }

  std::stable_sort(raw_notes.begin(), raw_notes.end(), [](const RawNote& a, const RawNote& b) {
    return std::tie(a.on_tick, a.pitch, a.channel, a.off_tick) < std::tie(b.on_tick, b.pitch, b.channel, b.off_tick);
  });
  perf.notes.reserve(raw_notes.size());
  double max_offset = 0.0;
  for (const auto& rn : raw_notes) {
    NoteEvent n;
    n.index = perf.notes.size();
    n.pitch = rn.pitch;
    n.velocity = rn.velocity;
    n.channel = rn.channel;
    n.onset_s = ticks_to_seconds(rn.on_tick, perf.ppq, perf.tempo_map);
    n.offset_s = ticks_to_seconds(rn.off_tick, perf.ppq, perf.tempo_map);
    max_offset = std::max(max_offset, n.offset_s);
    perf.notes.push_back(n);
  }
  perf.duration_s = std::max(ticks_to_seconds(last_tick, perf.ppq, perf.tempo_map), max_offset);
  return perf;
}

MidiPerformance read_midi_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open MIDI file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_midi(bytes);
}

namespace {

void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = v & 0x7F;
  while ((v >>= 7) != 0) buf[n++] = static_cast<std::uint8_t>(0x80 | (v & 0x7F));
  while (n > 0) out.push_back(buf[--n]);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

std::vector<std::uint8_t> write_midi(const MidiPerformance& perf) {
  struct Ev {
    std::uint64_t tick;
    int rank;  // ordering within a tick: tempo, releases, strikes, zero-length releases
    std::size_t seq;
    std::vector<std::uint8_t> data;
  };
  std::vector<Ev> events;
  for (const auto& t : perf.tempo_map) {
    events.push_back({t.tick, 0, events.size(),
                      {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(t.us_per_quarter >> 16),
                       static_cast<std::uint8_t>(t.us_per_quarter >> 8), static_cast<std::uint8_t>(t.us_per_quarter)}});
  }
  std::uint64_t last = 0;
  for (const auto& n : perf.notes) {
    const auto on = seconds_to_ticks(n.onset_s, perf.ppq, perf.tempo_map);
    const auto off = seconds_to_ticks(n.offset_s, perf.ppq, perf.tempo_map);
    const auto ch = static_cast<std::uint8_t>(n.channel & 0x0F);
    const auto pitch = static_cast<std::uint8_t>(n.pitch & 0x7F);
    const auto vel = static_cast<std::uint8_t>(std::clamp(n.velocity, 1, 127));
    events.push_back({on, 2, events.size(), {static_cast<std::uint8_t>(0x90 | ch), pitch, vel}});
    events.push_back({off, off == on ? 3 : 1, events.size(), {static_cast<std::uint8_t>(0x80 | ch), pitch, 0}});
    last = std::max(last, off);
  }
  std::stable_sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) {
    return std::tie(a.tick, a.rank, a.seq) < std::tie(b.tick, b.rank, b.seq);
  });

  std::vector<std::uint8_t> track;
  std::uint64_t tick = 0;
  for (const auto& ev : events) {
    put_vlq(track, static_cast<std::uint32_t>(ev.tick - tick));
    tick = ev.tick;
    track.insert(track.end(), ev.data.begin(), ev.data.end());
  }
  const auto end_tick = std::max(last, seconds_to_ticks(perf.duration_s, perf.ppq, perf.tempo_map));
  put_vlq(track, static_cast<std::uint32_t>(end_tick - tick));
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  put_u32(out, 6);
  out.insert(out.end(), {0, 0, 0, 1, static_cast<std::uint8_t>(perf.ppq >> 8), static_cast<std::uint8_t>(perf.ppq)});
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_u32(out, static_cast<std::uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

void write_midi_file(const MidiPerformance& perf, const std::string& path) {
  const auto bytes = write_midi(perf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "cannot write MIDI file: " + path);
}

namespace {

// Smallest f >= 0 with f / fps >= t.
std::int64_t first_frame_not_before(double t, double fps) {
  if (t <= 0.0) return 0;
  auto f = static_cast<std::int64_t>(std::ceil(t * fps));
  while (f > 0 && static_cast<double>(f - 1) / fps >= t) --f;
  while (static_cast<double>(f) / fps < t) ++f;
  return f;
}

}  // namespace

FrameInterval note_frame_interval(const NoteEvent& note, double fps, double video_offset_s) {
  const std::int64_t first = first_frame_not_before(note.onset_s + video_offset_s, fps);
  const std::int64_t end = first_frame_not_before(note.offset_s + video_offset_s, fps);
  return FrameInterval{first, std::max<std::int64_t>(0, end - first), fps};
}

}  // namespace pianofinger
