#include "pianofinger/fingering.hpp"

#include <algorithm>
#include <thread>

#include "pianofinger/error.hpp"

namespace pianofinger {

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::single: return "single";
    case OutcomeKind::multiple: return "multiple";
    case OutcomeKind::none: return "none";
  }
  return "none";
}

OutcomeKind outcome_kind_from_string(std::string_view text) {
  if (text == "single") return OutcomeKind::single;
  if (text == "multiple") return OutcomeKind::multiple;
  if (text == "none") return OutcomeKind::none;
  throw Error(ErrorKind::validation, "unknown outcome kind '" + std::string(text) + "'");
}

std::string_view to_string(AnnotationStatus status) {
  switch (status) {
    case AnnotationStatus::automatic: return "auto";
    case AnnotationStatus::needs_review: return "needs_review";
    case AnnotationStatus::verified: return "verified";
    case AnnotationStatus::corrected: return "corrected";
  }
  return "needs_review";
}

AnnotationStatus annotation_status_from_string(std::string_view text) {
  if (text == "auto") return AnnotationStatus::automatic;
  if (text == "needs_review") return AnnotationStatus::needs_review;
  if (text == "verified") return AnnotationStatus::verified;
  if (text == "corrected") return AnnotationStatus::corrected;
  throw Error(ErrorKind::validation, "unknown annotation status '" + std::string(text) + "'");
}

Finger Finger::parse(std::string_view label) {
  if (label.size() == 2 && (label[0] == 'L' || label[0] == 'R') && label[1] >= '1' && label[1] <= '5') {
    return Finger((label[0] == 'L' ? 0 : 5) + (label[1] - '1'));
  }
  throw Error(ErrorKind::validation, "invalid finger label '" + std::string(label) + "' (expected L1-L5 or R1-R5)");
}

std::string Finger::label() const {
  return std::string(1, index_ < 5 ? 'L' : 'R') + static_cast<char>('1' + index_ % 5);
}

ScoreVector score_note(const NoteEvent& note, const FrameInterval& interval, const KeyboardLayout& layout,
                       const SkeletonTrack& track) {
  ScoreVector s{};
  const KeyRegion& region = key_region(layout, note.pitch);
  const double w = region.width_px;
  for (std::int64_t f = interval.first_frame; f < interval.end_frame(); ++f) {
    for (const auto& tip : fingertips_at(track, f)) {
      const double d = point_region_distance(tip.position, region);
      if (d == 0.0) {
        s[tip.finger_index] += 1.0;
      } else if (d < w) {
        const double credit = 1.0 - d / w;
        s[tip.finger_index] += credit * credit;
      }
    }
  }
  return s;
}

CandidateOutcome classify_candidates(const ScoreVector& score, std::int64_t interval_len, const Thresholds& thresholds) {
  CandidateOutcome out;
  out.score = score;
  out.interval_len = interval_len;
  const double len = static_cast<double>(interval_len);

  std::vector<int> above_candidate;
  std::vector<int> above_dominant;
  for (int i = 0; i < kFingerCount; ++i) {
    if (score[i] > thresholds.candidate * len) above_candidate.push_back(i);
    if (score[i] > thresholds.dominant * len) above_dominant.push_back(i);
  }
  if (above_candidate.empty()) {
    out.kind = OutcomeKind::none;
  } else if (above_candidate.size() == 1) {
    out.kind = OutcomeKind::single;
    out.fingers = above_candidate;
  } else if (above_dominant.size() == 1) {
    out.kind = OutcomeKind::single;
    out.fingers = above_dominant;
  } else {
    out.kind = OutcomeKind::multiple;
    out.fingers = above_candidate;
  }
  return out;
}

namespace {

NoteAnnotation annotate(const NoteEvent& note, const KeyboardLayout& layout, const SkeletonTrack& track, double fps,
                        double video_offset_s, const Thresholds& thresholds) {
  NoteAnnotation a;
  a.note_index = note.index;
  const FrameInterval interval = note_frame_interval(note, fps, video_offset_s);
  if (!note.mappable()) {
    a.outcome.interval_len = interval.frame_count;
  } else {
    a.outcome = classify_candidates(score_note(note, interval, layout, track), interval.frame_count, thresholds);
  }
  if (a.outcome.kind == OutcomeKind::single) {
    a.status = AnnotationStatus::automatic;
    a.label = Finger(a.outcome.fingers.front());
  } else {
    a.status = AnnotationStatus::needs_review;
  }
  return a;
}

}  // namespace

std::vector<NoteAnnotation> prelabel_performance(const MidiPerformance& perf, const KeyboardLayout& layout,
                                                 const SkeletonTrack& track, double fps, double video_offset_s,
                                                 const Thresholds& thresholds) {
  if (!(fps > 0.0)) throw Error(ErrorKind::validation, "prelabel: fps must be positive");
  std::vector<NoteAnnotation> out(perf.notes.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = annotate(perf.notes[i], layout, track, fps, video_offset_s, thresholds);
      out[i].note_index = i;
    }
  };

  const std::size_t n = perf.notes.size();
  const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n / 256 + 1);
  if (workers <= 1) {
    work(0, n);
    return out;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    pool.emplace_back(work, begin, std::min(n, begin + chunk));
  }
  pool.clear();  // joins
  return out;
}

AnnotationStats annotation_stats(const std::vector<NoteAnnotation>& annotations) {
  AnnotationStats s;
  s.total = annotations.size();
  for (const auto& a : annotations) {
    switch (a.status) {
      case AnnotationStatus::automatic: ++s.automatic; break;
      case AnnotationStatus::needs_review: ++s.needs_review; break;
      case AnnotationStatus::verified: ++s.verified; break;
      case AnnotationStatus::corrected: ++s.corrected; break;
    }
    switch (a.outcome.kind) {
      case OutcomeKind::single: ++s.single; break;
      case OutcomeKind::multiple: ++s.multiple; break;
      case OutcomeKind::none: ++s.none; break;
    }
  }
  return s;
}

}  // namespace pianofinger
