/// @file
/// @brief Finger score accumulation, candidate classification and batch pre-labeling.
///
/// For every note n and every frame f in which it sounds, each non-floating
/// fingertip i earns 1 when it lies inside the note's key region and
/// (1 - d/w)^2 when it lies within one key width w of it (0 < d < w). The
/// resulting ten-component score is then classified against |I(n)|:
///
///   A = {i : s_i > 0.5 |I(n)|}
///   A empty                       -> None
///   |A| = 1                       -> Single
///   |A| >= 2, one s_i > 0.8 |I(n)| -> Single
///   otherwise                     -> Multiple(A)

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pianofinger/geometry.hpp"
#include "pianofinger/midi.hpp"
#include "pianofinger/skeleton.hpp"

namespace pianofinger {

using ScoreVector = std::array<double, kFingerCount>;

struct Thresholds {
  double candidate = 0.5;  // fraction of |I(n)| a finger must exceed to be a candidate
  double dominant = 0.8;   // fraction that singles out one of several candidates
};

enum class OutcomeKind { single, multiple, none };

std::string_view to_string(OutcomeKind kind);
OutcomeKind outcome_kind_from_string(std::string_view text);

struct CandidateOutcome {
  OutcomeKind kind = OutcomeKind::none;
  std::vector<int> fingers;  // one entry for single, >= 2 for multiple, empty for none
  ScoreVector score{};
  std::int64_t interval_len = 0;

  bool operator==(const CandidateOutcome&) const = default;
};

/// A finger label, L1..L5 / R1..R5, backed by the 0..9 finger index.
class Finger {
 public:
  constexpr explicit Finger(int index) : index_(index) {}

  /// Parses "L1".."L5" / "R1".."R5"; throws Error{validation} otherwise.
  static Finger parse(std::string_view label);

  constexpr int index() const { return index_; }
  std::string label() const;

  bool operator==(const Finger&) const = default;

 private:
  int index_;
};

enum class AnnotationStatus { automatic, needs_review, verified, corrected };

std::string_view to_string(AnnotationStatus status);
AnnotationStatus annotation_status_from_string(std::string_view text);

struct NoteAnnotation {
  std::size_t note_index = 0;
  CandidateOutcome outcome;
  std::optional<Finger> label;
  AnnotationStatus status = AnnotationStatus::needs_review;
  std::uint64_t version = 0;

  bool operator==(const NoteAnnotation&) const = default;
};

struct AnnotationStats {
  std::size_t total = 0;
  std::size_t automatic = 0;
  std::size_t needs_review = 0;
  std::size_t verified = 0;
  std::size_t corrected = 0;
  std::size_t single = 0;
  std::size_t multiple = 0;
  std::size_t none = 0;

  bool operator==(const AnnotationStats&) const = default;
};

ScoreVector score_note(const NoteEvent& note, const FrameInterval& interval, const KeyboardLayout& layout,
                       const SkeletonTrack& track);

CandidateOutcome classify_candidates(const ScoreVector& score, std::int64_t interval_len,
                                     const Thresholds& thresholds = {});

/// One annotation per note, in note order. Never throws for per-note problems;
/// unmappable notes come back as None / needs_review.
std::vector<NoteAnnotation> prelabel_performance(const MidiPerformance& perf, const KeyboardLayout& layout,
                                                 const SkeletonTrack& track, double fps, double video_offset_s,
                                                 const Thresholds& thresholds = {});

AnnotationStats annotation_stats(const std::vector<NoteAnnotation>& annotations);

}  // namespace pianofinger
