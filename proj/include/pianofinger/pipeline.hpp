/// @file
/// @brief Session-level operations shared by the CLI and the HTTP service.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pianofinger/fingering.hpp"
#include "pianofinger/session_store.hpp"

namespace pianofinger {

struct PrelabelOptions {
  Thresholds thresholds;
  std::optional<double> floating_margin_px;  // default: half the mean key height
  std::optional<std::size_t> max_notes;      // refuse larger performances
};

MidiPerformance load_session_midi(const SessionStore& store, const SessionManifest& manifest);
Calibration load_session_calibration(const SessionStore& store, const SessionManifest& manifest);
SkeletonTrack load_session_skeleton(const SessionStore& store, const SessionManifest& manifest, ImageSize image_size);

/// Recomputes candidates for every note and merges them into the stored
/// annotations: verified/corrected entries are kept as they are, everything
/// else is replaced. Throws Error{precondition_failed} naming a missing input.
AnnotationStats run_prelabel(SessionStore& store, const std::string& session_id, const PrelabelOptions& options = {});

struct NoteView {
  std::size_t note_index = 0;
  int pitch = 0;
  double onset_s = 0.0;
  double offset_s = 0.0;
  double video_time_s = 0.0;
  std::int64_t first_frame = 0;
  std::int64_t frame_count = 0;
  OutcomeKind outcome = OutcomeKind::none;
  std::vector<int> fingers;
  ScoreVector scores{};
  std::optional<Finger> label;
  AnnotationStatus status = AnnotationStatus::needs_review;
  std::uint64_t version = 0;
};

NoteView make_note_view(const NoteEvent& note, const NoteAnnotation& annotation, double fps, double video_offset_s);

/// Views for every annotated note, optionally restricted to one status.
std::vector<NoteView> session_note_views(const SessionStore& store, const std::string& session_id,
                                         std::optional<AnnotationStatus> status = {});

enum class ExportFormat { full, labels };

/// Throws Error{validation} for anything other than "full" or "labels".
ExportFormat export_format_from_string(std::string_view text);

/// CSV. full: note_index,pitch,onset_s,offset_s,interval_len,s0..s9,outcome,label,status.
/// labels: note_index,label.
std::string export_annotations(const MidiPerformance& perf, const std::vector<NoteAnnotation>& annotations,
                               ExportFormat format);

std::string export_session(const SessionStore& store, const std::string& session_id, ExportFormat format);

}  // namespace pianofinger
