#include "pianofinger/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <map>

#include "pianofinger/error.hpp"

namespace fs = std::filesystem;

namespace pianofinger {
namespace {

fs::path require_file(const SessionStore& store, const SessionManifest& manifest, const std::string& ref,
                      const char* artifact) {
  if (ref.empty()) {
    throw Error(ErrorKind::precondition_failed,
                std::string("session '") + manifest.session_id + "' has no " + artifact);
  }
  fs::path path = store.resolve(manifest, ref);
  if (!fs::exists(path)) {
    throw Error(ErrorKind::precondition_failed,
                std::string("session '") + manifest.session_id + "': " + artifact + " file missing: " + path.string());
  }
  return path;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

MidiPerformance load_session_midi(const SessionStore& store, const SessionManifest& manifest) {
  return read_midi_file(require_file(store, manifest, manifest.files.midi, "midi").string());
}

Calibration load_session_calibration(const SessionStore& store, const SessionManifest& manifest) {
  return read_calibration_file(require_file(store, manifest, manifest.files.keystones, "keystones").string());
}

SkeletonTrack load_session_skeleton(const SessionStore& store, const SessionManifest& manifest, ImageSize image_size) {
  return load_skeleton_file(require_file(store, manifest, manifest.files.skeleton, "skeleton").string(), manifest.fps,
                            image_size);
}

AnnotationStats run_prelabel(SessionStore& store, const std::string& session_id, const PrelabelOptions& options) {
  const SessionManifest manifest = store.load_manifest(session_id);
  // Check every prerequisite before parsing anything, so the error names the first missing artifact.
  require_file(store, manifest, manifest.files.midi, "midi");
  require_file(store, manifest, manifest.files.keystones, "keystones");
  require_file(store, manifest, manifest.files.skeleton, "skeleton");

  const MidiPerformance perf = load_session_midi(store, manifest);
  if (options.max_notes && perf.notes.size() > *options.max_notes) {
    throw Error(ErrorKind::precondition_failed, "session '" + session_id + "' has " + std::to_string(perf.notes.size()) +
                                                    " notes; synchronous pre-labeling is limited to " +
                                                    std::to_string(*options.max_notes));
  }
  const Calibration calibration = load_session_calibration(store, manifest);
  const KeyboardLayout layout = build_layout(calibration.keystones, calibration.image_size);
  const double margin = options.floating_margin_px.value_or(default_floating_margin(layout));
  const SkeletonTrack track =
      flag_floating(load_session_skeleton(store, manifest, calibration.image_size), layout, margin);

  std::vector<NoteAnnotation> fresh =
      prelabel_performance(perf, layout, track, manifest.fps, manifest.video_offset_s(), options.thresholds);

  AnnotationStats stats;
  store.with_session_lock(session_id, [&] {
    std::map<std::size_t, NoteAnnotation> existing;
    for (auto& a : store.load_annotations(session_id)) existing.emplace(a.note_index, std::move(a));
    for (auto& a : fresh) {
      const auto it = existing.find(a.note_index);
      if (it == existing.end()) continue;
      if (it->second.status == AnnotationStatus::verified || it->second.status == AnnotationStatus::corrected) {
        a = it->second;
      } else {
        a.version = it->second.version;
      }
    }
    store.save_annotations(session_id, fresh);
    stats = annotation_stats(fresh);
  });
  return stats;
}

NoteView make_note_view(const NoteEvent& note, const NoteAnnotation& annotation, double fps, double video_offset_s) {
  const FrameInterval interval = note_frame_interval(note, fps, video_offset_s);
  NoteView v;
  v.note_index = annotation.note_index;
  v.pitch = note.pitch;
  v.onset_s = note.onset_s;
  v.offset_s = note.offset_s;
  v.video_time_s = note.onset_s + video_offset_s;
  v.first_frame = interval.first_frame;
  v.frame_count = interval.frame_count;
  v.outcome = annotation.outcome.kind;
  v.fingers = annotation.outcome.fingers;
  v.scores = annotation.outcome.score;
  v.label = annotation.label;
  v.status = annotation.status;
  v.version = annotation.version;
  return v;
}

std::vector<NoteView> session_note_views(const SessionStore& store, const std::string& session_id,
                                         std::optional<AnnotationStatus> status) {
  const SessionManifest manifest = store.load_manifest(session_id);
  const auto annotations = store.load_annotations(session_id);
  std::vector<NoteView> views;
  if (annotations.empty()) return views;
  const MidiPerformance perf = load_session_midi(store, manifest);
  for (const auto& a : annotations) {
    if (status && a.status != *status) continue;
    if (a.note_index >= perf.notes.size()) {
      throw Error(ErrorKind::precondition_failed, "annotation for note " + std::to_string(a.note_index) +
                                                      " has no matching MIDI note; re-run pre-labeling");
    }
    views.push_back(make_note_view(perf.notes[a.note_index], a, manifest.fps, manifest.video_offset_s()));
  }
  return views;
}

ExportFormat export_format_from_string(std::string_view text) {
  if (text == "full") return ExportFormat::full;
  if (text == "labels") return ExportFormat::labels;
  throw Error(ErrorKind::validation, "unknown export format '" + std::string(text) + "' (expected full or labels)");
}

std::string export_annotations(const MidiPerformance& perf, const std::vector<NoteAnnotation>& annotations,
                               ExportFormat format) {
  std::string out;
  if (format == ExportFormat::labels) {
    out = "note_index,label\n";
    for (const auto& a : annotations) {
      out += std::to_string(a.note_index) + "," + (a.label ? a.label->label() : std::string()) + "\n";
    }
    return out;
  }
  out = "note_index,pitch,onset_s,offset_s,interval_len";
  for (int i = 0; i < kFingerCount; ++i) out += ",s" + std::to_string(i);
  out += ",outcome,label,status\n";
  for (const auto& a : annotations) {
    if (a.note_index >= perf.notes.size()) {
      throw Error(ErrorKind::precondition_failed, "annotation for note " + std::to_string(a.note_index) +
                                                      " has no matching MIDI note");
    }
    const NoteEvent& n = perf.notes[a.note_index];
    out += std::to_string(a.note_index) + "," + std::to_string(n.pitch) + "," + format_double(n.onset_s) + "," +
           format_double(n.offset_s) + "," + std::to_string(a.outcome.interval_len);
    for (double s : a.outcome.score) out += "," + format_double(s);
    out += "," + std::string(to_string(a.outcome.kind)) + "," + (a.label ? a.label->label() : std::string()) + "," +
           std::string(to_string(a.status)) + "\n";
  }
  return out;
}

std::string export_session(const SessionStore& store, const std::string& session_id, ExportFormat format) {
  const SessionManifest manifest = store.load_manifest(session_id);
  const auto annotations = store.load_annotations(session_id);
  const MidiPerformance perf = load_session_midi(store, manifest);
  return export_annotations(perf, annotations, format);
}

}  // namespace pianofinger
