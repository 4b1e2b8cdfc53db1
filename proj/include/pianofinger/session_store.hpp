/// @file
/// @brief Directory-per-session store: manifests, calibration and annotation documents.
///
/// Layout under the store root:
///
///   profiles.json
///   sessions/<session_id>/manifest.json
///   sessions/<session_id>/annotations.json
///   sessions/<session_id>/keystones.json      (after calibration)
///   sessions/<session_id>/.lock
///
/// Every document write goes through a temp file, fsync and rename, so an
/// acknowledged write survives a crash.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pianofinger/audio.hpp"
#include "pianofinger/fingering.hpp"
#include "pianofinger/geometry.hpp"
#include "pianofinger/skeleton.hpp"

namespace pianofinger {

inline constexpr int kSchemaVersion = 1;

struct PerformerProfile {
  std::string profile_id;
  std::string display_name;
  std::optional<Handedness> handedness;
  std::string registered_at;

  bool operator==(const PerformerProfile&) const = default;
};

struct PieceMetadata {
  std::string composer;
  std::string title;
  std::map<std::string, std::string> tags;

  bool operator==(const PieceMetadata&) const = default;
};

/// Empty string = not provided.
struct SessionFiles {
  std::string midi;
  std::string audio_daw;    // DAW capture, shares the MIDI clock
  std::string audio_video;  // audio track of the video container (sync reference)
  std::string video;
  std::string skeleton;
  std::string keystones;

  bool operator==(const SessionFiles&) const = default;
};

struct SyncInfo {
  std::string reference = "video_audio";
  std::int64_t lag_samples = 0;
  double lag_s = 0.0;
  double peak_correlation = 0.0;
  double confidence = 1.0;
  std::uint32_t sample_rate = 0;        // reference rate
  std::uint32_t other_sample_rate = 0;  // DAW rate before resampling
  double video_offset_s = 0.0;          // added to MIDI times to reach video time (= -lag_s)

  bool operator==(const SyncInfo&) const = default;
};

SyncInfo make_sync_info(const SyncResult& result, std::uint32_t other_sample_rate);

struct SessionManifest {
  int schema_version = kSchemaVersion;
  std::string session_id;
  std::string profile_id;
  PieceMetadata piece;
  SessionFiles files;
  double fps = 30.0;
  std::optional<SyncInfo> sync;
  std::string annotation_state = "annotations.json";
  std::string created_at;

  double video_offset_s() const { return sync ? sync->video_offset_s : 0.0; }

  bool operator==(const SessionManifest&) const = default;
};

std::string manifest_to_text(const SessionManifest& manifest);
/// Throws Error{parse} on malformed documents and Error{unsupported_version} on unknown schema_version.
SessionManifest manifest_from_text(const std::string& text);
SessionManifest read_manifest_file(const std::filesystem::path& path);
void write_manifest_file(const SessionManifest& manifest, const std::filesystem::path& path);

std::string annotations_to_text(const std::string& session_id, const std::vector<NoteAnnotation>& annotations);
std::vector<NoteAnnotation> annotations_from_text(const std::string& text);

/// Writes via temp file + fsync + rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

std::string utc_timestamp();

struct SessionRequest {
  std::string profile_id;
  PieceMetadata piece;
  SessionFiles files;
  double fps = 30.0;
  std::optional<std::string> session_id;  // generated when absent
};

class SessionStore {
 public:
  /// Opens an existing store root; throws Error{io} when it is missing.
  static SessionStore open(const std::filesystem::path& root);
  /// Creates the root (and parents) if needed.
  static SessionStore create(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }

  PerformerProfile register_profile(const std::string& display_name, std::optional<Handedness> handedness = {});
  std::vector<PerformerProfile> profiles() const;
  std::optional<PerformerProfile> find_profile(const std::string& profile_id) const;

  /// Throws Error{incomplete_session} when MIDI or both audio files are missing,
  /// Error{id_collision} for a taken session_id, Error{not_found} for an unknown profile.
  SessionManifest create_session(const SessionRequest& request);

  /// Ordered by created_at, then session_id.
  std::vector<SessionManifest> list_sessions() const;
  bool has_session(const std::string& session_id) const;
  SessionManifest load_manifest(const std::string& session_id) const;
  void save_manifest(const SessionManifest& manifest);

  std::filesystem::path session_dir(const std::string& session_id) const;
  /// Resolves a file reference (absolute, or relative to the session directory).
  std::filesystem::path resolve(const SessionManifest& manifest, const std::string& ref) const;
  /// Names of referenced files that do not exist on disk.
  std::vector<std::string> missing_files(const SessionManifest& manifest) const;

  /// Validates the keystones (build_layout), writes keystones.json and points the manifest at it.
  KeyboardLayout save_calibration(const std::string& session_id, const Calibration& calibration);

  std::vector<NoteAnnotation> load_annotations(const std::string& session_id) const;
  std::string annotation_document(const std::string& session_id) const;
  void save_annotations(const std::string& session_id, const std::vector<NoteAnnotation>& annotations);

  /// Optimistic edit: throws Error{stale_edit} when expected_version differs from
  /// the stored version and Error{not_found} for an unknown note. Durable on return.
  NoteAnnotation update_label(const std::string& session_id, std::size_t note_index, Finger label,
                              std::uint64_t expected_version);

  /// Runs `fn` holding the session's writer lock (in-process mutex plus flock).
  void with_session_lock(const std::string& session_id, const std::function<void()>& fn);

 private:
  explicit SessionStore(std::filesystem::path root);

  std::filesystem::path annotations_path(const SessionManifest& manifest) const;
  std::mutex& session_mutex(const std::string& session_id);

  std::filesystem::path root_;
  struct Locks {
    std::mutex guard;
    std::map<std::string, std::unique_ptr<std::mutex>> by_session;
    std::mutex profiles;
  };
  std::shared_ptr<Locks> locks_ = std::make_shared<Locks>();
};

}  // namespace pianofinger
