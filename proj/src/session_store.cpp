#include "pianofinger/session_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "pianofinger/control_payload.hpp"
#include "pianofinger/error.hpp"

namespace fs = std::filesystem;

namespace pianofinger {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void io_fail(const std::string& what, const fs::path& path) {
  throw Error(ErrorKind::io, what + ": " + path.string());
}

// Exclusive advisory lock on a file, released on destruction.
class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) io_fail("cannot open lock file", path);
    while (::flock(fd_, LOCK_EX) != 0) {
      if (errno != EINTR) {
        ::close(fd_);
        io_fail("cannot lock", path);
      }
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  int fd_ = -1;
};

std::string random_hex(std::size_t chars) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(chars, '0');
  for (auto& c : s) c = kDigits[rng() & 0xF];
  return s;
}

ordered_json files_to_json(const SessionFiles& f) {
  ordered_json j;
  auto put = [&](const char* key, const std::string& v) { j[key] = v.empty() ? ordered_json(nullptr) : ordered_json(v); };
  put("midi", f.midi);
  put("audio_daw", f.audio_daw);
  put("audio_video", f.audio_video);
  put("video", f.video);
  put("skeleton", f.skeleton);
  put("keystones", f.keystones);
  return j;
}

std::string string_or_empty(const json& j, const char* key) {
  const auto it = j.find(key);
  return (it == j.end() || it->is_null()) ? std::string() : it->get<std::string>();
}

ordered_json outcome_to_json(const CandidateOutcome& o) {
  ordered_json j;
  j["outcome"] = std::string(to_string(o.kind));
  j["fingers"] = o.fingers;
  j["scores"] = o.score;
  j["interval_len"] = o.interval_len;
  return j;
}

}  // namespace

SyncInfo make_sync_info(const SyncResult& result, std::uint32_t other_sample_rate) {
  SyncInfo s;
  s.lag_samples = result.lag_samples;
  s.lag_s = result.lag_s;
  s.peak_correlation = result.peak_correlation;
  s.confidence = result.confidence;
  s.sample_rate = result.sample_rate;
  s.other_sample_rate = other_sample_rate;
  s.video_offset_s = -result.lag_s;
  return s;
}

std::string manifest_to_text(const SessionManifest& m) {
  ordered_json j;
  j["schema_version"] = m.schema_version;
  j["session_id"] = m.session_id;
  j["profile_id"] = m.profile_id;
  j["piece"] = {{"composer", m.piece.composer}, {"title", m.piece.title}, {"tags", m.piece.tags}};
  j["files"] = files_to_json(m.files);
  j["fps"] = m.fps;
  if (m.sync) {
    const auto& s = *m.sync;
    j["sync"] = {{"reference", s.reference},
                 {"lag_samples", s.lag_samples},
                 {"lag_s", s.lag_s},
                 {"peak_correlation", s.peak_correlation},
                 {"confidence", s.confidence},
                 {"sample_rate", s.sample_rate},
                 {"other_sample_rate", s.other_sample_rate},
                 {"video_offset_s", s.video_offset_s}};
  } else {
    j["sync"] = nullptr;
  }
  j["annotation_state"] = m.annotation_state;
  j["created_at"] = m.created_at;
  return j.dump(2) + "\n";
}

SessionManifest manifest_from_text(const std::string& text) {
  try {
    const json j = json::parse(text);
    SessionManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kSchemaVersion) {
      throw Error(ErrorKind::unsupported_version, "manifest: unsupported schema_version " + std::to_string(m.schema_version));
    }
    m.session_id = j.at("session_id").get<std::string>();
    m.profile_id = string_or_empty(j, "profile_id");
    if (const auto it = j.find("piece"); it != j.end() && !it->is_null()) {
      m.piece.composer = string_or_empty(*it, "composer");
      m.piece.title = string_or_empty(*it, "title");
      if (const auto tags = it->find("tags"); tags != it->end() && !tags->is_null()) {
        m.piece.tags = tags->get<std::map<std::string, std::string>>();
      }
    }
    const auto& f = j.at("files");
    m.files = {string_or_empty(f, "midi"),  string_or_empty(f, "audio_daw"), string_or_empty(f, "audio_video"),
               string_or_empty(f, "video"), string_or_empty(f, "skeleton"),  string_or_empty(f, "keystones")};
    m.fps = j.at("fps").get<double>();
    if (!(m.fps > 0.0)) throw Error(ErrorKind::parse, "manifest: fps must be positive");
    if (const auto it = j.find("sync"); it != j.end() && !it->is_null()) {
      SyncInfo s;
      s.reference = it->at("reference").get<std::string>();
      s.lag_samples = it->at("lag_samples").get<std::int64_t>();
      s.lag_s = it->at("lag_s").get<double>();
      s.peak_correlation = it->at("peak_correlation").get<double>();
      s.confidence = it->at("confidence").get<double>();
      s.sample_rate = it->at("sample_rate").get<std::uint32_t>();
      s.other_sample_rate = it->at("other_sample_rate").get<std::uint32_t>();
      s.video_offset_s = it->at("video_offset_s").get<double>();
      m.sync = s;
    }
    m.annotation_state = j.value("annotation_state", std::string("annotations.json"));
    m.created_at = string_or_empty(j, "created_at");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("manifest: ") + e.what());
  }
}

SessionManifest read_manifest_file(const fs::path& path) { return manifest_from_text(read_text_file(path)); }

void write_manifest_file(const SessionManifest& manifest, const fs::path& path) {
  write_file_atomic(path, manifest_to_text(manifest));
}

std::string annotations_to_text(const std::string& session_id, const std::vector<NoteAnnotation>& annotations) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["session_id"] = session_id;
  ordered_json notes = ordered_json::array();
  for (const auto& a : annotations) {
    ordered_json n;
    n["note_index"] = a.note_index;
    const ordered_json outcome = outcome_to_json(a.outcome);
    for (const auto& [k, v] : outcome.items()) n[k] = v;
    n["label"] = a.label ? ordered_json(a.label->label()) : ordered_json(nullptr);
    n["status"] = std::string(to_string(a.status));
    n["version"] = a.version;
    notes.push_back(std::move(n));
  }
  j["notes"] = std::move(notes);
  return j.dump(2) + "\n";
}

std::vector<NoteAnnotation> annotations_from_text(const std::string& text) {
  try {
    const json j = json::parse(text);
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion) {
      throw Error(ErrorKind::unsupported_version, "annotations: unsupported schema_version " + std::to_string(version));
    }
    std::vector<NoteAnnotation> out;
    for (const auto& n : j.at("notes")) {
      NoteAnnotation a;
      a.note_index = n.at("note_index").get<std::size_t>();
      a.outcome.kind = outcome_kind_from_string(n.at("outcome").get<std::string>());
      a.outcome.fingers = n.at("fingers").get<std::vector<int>>();
      a.outcome.score = n.at("scores").get<ScoreVector>();
      a.outcome.interval_len = n.at("interval_len").get<std::int64_t>();
      if (!n.at("label").is_null()) a.label = Finger::parse(n.at("label").get<std::string>());
      a.status = annotation_status_from_string(n.at("status").get<std::string>());
      a.version = n.at("version").get<std::uint64_t>();
      out.push_back(std::move(a));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("annotations: ") + e.what());
  }
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp." + random_hex(8);
  const int fd = ::open(tmp.c_str(), O_CREAT | O_WRONLY | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_fail("cannot create", tmp);
  std::size_t written = 0;
  while (written < contents.size()) {
    const ssize_t n = ::write(fd, contents.data() + written, contents.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      ::unlink(tmp.c_str());
      io_fail("cannot write", tmp);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    ::unlink(tmp.c_str());
    io_fail("cannot flush", tmp);
  }
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    ::unlink(tmp.c_str());
    io_fail("cannot replace", path);
  }
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC); dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail("cannot open", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {}

SessionStore SessionStore::open(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) io_fail("store root does not exist", root);
  return SessionStore(fs::absolute(root));
}

SessionStore SessionStore::create(const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root / "sessions", ec);
  if (ec) io_fail("cannot create store root", root);
  return SessionStore(fs::absolute(root));
}

PerformerProfile SessionStore::register_profile(const std::string& display_name, std::optional<Handedness> handedness) {
  if (display_name.empty()) throw Error(ErrorKind::validation, "profile: display_name must not be empty");
  std::lock_guard guard(locks_->profiles);
  FileLock lock(root_ / ".profiles.lock");
  auto all = profiles();
  PerformerProfile p;
  do {
    p.profile_id = random_hex(12);
  } while (std::any_of(all.begin(), all.end(), [&](const auto& q) { return q.profile_id == p.profile_id; }));
  p.display_name = display_name;
  p.handedness = handedness;
  p.registered_at = utc_timestamp();
  all.push_back(p);

  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["profiles"] = ordered_json::array();
  for (const auto& q : all) {
    j["profiles"].push_back({{"profile_id", q.profile_id},
                             {"display_name", q.display_name},
                             {"handedness", q.handedness ? ordered_json(to_string(*q.handedness)) : ordered_json()},
                             {"registered_at", q.registered_at}});
  }
  write_file_atomic(root_ / "profiles.json", j.dump(2) + "\n");
  return p;
}

std::vector<PerformerProfile> SessionStore::profiles() const {
  const fs::path path = root_ / "profiles.json";
  std::vector<PerformerProfile> out;
  if (!fs::exists(path)) return out;
  try {
    const json j = json::parse(read_text_file(path));
    for (const auto& p : j.at("profiles")) {
      PerformerProfile q;
      q.profile_id = p.at("profile_id").get<std::string>();
      q.display_name = p.at("display_name").get<std::string>();
      const std::string hand = string_or_empty(p, "handedness");
      if (hand == "left") q.handedness = Handedness::left;
      if (hand == "right") q.handedness = Handedness::right;
      q.registered_at = string_or_empty(p, "registered_at");
      out.push_back(std::move(q));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("profiles: ") + e.what());
  }
  return out;
}

std::optional<PerformerProfile> SessionStore::find_profile(const std::string& profile_id) const {
  for (auto& p : profiles()) {
    if (p.profile_id == profile_id) return p;
  }
  return std::nullopt;
}

fs::path SessionStore::session_dir(const std::string& session_id) const { return root_ / "sessions" / session_id; }

bool SessionStore::has_session(const std::string& session_id) const {
  return is_valid_identifier(session_id) && fs::exists(session_dir(session_id) / "manifest.json");
}

SessionManifest SessionStore::create_session(const SessionRequest& request) {
  if (!(request.fps > 0.0)) throw Error(ErrorKind::validation, "session: fps must be positive");
  if (!find_profile(request.profile_id)) throw Error(ErrorKind::not_found, "session: unknown profile '" + request.profile_id + "'");

  SessionFiles files = request.files;
  auto check = [](std::string& ref, const char* name, bool required) {
    if (ref.empty()) {
      if (required) throw Error(ErrorKind::incomplete_session, std::string("session: missing required file '") + name + "'");
      return;
    }
    if (!fs::exists(ref)) {
      throw Error(ErrorKind::incomplete_session, std::string("session: file '") + name + "' not found: " + ref);
    }
    ref = fs::absolute(ref).lexically_normal().string();
  };
  check(files.midi, "midi", true);
  if (files.audio_daw.empty() && files.audio_video.empty()) {
    throw Error(ErrorKind::incomplete_session, "session: at least one audio file (audio_daw or audio_video) is required");
  }
  check(files.audio_daw, "audio_daw", false);
  check(files.audio_video, "audio_video", false);
  check(files.video, "video", false);
  check(files.skeleton, "skeleton", false);
  check(files.keystones, "keystones", false);

  std::error_code ec;
  fs::create_directories(root_ / "sessions", ec);
  if (ec) io_fail("cannot create sessions directory", root_ / "sessions");

  SessionManifest m;
  if (request.session_id) {
    if (!is_valid_identifier(*request.session_id)) {
      throw Error(ErrorKind::validation, "session: session_id must match [A-Za-z0-9_-]{1,64}");
    }
    m.session_id = *request.session_id;
    if (!fs::create_directory(session_dir(m.session_id), ec)) {
      if (ec) io_fail("cannot create session directory", session_dir(m.session_id));
      throw Error(ErrorKind::id_collision, "session: id '" + m.session_id + "' already exists");
    }
  } else {
    do {
      m.session_id = "s" + random_hex(12);
    } while (!fs::create_directory(session_dir(m.session_id), ec) && !ec);
    if (ec) io_fail("cannot create session directory", session_dir(m.session_id));
  }

  m.profile_id = request.profile_id;
  m.piece = request.piece;
  m.files = files;
  m.fps = request.fps;
  m.created_at = utc_timestamp();
  write_file_atomic(session_dir(m.session_id) / m.annotation_state, annotations_to_text(m.session_id, {}));
  write_manifest_file(m, session_dir(m.session_id) / "manifest.json");
  return m;
}

std::vector<SessionManifest> SessionStore::list_sessions() const {
  std::vector<SessionManifest> out;
  const fs::path dir = root_ / "sessions";
  std::error_code ec;
  if (!fs::exists(dir, ec)) {
    if (ec) io_fail("cannot read store", dir);
    return out;
  }
  fs::directory_iterator it(dir, ec);
  if (ec) io_fail("cannot read store", dir);
  for (const auto& entry : it) {
    const fs::path manifest = entry.path() / "manifest.json";
    if (entry.is_directory() && fs::exists(manifest)) out.push_back(read_manifest_file(manifest));
  }
  std::sort(out.begin(), out.end(), [](const SessionManifest& a, const SessionManifest& b) {
    return std::tie(a.created_at, a.session_id) < std::tie(b.created_at, b.session_id);
  });
  return out;
}

SessionManifest SessionStore::load_manifest(const std::string& session_id) const {
  if (!has_session(session_id)) throw Error(ErrorKind::not_found, "session '" + session_id + "' not found");
  return read_manifest_file(session_dir(session_id) / "manifest.json");
}

void SessionStore::save_manifest(const SessionManifest& manifest) {
  if (!has_session(manifest.session_id)) throw Error(ErrorKind::not_found, "session '" + manifest.session_id + "' not found");
  write_manifest_file(manifest, session_dir(manifest.session_id) / "manifest.json");
}

fs::path SessionStore::resolve(const SessionManifest& manifest, const std::string& ref) const {
  const fs::path p(ref);
  return p.is_absolute() ? p : session_dir(manifest.session_id) / p;
}

std::vector<std::string> SessionStore::missing_files(const SessionManifest& manifest) const {
  std::vector<std::string> missing;
  const std::pair<const char*, const std::string*> refs[] = {
      {"midi", &manifest.files.midi},   {"audio_daw", &manifest.files.audio_daw},
      {"audio_video", &manifest.files.audio_video}, {"video", &manifest.files.video},
      {"skeleton", &manifest.files.skeleton},       {"keystones", &manifest.files.keystones}};
  for (const auto& [name, ref] : refs) {
    if (!ref->empty() && !fs::exists(resolve(manifest, *ref))) missing.emplace_back(name);
  }
  return missing;
}

KeyboardLayout SessionStore::save_calibration(const std::string& session_id, const Calibration& calibration) {
  KeyboardLayout layout = build_layout(calibration.keystones, calibration.image_size);
  with_session_lock(session_id, [&] {
    SessionManifest m = load_manifest(session_id);
    write_file_atomic(session_dir(session_id) / "keystones.json", serialize_calibration(calibration));
    if (m.files.keystones != "keystones.json") {
      m.files.keystones = "keystones.json";
      save_manifest(m);
    }
  });
  return layout;
}

fs::path SessionStore::annotations_path(const SessionManifest& manifest) const {
  return resolve(manifest, manifest.annotation_state);
}

std::string SessionStore::annotation_document(const std::string& session_id) const {
  const SessionManifest m = load_manifest(session_id);
  const fs::path path = annotations_path(m);
  if (!fs::exists(path)) return annotations_to_text(session_id, {});
  return read_text_file(path);
}

std::vector<NoteAnnotation> SessionStore::load_annotations(const std::string& session_id) const {
  return annotations_from_text(annotation_document(session_id));
}

void SessionStore::save_annotations(const std::string& session_id, const std::vector<NoteAnnotation>& annotations) {
  const SessionManifest m = load_manifest(session_id);
  write_file_atomic(annotations_path(m), annotations_to_text(session_id, annotations));
}

std::mutex& SessionStore::session_mutex(const std::string& session_id) {
  std::lock_guard guard(locks_->guard);
  auto& slot = locks_->by_session[session_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void SessionStore::with_session_lock(const std::string& session_id, const std::function<void()>& fn) {
  if (!has_session(session_id)) throw Error(ErrorKind::not_found, "session '" + session_id + "' not found");
  std::lock_guard guard(session_mutex(session_id));
  FileLock lock(session_dir(session_id) / ".lock");
  fn();
}

NoteAnnotation SessionStore::update_label(const std::string& session_id, std::size_t note_index, Finger label,
                                          std::uint64_t expected_version) {
  NoteAnnotation result;
  with_session_lock(session_id, [&] {
    auto annotations = load_annotations(session_id);
    const auto it = std::find_if(annotations.begin(), annotations.end(),
                                 [&](const NoteAnnotation& a) { return a.note_index == note_index; });
    if (it == annotations.end()) {
      throw Error(ErrorKind::not_found, "note " + std::to_string(note_index) + " not found in session '" + session_id + "'");
    }
    if (it->version != expected_version) {
      throw Error(ErrorKind::stale_edit, "note " + std::to_string(note_index) + " is at version " +
                                             std::to_string(it->version) + ", edit was based on version " +
                                             std::to_string(expected_version));
    }
    const bool matches_auto = it->outcome.kind == OutcomeKind::single && it->outcome.fingers.front() == label.index();
    it->label = label;
    it->status = matches_auto ? AnnotationStatus::verified : AnnotationStatus::corrected;
    it->version += 1;
    save_annotations(session_id, annotations);
    result = *it;
  });
  return result;
}

}  // namespace pianofinger
