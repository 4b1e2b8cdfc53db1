#include "pianofinger/annotation_service.hpp"

#include <charconv>
#include <fstream>

#include "httplib.h"
#include "json.hpp"
#include "pianofinger/pipeline.hpp"

namespace fs = std::filesystem;

namespace pianofinger {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

ServiceResponse ok_json(const ordered_json& j) { return {200, j.dump() + "\n", "application/json"}; }

template <typename Fn>
ServiceResponse guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    ordered_json j;
    j["error"] = {{"kind", "internal"}, {"message", e.what()}};
    return {500, j.dump() + "\n", "application/json"};
  }
}

std::int64_t parse_integer(const std::string& text, const char* what) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::validation, std::string(what) + " must be an integer, got '" + text + "'");
  }
  return v;
}

ordered_json point_json(Point p) { return ordered_json::array({p.x, p.y}); }

ordered_json layout_json(const KeyboardLayout& layout) {
  ordered_json j;
  j["image_size"] = {layout.image_size.width, layout.image_size.height};
  j["keystones"] = ordered_json::array();
  for (const auto& k : layout.keystones) {
    j["keystones"].push_back(
        {{"boundary_index", k.boundary_index}, {"top", point_json(k.top)}, {"bottom", point_json(k.bottom)}});
  }
  j["regions"] = ordered_json::array();
  for (const auto& r : layout.regions) {
    ordered_json quad = ordered_json::array();
    for (const auto& p : r.quad) quad.push_back(point_json(p));
    j["regions"].push_back({{"pitch", r.pitch}, {"is_black", r.is_black}, {"width_px", r.width_px}, {"quad", quad}});
  }
  return j;
}

ordered_json stats_json(const AnnotationStats& s) {
  return {{"total", s.total},   {"auto", s.automatic}, {"needs_review", s.needs_review}, {"verified", s.verified},
          {"corrected", s.corrected}, {"single", s.single}, {"multiple", s.multiple},     {"none", s.none}};
}

ordered_json note_view_json(const NoteView& v) {
  ordered_json j;
  j["note_index"] = v.note_index;
  j["pitch"] = v.pitch;
  j["onset_s"] = v.onset_s;
  j["offset_s"] = v.offset_s;
  j["video_time_s"] = v.video_time_s;
  j["first_frame"] = v.first_frame;
  j["frame_count"] = v.frame_count;
  j["outcome"] = std::string(to_string(v.outcome));
  j["fingers"] = v.fingers;
  j["scores"] = v.scores;
  j["label"] = v.label ? ordered_json(v.label->label()) : ordered_json(nullptr);
  j["status"] = std::string(to_string(v.status));
  j["version"] = v.version;
  return j;
}

std::string media_content_type(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".mp4" || ext == ".m4v") return "video/mp4";
  if (ext == ".webm") return "video/webm";
  if (ext == ".mov") return "video/quicktime";
  if (ext == ".wav") return "audio/wav";
  if (ext == ".mid" || ext == ".midi") return "audio/midi";
  return "application/octet-stream";
}

}  // namespace

int http_status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::stale_edit: return 409;
    case ErrorKind::id_collision: return 409;
    case ErrorKind::precondition_failed: return 412;
    case ErrorKind::io: return 500;
    default: return 400;
  }
}

ServiceResponse error_response(const Error& error) {
  ordered_json j;
  j["error"] = {{"kind", std::string(to_string(error.kind()))}, {"message", error.what()}};
  return {http_status_for(error.kind()), j.dump() + "\n", "application/json"};
}

struct AnnotationService::SkeletonCacheEntry {
  fs::path skeleton_path;
  fs::file_time_type skeleton_mtime;
  std::string calibration_text;
  std::shared_ptr<const SkeletonTrack> track;
};

AnnotationService::AnnotationService(SessionStore store, ServiceConfig config)
    : store_(std::move(store)), config_(std::move(config)) {}

ServiceResponse AnnotationService::list_sessions() const {
  return guarded([&] {
    ordered_json sessions = ordered_json::array();
    for (const auto& m : store_.list_sessions()) {
      const auto stats = annotation_stats(store_.load_annotations(m.session_id));
      sessions.push_back({{"session_id", m.session_id},
                          {"profile_id", m.profile_id},
                          {"composer", m.piece.composer},
                          {"title", m.piece.title},
                          {"created_at", m.created_at},
                          {"fps", m.fps},
                          {"stats", stats_json(stats)}});
    }
    return ok_json({{"sessions", sessions}});
  });
}

ServiceResponse AnnotationService::get_session(const std::string& session_id) const {
  return guarded([&] {
    const auto manifest = store_.load_manifest(session_id);
    ordered_json j;
    j["manifest"] = ordered_json::parse(manifest_to_text(manifest));
    j["missing_files"] = store_.missing_files(manifest);
    j["stats"] = stats_json(annotation_stats(store_.load_annotations(session_id)));
    return ok_json(j);
  });
}

ServiceResponse AnnotationService::get_keystones(const std::string& session_id) const {
  return guarded([&] {
    const auto manifest = store_.load_manifest(session_id);
    const auto calibration = load_session_calibration(store_, manifest);
    return ok_json(layout_json(build_layout(calibration.keystones, calibration.image_size)));
  });
}

ServiceResponse AnnotationService::put_keystones(const std::string& session_id, const std::string& body) {
  return guarded([&] {
    const Calibration calibration = parse_calibration(body);
    const KeyboardLayout layout = store_.save_calibration(session_id, calibration);
    return ok_json(layout_json(layout));
  });
}

ServiceResponse AnnotationService::trigger_prelabel(const std::string& session_id) {
  return guarded([&] {
    PrelabelOptions options;
    options.max_notes = config_.max_prelabel_notes;
    const auto stats = run_prelabel(store_, session_id, options);
    return ok_json({{"session_id", session_id}, {"stats", stats_json(stats)}});
  });
}

ServiceResponse AnnotationService::get_notes(const std::string& session_id,
                                             const std::optional<std::string>& status) const {
  return guarded([&] {
    std::optional<AnnotationStatus> filter;
    if (status) filter = annotation_status_from_string(*status);
    ordered_json notes = ordered_json::array();
    for (const auto& v : session_note_views(store_, session_id, filter)) notes.push_back(note_view_json(v));
    return ok_json({{"notes", notes}});
  });
}

ServiceResponse AnnotationService::patch_label(const std::string& session_id, const std::string& note_index,
                                               const std::string& body) {
  return guarded([&] {
    const std::int64_t index = parse_integer(note_index, "note_index");
    if (index < 0) throw Error(ErrorKind::validation, "note_index must be non-negative");
    json req;
    try {
      req = json::parse(body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::validation, std::string("request body: ") + e.what());
    }
    if (!req.is_object() || !req.contains("label") || !req["label"].is_string()) {
      throw Error(ErrorKind::validation, "request body needs a string 'label'");
    }
    if (!req.contains("expected_version") || !req["expected_version"].is_number_unsigned()) {
      throw Error(ErrorKind::validation, "request body needs a non-negative integer 'expected_version'");
    }
    const Finger label = Finger::parse(req["label"].get<std::string>());
    const auto updated = store_.update_label(session_id, static_cast<std::size_t>(index), label,
                                             req["expected_version"].get<std::uint64_t>());
    const auto manifest = store_.load_manifest(session_id);
    const auto perf = load_session_midi(store_, manifest);
    if (updated.note_index >= perf.notes.size()) {
      throw Error(ErrorKind::precondition_failed, "annotation has no matching MIDI note");
    }
    return ok_json(note_view_json(
        make_note_view(perf.notes[updated.note_index], updated, manifest.fps, manifest.video_offset_s())));
  });
}

std::shared_ptr<const SkeletonTrack> AnnotationService::cached_skeleton(const SessionManifest& manifest) const {
  if (manifest.files.skeleton.empty()) {
    throw Error(ErrorKind::precondition_failed, "session '" + manifest.session_id + "' has no skeleton");
  }
  const fs::path path = store_.resolve(manifest, manifest.files.skeleton);
  std::error_code ec;
  const auto mtime = fs::last_write_time(path, ec);
  if (ec) throw Error(ErrorKind::precondition_failed, "skeleton file missing: " + path.string());
  std::optional<Calibration> calibration;
  std::string calibration_text;
  if (!manifest.files.keystones.empty() && fs::exists(store_.resolve(manifest, manifest.files.keystones))) {
    calibration = load_session_calibration(store_, manifest);
    calibration_text = serialize_calibration(*calibration);
  }

  std::lock_guard lock(cache_mutex_);
  auto& entry = skeleton_cache_[manifest.session_id];
  if (entry && entry->skeleton_path == path && entry->skeleton_mtime == mtime &&
      entry->calibration_text == calibration_text) {
    return entry->track;
  }
  const ImageSize size = calibration ? calibration->image_size : ImageSize{};
  SkeletonTrack track = load_skeleton_file(path.string(), manifest.fps, size);
  if (calibration) {
    const auto layout = build_layout(calibration->keystones, calibration->image_size);
    track = flag_floating(track, layout, default_floating_margin(layout));
  }
  entry = std::make_shared<SkeletonCacheEntry>(
      SkeletonCacheEntry{path, mtime, calibration_text, std::make_shared<const SkeletonTrack>(std::move(track))});
  return entry->track;
}

ServiceResponse AnnotationService::get_frame_skeleton(const std::string& session_id, const std::string& frame) const {
  return guarded([&] {
    const std::int64_t f = parse_integer(frame, "frame");
    if (f < 0) throw Error(ErrorKind::validation, "frame must be non-negative");
    const auto manifest = store_.load_manifest(session_id);
    const auto track = cached_skeleton(manifest);
    ordered_json hands = ordered_json::array();
    if (const auto it = track->frames.find(f); it != track->frames.end()) {
      for (const auto& h : it->second.hands) {
        ordered_json lms = ordered_json::array();
        for (const auto& l : h.landmarks) lms.push_back({l.x, l.y, l.z});
        hands.push_back({{"hand", to_string(h.handedness)},
                         {"floating", h.floating ? ordered_json(*h.floating) : ordered_json(nullptr)},
                         {"landmarks", lms}});
      }
    }
    return ok_json({{"frame", f}, {"hands", hands}});
  });
}

ServiceResponse AnnotationService::export_annotations(const std::string& session_id, const std::string& format) const {
  return guarded([&] {
    const ExportFormat fmt = export_format_from_string(format);
    return ServiceResponse{200, export_session(store_, session_id, fmt), "text/csv"};
  });
}

fs::path AnnotationService::media_path(const std::string& session_id, const std::string& kind) const {
  const auto manifest = store_.load_manifest(session_id);
  const std::string* ref = nullptr;
  if (kind == "video") ref = &manifest.files.video;
  if (kind == "audio_daw") ref = &manifest.files.audio_daw;
  if (kind == "audio_video") ref = &manifest.files.audio_video;
  if (!ref) throw Error(ErrorKind::validation, "unknown media kind '" + kind + "'");
  if (ref->empty()) throw Error(ErrorKind::not_found, "session '" + session_id + "' has no " + kind);
  const fs::path path = store_.resolve(manifest, *ref);
  if (!fs::exists(path)) throw Error(ErrorKind::not_found, kind + " file missing: " + path.string());
  return path;
}

HttpServer::HttpServer(AnnotationService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& svr = *server_;
  // httplib defaults to SO_REUSEPORT, which would let a second server share an occupied port.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  auto send = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  const std::string session = R"(/api/v1/sessions/([A-Za-z0-9_-]+))";

  svr.Get("/api/v1/sessions", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, service_.list_sessions());
  });
  svr.Get(session, [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.get_session(req.matches[1]));
  });
  svr.Get(session + "/keystones", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.get_keystones(req.matches[1]));
  });
  svr.Put(session + "/keystones", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.put_keystones(req.matches[1], req.body));
  });
  svr.Post(session + "/prelabel", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.trigger_prelabel(req.matches[1]));
  });
  svr.Get(session + "/notes", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> status;
    if (req.has_param("status")) status = req.get_param_value("status");
    send(res, service_.get_notes(req.matches[1], status));
  });
  svr.Patch(session + R"(/notes/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.patch_label(req.matches[1], req.matches[2], req.body));
  });
  svr.Get(session + R"(/frames/([^/]+)/skeleton)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.get_frame_skeleton(req.matches[1], req.matches[2]));
  });
  svr.Get(session + "/export", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.export_annotations(req.matches[1], req.has_param("format") ? req.get_param_value("format") : ""));
  });
  svr.Get(session + R"(/media/([a-z_]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    fs::path path;
    try {
      path = service_.media_path(req.matches[1], req.matches[2]);
    } catch (const Error& e) {
      send(res, error_response(e));
      return;
    }
    const auto size = static_cast<std::size_t>(fs::file_size(path));
    res.set_content_provider(size, media_content_type(path),
                             [path](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
                               std::ifstream in(path, std::ios::binary);
                               in.seekg(static_cast<std::streamoff>(offset));
                               std::vector<char> buf(std::min<std::size_t>(length, 1 << 16));
                               in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
                               const auto got = static_cast<std::size_t>(in.gcount());
                               return got > 0 && sink.write(buf.data(), got);
                             });
  });

  if (service_.config().media_root) svr.set_mount_point("/media", service_.config().media_root->string());
  if (service_.config().ui_root) svr.set_mount_point("/", service_.config().ui_root->string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorKind::io, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::serve() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_->is_running()) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace pianofinger
