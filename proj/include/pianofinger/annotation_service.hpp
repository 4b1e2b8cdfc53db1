/// @file
/// @brief HTTP facade over the session store for the annotation UI and scripted clients.
///
/// All endpoints live under /api/v1 and exchange JSON; failures return
/// {"error": {"kind": "<machine kind>", "message": "<text>"}}.
///
///   GET    /api/v1/sessions
///   GET    /api/v1/sessions/{id}
///   GET    /api/v1/sessions/{id}/keystones
///   PUT    /api/v1/sessions/{id}/keystones          body: calibration document
///   POST   /api/v1/sessions/{id}/prelabel
///   GET    /api/v1/sessions/{id}/notes[?status=auto|needs_review|verified|corrected]
///   PATCH  /api/v1/sessions/{id}/notes/{note_index} body: {"label": "R2", "expected_version": 0}
///   GET    /api/v1/sessions/{id}/frames/{frame}/skeleton
///   GET    /api/v1/sessions/{id}/export?format=full|labels   (text/csv)
///   GET    /api/v1/sessions/{id}/media/{video|audio_daw|audio_video}  (range requests)

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "pianofinger/error.hpp"
#include "pianofinger/session_store.hpp"

namespace httplib {
class Server;
}

namespace pianofinger {

struct ServiceConfig {
  std::size_t max_prelabel_notes = 10000;
  std::optional<std::filesystem::path> media_root;  // mounted read-only at /media
  std::optional<std::filesystem::path> ui_root;     // static UI bundle mounted at /
};

struct ServiceResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

int http_status_for(ErrorKind kind);
ServiceResponse error_response(const Error& error);

/// Request handlers, independent of the transport.
class AnnotationService {
 public:
  explicit AnnotationService(SessionStore store, ServiceConfig config = {});

  ServiceResponse list_sessions() const;
  ServiceResponse get_session(const std::string& session_id) const;
  ServiceResponse get_keystones(const std::string& session_id) const;
  ServiceResponse put_keystones(const std::string& session_id, const std::string& body);
  ServiceResponse trigger_prelabel(const std::string& session_id);
  ServiceResponse get_notes(const std::string& session_id, const std::optional<std::string>& status) const;
  ServiceResponse patch_label(const std::string& session_id, const std::string& note_index, const std::string& body);
  ServiceResponse get_frame_skeleton(const std::string& session_id, const std::string& frame) const;
  ServiceResponse export_annotations(const std::string& session_id, const std::string& format) const;

  /// Path of a session media file, for the transport to stream.
  std::filesystem::path media_path(const std::string& session_id, const std::string& kind) const;

  const SessionStore& store() const { return store_; }
  const ServiceConfig& config() const { return config_; }

 private:
  struct SkeletonCacheEntry;
  std::shared_ptr<const SkeletonTrack> cached_skeleton(const SessionManifest& manifest) const;

  SessionStore store_;
  ServiceConfig config_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, std::shared_ptr<SkeletonCacheEntry>> skeleton_cache_;
};

/// cpp-httplib transport for AnnotationService.
class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Throws Error{io} when the address cannot be bound. Port 0 picks a free port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  AnnotationService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace pianofinger
