// Command-line entry points over the pianofinger library.
//
// Exit codes: 0 ok, 2 usage, 3 parse, 4 I/O, 5 domain/precondition, 6 edit conflict.

#include <pthread.h>
#include <signal.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pianofinger/annotation_service.hpp"
#include "pianofinger/audio.hpp"
#include "pianofinger/control_payload.hpp"
#include "pianofinger/error.hpp"
#include "pianofinger/pipeline.hpp"
#include "pianofinger/session_store.hpp"

namespace fs = std::filesystem;
using namespace pianofinger;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitParse = 3;
constexpr int kExitIo = 4;
constexpr int kExitDomain = 5;
constexpr int kExitConflict = 6;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse:
    case ErrorKind::unsupported_format:
    case ErrorKind::unsupported_codec:
    case ErrorKind::malformed_payload:
    case ErrorKind::unsupported_version:
      return kExitParse;
    case ErrorKind::io: return kExitIo;
    case ErrorKind::validation:
    case ErrorKind::invalid_payload: return kExitUsage;
    case ErrorKind::stale_edit:
    case ErrorKind::id_collision: return kExitConflict;
    default: return kExitDomain;
  }
}

// <root>/sessions/<id> -> (store, id)
std::pair<SessionStore, std::string> open_session_dir(const fs::path& dir) {
  const fs::path abs = fs::absolute(dir).lexically_normal();
  const fs::path clean = abs.has_filename() ? abs : abs.parent_path();
  if (!fs::exists(clean / "manifest.json")) {
    throw Error(ErrorKind::io, "not a session directory (no manifest.json): " + clean.string());
  }
  if (clean.parent_path().filename() != "sessions") {
    throw Error(ErrorKind::io, "session directory must live under <store>/sessions/: " + clean.string());
  }
  return {SessionStore::open(clean.parent_path().parent_path()), clean.filename().string()};
}

nlohmann::ordered_json stats_json(const AnnotationStats& s) {
  return {{"total", s.total},       {"auto", s.automatic}, {"needs_review", s.needs_review},
          {"verified", s.verified}, {"corrected", s.corrected}, {"single", s.single},
          {"multiple", s.multiple}, {"none", s.none}};
}

void print_stats(const AnnotationStats& s, bool json_output) {
  if (json_output) {
    std::cout << stats_json(s).dump() << "\n";
    return;
  }
  std::cout << "notes: " << s.total << "\n"
            << "  auto: " << s.automatic << "  needs_review: " << s.needs_review << "  verified: " << s.verified
            << "  corrected: " << s.corrected << "\n"
            << "  single: " << s.single << "  multiple: " << s.multiple << "  none: " << s.none << "\n";
}

struct AlignArgs {
  std::string midi, reference, other, manifest, trimmed_midi, output = "text";
};

int cmd_align(const AlignArgs& a) {
  const MidiPerformance perf = read_midi_file(a.midi);
  const AudioBuffer reference = read_wav_file(a.reference);
  const AudioBuffer other = read_wav_file(a.other);
  const SyncResult sync = cross_correlate_offset(reference, other);
  const SyncInfo info = make_sync_info(sync, other.sample_rate);

  SessionManifest manifest;
  if (fs::exists(a.manifest)) {
    manifest = read_manifest_file(a.manifest);
  } else {
    manifest.files.midi = fs::absolute(a.midi).lexically_normal().string();
    manifest.files.audio_video = fs::absolute(a.reference).lexically_normal().string();
    manifest.files.audio_daw = fs::absolute(a.other).lexically_normal().string();
    manifest.created_at = utc_timestamp();
  }
  manifest.sync = info;
  write_manifest_file(manifest, a.manifest);

  if (!a.trimmed_midi.empty()) write_midi_file(apply_offset_to_midi(perf, info.video_offset_s), a.trimmed_midi);

  if (a.output == "json") {
    std::cout << nlohmann::ordered_json{{"lag_s", info.lag_s},
                                        {"lag_samples", info.lag_samples},
                                        {"confidence", info.confidence},
                                        {"peak_correlation", info.peak_correlation},
                                        {"video_offset_s", info.video_offset_s},
                                        {"notes", perf.notes.size()}}
                     .dump()
              << "\n";
  } else {
    std::cout << "lag_s: " << info.lag_s << "\n"
              << "lag_samples: " << info.lag_samples << "\n"
              << "confidence: " << info.confidence << "\n"
              << "peak_correlation: " << info.peak_correlation << "\n"
              << "video_offset_s: " << info.video_offset_s << "\n";
  }
  return kExitOk;
}

int cmd_prelabel(const std::string& session_dir, bool json_output) {
  auto [store, id] = open_session_dir(session_dir);
  print_stats(run_prelabel(store, id), json_output);
  return kExitOk;
}

int cmd_export(const std::string& session_dir, const std::string& format, const std::string& out_path) {
  const ExportFormat fmt = export_format_from_string(format);
  auto [store, id] = open_session_dir(session_dir);
  const std::string doc = export_session(store, id, fmt);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open output file: " + out_path);
  out << doc;
  out.close();
  if (!out) throw Error(ErrorKind::io, "cannot write output file: " + out_path);
  return kExitOk;
}

struct ServeArgs {
  std::string store, bind = "127.0.0.1:8080", media_root, ui_root;
  std::size_t max_notes = 10000;
};

int cmd_serve(const ServeArgs& a) {
  const auto colon = a.bind.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::validation, "--bind must be host:port");
  const std::string host = a.bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(a.bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorKind::validation, "--bind port is not a number");
  }

  ServiceConfig config;
  config.max_prelabel_notes = a.max_notes;
  if (!a.media_root.empty()) config.media_root = a.media_root;
  if (!a.ui_root.empty()) config.ui_root = a.ui_root;
  AnnotationService service(SessionStore::open(a.store), config);
  HttpServer server(service);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const int bound = server.bind(host, port);
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.serve();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kExitOk;
}

struct CreateArgs {
  std::string store, profile, id, composer, title;
  std::vector<std::string> tags;
  SessionFiles files;
  double fps = 30.0;
};

int cmd_session_create(const CreateArgs& a) {
  auto store = SessionStore::create(a.store);
  SessionRequest req;
  req.profile_id = a.profile;
  req.piece.composer = a.composer;
  req.piece.title = a.title;
  for (const auto& t : a.tags) {
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::validation, "--tag expects key=value, got '" + t + "'");
    req.piece.tags[t.substr(0, eq)] = t.substr(eq + 1);
  }
  req.files = a.files;
  req.fps = a.fps;
  if (!a.id.empty()) req.session_id = a.id;
  const auto m = store.create_session(req);
  std::cout << store.session_dir(m.session_id).string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal piano-performance toolkit: sync, fingering pre-labeling, annotation service"};
  app.require_subcommand(1);

  AlignArgs align;
  auto* align_cmd = app.add_subcommand("align", "Estimate the audio offset and write it into a manifest");
  align_cmd->add_option("--midi", align.midi, "MIDI file recorded with the DAW audio")->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--reference", align.reference, "Reference WAV (audio track of the video)")->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--other", align.other, "DAW WAV capture")->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--manifest", align.manifest, "Manifest to update (created if missing)")->required();
  align_cmd->add_option("--trimmed-midi", align.trimmed_midi, "Also write the MIDI shifted onto the video timeline");
  align_cmd->add_option("--output", align.output, "text or json")->check(CLI::IsMember({"text", "json"}));

  std::string session_dir;
  std::string output = "text";
  auto* prelabel_cmd = app.add_subcommand("prelabel", "Compute fingering candidates for a session");
  prelabel_cmd->add_option("session_dir", session_dir, "<store>/sessions/<id>")->required();
  prelabel_cmd->add_option("--output", output, "text or json")->check(CLI::IsMember({"text", "json"}));

  std::string format, out_path;
  auto* export_cmd = app.add_subcommand("export", "Export annotations as CSV");
  export_cmd->add_option("session_dir", session_dir, "<store>/sessions/<id>")->required();
  export_cmd->add_option("--format", format, "full or labels")->required();
  export_cmd->add_option("--out", out_path, "Output path")->required();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the annotation HTTP service");
  serve_cmd->add_option("--store", serve.store, "Store root")->required()->envname("PIANOFINGER_STORE");
  serve_cmd->add_option("--bind", serve.bind, "host:port")->envname("PIANOFINGER_BIND");
  serve_cmd->add_option("--media-root", serve.media_root, "Directory served read-only at /media")->envname("PIANOFINGER_MEDIA_ROOT");
  serve_cmd->add_option("--ui-root", serve.ui_root, "Static UI bundle served at /");
  serve_cmd->add_option("--max-notes", serve.max_notes, "Largest performance pre-labeled synchronously");

  std::string profile_store, profile_name, profile_hand;
  auto* profile_cmd = app.add_subcommand("profile", "Register a performer profile");
  profile_cmd->add_option("--store", profile_store, "Store root")->required();
  profile_cmd->add_option("--name", profile_name, "Display name")->required();
  profile_cmd->add_option("--hand", profile_hand, "left or right")->check(CLI::IsMember({"left", "right"}));

  CreateArgs create;
  auto* session_cmd = app.add_subcommand("session", "Create a session in a store");
  session_cmd->add_option("--store", create.store, "Store root")->required();
  session_cmd->add_option("--profile", create.profile, "Performer profile id")->required();
  session_cmd->add_option("--id", create.id, "Session id (generated when omitted)");
  session_cmd->add_option("--midi", create.files.midi)->required();
  session_cmd->add_option("--audio-daw", create.files.audio_daw);
  session_cmd->add_option("--audio-video", create.files.audio_video);
  session_cmd->add_option("--video", create.files.video);
  session_cmd->add_option("--skeleton", create.files.skeleton);
  session_cmd->add_option("--fps", create.fps)->check(CLI::PositiveNumber);
  session_cmd->add_option("--composer", create.composer);
  session_cmd->add_option("--title", create.title);
  session_cmd->add_option("--tag", create.tags, "key=value, repeatable");

  std::string keystones_path;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Store a keystone calibration for a session");
  calibrate_cmd->add_option("session_dir", session_dir, "<store>/sessions/<id>")->required();
  calibrate_cmd->add_option("--keystones", keystones_path, "Calibration JSON")->required()->check(CLI::ExistingFile);

  std::string payload_text, payload_kind, payload_profile;
  auto* payload_cmd = app.add_subcommand("payload", "Encode or decode recorder control payloads");
  auto* encode_cmd = payload_cmd->add_subcommand("encode", "Print the payload text");
  encode_cmd->add_option("kind", payload_kind, "profile, play or stop")->required()->check(CLI::IsMember({"profile", "play", "stop"}));
  encode_cmd->add_option("--profile-id", payload_profile);
  auto* decode_cmd = payload_cmd->add_subcommand("decode", "Parse payload text");
  decode_cmd->add_option("text", payload_text)->required();
  payload_cmd->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*align_cmd) return cmd_align(align);
    if (*prelabel_cmd) return cmd_prelabel(session_dir, output == "json");
    if (*export_cmd) return cmd_export(session_dir, format, out_path);
    if (*serve_cmd) return cmd_serve(serve);
    if (*profile_cmd) {
      auto store = SessionStore::create(profile_store);
      std::optional<Handedness> hand;
      if (profile_hand == "left") hand = Handedness::left;
      if (profile_hand == "right") hand = Handedness::right;
      const auto p = store.register_profile(profile_name, hand);
      std::cout << p.profile_id << "\n" << encode_control_payload({ControlKind::profile, p.profile_id}) << "\n";
      return kExitOk;
    }
    if (*session_cmd) return cmd_session_create(create);
    if (*calibrate_cmd) {
      auto [store, id] = open_session_dir(session_dir);
      const auto layout = store.save_calibration(id, read_calibration_file(keystones_path));
      std::cout << "calibrated " << layout.regions.size() << " key regions\n";
      return kExitOk;
    }
    if (*encode_cmd) {
      ControlPayload p;
      p.kind = payload_kind == "profile" ? ControlKind::profile : payload_kind == "play" ? ControlKind::play : ControlKind::stop;
      if (!payload_profile.empty()) p.profile_id = payload_profile;
      std::cout << encode_control_payload(p) << "\n";
      return kExitOk;
    }
    if (*decode_cmd) {
      const auto p = decode_control_payload(payload_text);
      const char* kind = p.kind == ControlKind::profile ? "profile" : p.kind == ControlKind::play ? "play" : "stop";
      std::cout << "kind: " << kind << "\n";
      if (p.profile_id) std::cout << "profile_id: " << *p.profile_id << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
