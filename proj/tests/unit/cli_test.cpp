#include "brute_correlation.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "pianofinger/annotation_service.hpp"
#include "pianofinger/pipeline.hpp"
#include "process.hpp"
#include "scene.hpp"

namespace pf = pianofinger;
using nlohmann::json;
using testsupport::TempDir;

namespace {

const std::string kCli = PIANOFINGER_CLI;

testsupport::RunResult cli(const std::vector<std::string>& args) { return testsupport::run(kCli, args); }

struct Ready {
  TempDir tmp;
  testsupport::SessionFixture inputs = testsupport::write_session_inputs(tmp / "inputs");
  pf::SessionStore store = pf::SessionStore::create(tmp / "store");
  std::string dir;
  explicit Ready(bool calibrate = true) {
    testsupport::make_ready_session(store, inputs, "take", calibrate);
    dir = store.session_dir("take").string();
  }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).exit_code == 2);
  CHECK(cli({"frobnicate"}).exit_code == 2);
  CHECK(cli({"export", "x"}).exit_code == 2);
  CHECK(cli({"payload", "encode", "profile"}).exit_code == 2);
  CHECK(cli({"--help"}).exit_code == 0);
}

TEST_CASE("payload subcommands") {
  auto r = cli({"payload", "encode", "profile", "--profile-id", "ab12"});
  CHECK(r.exit_code == 0);
  CHECK(r.out == "PIAREC:1:PROFILE:ab12\n");
  r = cli({"payload", "decode", "PIAREC:1:STOP"});
  CHECK(r.exit_code == 0);
  CHECK(r.out == "kind: stop\n");
  r = cli({"payload", "decode", "PIAREC:2:PLAY"});
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("unsupported_version") != std::string::npos);
  CHECK(cli({"payload", "decode", "HELLO"}).exit_code == 3);
}

TEST_CASE("align reports the lag and writes it into the manifest") {
  TempDir tmp;
  const auto fx = testsupport::write_session_inputs(tmp / "inputs");

  auto r = cli({"align", "--midi", fx.midi.string(), "--reference", fx.audio_video.string(), "--other",
                fx.audio_daw.string(), "--manifest", (tmp / "m.json").string(), "--output", "json"});
  REQUIRE(r.exit_code == 0);
  auto out = json::parse(r.out);
  CHECK(out["lag_s"] == 0.0);
  CHECK(out["lag_samples"] == 0);
  CHECK(out["notes"] == 4);
  const auto m = pf::read_manifest_file(tmp / "m.json");
  REQUIRE(m.sync.has_value());
  CHECK(m.sync->lag_samples == 0);
  CHECK(m.sync->reference == "video_audio");

  // DAW capture starts 2205 samples (50 ms) after the video audio
  const auto ref = testsupport::noise(11025, 77);
  pf::AudioBuffer daw{testsupport::shifted(ref.samples, 2205), 44100};
  pf::write_wav_file(ref, (tmp / "ref.wav").string(), pf::WavEncoding::float32);
  pf::write_wav_file(daw, (tmp / "daw.wav").string(), pf::WavEncoding::float32);
  const auto expected = oracle::brute_force_lag(ref.samples, daw.samples);
  REQUIRE(expected.lag == 2205);
  r = cli({"align", "--midi", fx.midi.string(), "--reference", (tmp / "ref.wav").string(), "--other",
           (tmp / "daw.wav").string(), "--manifest", (tmp / "m2.json").string(), "--trimmed-midi",
           (tmp / "trimmed.mid").string()});
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("lag_samples: 2205") != std::string::npos);
  const auto m2 = pf::read_manifest_file(tmp / "m2.json");
  CHECK(m2.sync->lag_samples == expected.lag);
  CHECK(m2.sync->video_offset_s == doctest::Approx(-2205.0 / 44100));
  const auto trimmed = pf::read_midi_file((tmp / "trimmed.mid").string());
  REQUIRE(trimmed.notes.size() == 4);
  CHECK(trimmed.notes[1].onset_s == doctest::Approx(0.5 - 0.05).epsilon(1e-3));
}

TEST_CASE("align updates an existing session manifest in place") {
  Ready s;
  const auto manifest = (std::filesystem::path(s.dir) / "manifest.json").string();
  const auto r = cli({"align", "--midi", s.inputs.midi.string(), "--reference", s.inputs.audio_video.string(),
                      "--other", s.inputs.audio_daw.string(), "--manifest", manifest});
  REQUIRE(r.exit_code == 0);
  const auto m = s.store.load_manifest("take");
  CHECK(m.session_id == "take");
  CHECK(m.sync.has_value());
  CHECK(m.files.keystones == "keystones.json");
}

TEST_CASE("align failures") {
  TempDir tmp;
  const auto fx = testsupport::write_session_inputs(tmp / "inputs");
  pf::write_wav_file({std::vector<double>(4410, 0.0), 44100}, (tmp / "silent.wav").string());
  auto r = cli({"align", "--midi", fx.midi.string(), "--reference", fx.audio_video.string(), "--other",
                (tmp / "silent.wav").string(), "--manifest", (tmp / "m.json").string()});
  CHECK(r.exit_code == 5);
  CHECK(r.err.find("degenerate_signal") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(tmp / "m.json"));

  testsupport::write_text(tmp / "junk.wav", "RIFF....WAVEjunk");
  r = cli({"align", "--midi", fx.midi.string(), "--reference", fx.audio_video.string(), "--other",
           (tmp / "junk.wav").string(), "--manifest", (tmp / "m.json").string()});
  CHECK(r.exit_code == 3);
  r = cli({"align", "--midi", (tmp / "missing.mid").string(), "--reference", fx.audio_video.string(), "--other",
           fx.audio_daw.string(), "--manifest", (tmp / "m.json").string()});
  CHECK(r.exit_code == 2);
}

TEST_CASE("prelabel command") {
  Ready s;
  auto r = cli({"prelabel", s.dir});
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("notes: 4") != std::string::npos);
  r = cli({"prelabel", s.dir, "--output", "json"});
  REQUIRE(r.exit_code == 0);
  CHECK(json::parse(r.out)["auto"] == 2);

  Ready raw(false);
  r = cli({"prelabel", raw.dir});
  CHECK(r.exit_code == 5);
  CHECK(r.err.find("keystones") != std::string::npos);

  CHECK(cli({"prelabel", raw.tmp.path().string()}).exit_code == 4);
}

TEST_CASE("prelabel on an empty performance") {
  Ready s;
  pf::write_midi_file(pf::MidiPerformance{}, s.inputs.midi.string());
  const auto r = cli({"prelabel", s.dir, "--output", "json"});
  REQUIRE(r.exit_code == 0);
  CHECK(json::parse(r.out)["total"] == 0);
  CHECK(s.store.load_annotations("take").empty());
}

TEST_CASE("export command") {
  Ready s;
  REQUIRE(cli({"prelabel", s.dir}).exit_code == 0);
  const auto out = s.tmp / "labels.csv";
  auto r = cli({"export", s.dir, "--format", "labels", "--out", out.string()});
  REQUIRE(r.exit_code == 0);
  const auto text = testsupport::read_text(out);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  CHECK(text == pf::export_session(s.store, "take", pf::ExportFormat::labels));

  CHECK(cli({"export", s.dir, "--format", "xlsx", "--out", out.string()}).exit_code == 2);
  CHECK(cli({"export", s.dir, "--format", "full", "--out", (s.tmp / "no/such/dir/x.csv").string()}).exit_code == 4);
}

TEST_CASE("profile, session and calibrate commands build a ready session") {
  TempDir tmp;
  const auto fx = testsupport::write_session_inputs(tmp / "inputs");
  const auto store = (tmp / "store").string();
  auto r = cli({"profile", "--store", store, "--name", "Clara", "--hand", "right"});
  REQUIRE(r.exit_code == 0);
  const auto profile_id = r.out.substr(0, r.out.find('\n'));
  CHECK(r.out.find("PIAREC:1:PROFILE:" + profile_id) != std::string::npos);

  r = cli({"session", "--store", store, "--profile", profile_id, "--id", "etude", "--midi", fx.midi.string(),
           "--audio-video", fx.audio_video.string(), "--skeleton", fx.skeleton.string(), "--tag", "key=C",
           "--title", "Etude"});
  REQUIRE(r.exit_code == 0);
  const auto dir = r.out.substr(0, r.out.find('\n'));
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "manifest.json"));

  r = cli({"session", "--store", store, "--profile", profile_id, "--id", "etude", "--midi", fx.midi.string(),
           "--audio-video", fx.audio_video.string()});
  CHECK(r.exit_code == 6);
  r = cli({"session", "--store", store, "--profile", profile_id, "--midi", fx.midi.string()});
  CHECK(r.exit_code == 5);

  CHECK(cli({"calibrate", dir, "--keystones", fx.keystones.string()}).exit_code == 0);
  r = cli({"prelabel", dir, "--output", "json"});
  REQUIRE(r.exit_code == 0);
  CHECK(json::parse(r.out)["single"] == 2);
}

TEST_CASE("serve command") {
  TempDir tmp;
  CHECK(cli({"serve", "--store", (tmp / "absent").string(), "--bind", "127.0.0.1:0"}).exit_code == 4);
  CHECK(cli({"serve", "--store", tmp.path().string(), "--bind", "nonsense"}).exit_code == 2);

  Ready s;
  testsupport::Child server(kCli, {"serve", "--store", (s.tmp / "store").string(), "--bind", "127.0.0.1:0"});
  const auto line = server.read_line();
  REQUIRE(line.rfind("listening on http://127.0.0.1:", 0) == 0);
  const int port = std::stoi(line.substr(line.rfind(':') + 1));
  httplib::Client c("127.0.0.1", port);
  auto res = c.Get("/api/v1/sessions");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["sessions"][0]["session_id"] == "take");

  // a second server on the same port must refuse to start
  CHECK(cli({"serve", "--store", (s.tmp / "store").string(), "--bind", "127.0.0.1:" + std::to_string(port)})
            .exit_code == 4);
  CHECK(server.terminate() == 0);
}

TEST_CASE("CLI and service write byte-identical annotation documents") {
  TempDir tmp;
  const auto fx = testsupport::write_session_inputs(tmp / "inputs");
  auto via_cli = pf::SessionStore::create(tmp / "a");
  auto via_http = pf::SessionStore::create(tmp / "b");
  testsupport::make_ready_session(via_cli, fx, "take");
  testsupport::make_ready_session(via_http, fx, "take");

  REQUIRE(cli({"prelabel", via_cli.session_dir("take").string()}).exit_code == 0);
  pf::AnnotationService svc(via_http);
  REQUIRE(svc.trigger_prelabel("take").status == 200);

  const auto a = testsupport::read_bytes(via_cli.session_dir("take") / "annotations.json");
  const auto b = testsupport::read_bytes(via_http.session_dir("take") / "annotations.json");
  CHECK(!a.empty());
  CHECK(a == b);
}
