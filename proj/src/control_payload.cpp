#include "pianofinger/control_payload.hpp"

#include <algorithm>
#include <cctype>
#include <vector>

#include "pianofinger/error.hpp"

namespace pianofinger {
namespace {

constexpr std::string_view kPrefix = "PIAREC";
constexpr int kVersion = 1;

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return parts;
    start = pos + 1;
  }
}

[[noreturn]] void malformed(std::string_view segment, const std::string& what) {
  throw Error(ErrorKind::malformed_payload, "control payload: bad " + std::string(segment) + " segment: " + what);
}

}  // namespace

bool is_valid_identifier(std::string_view id) {
  return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

std::string encode_control_payload(const ControlPayload& payload) {
  if (payload.version != kVersion) {
    throw Error(ErrorKind::invalid_payload, "control payload: version must be " + std::to_string(kVersion));
  }
  std::string out = std::string(kPrefix) + ":" + std::to_string(kVersion) + ":";
  switch (payload.kind) {
    case ControlKind::profile:
      if (!payload.profile_id || !is_valid_identifier(*payload.profile_id)) {
        throw Error(ErrorKind::invalid_payload, "control payload: PROFILE requires a valid profile_id");
      }
      return out + "PROFILE:" + *payload.profile_id;
    case ControlKind::play:
    case ControlKind::stop:
      if (payload.profile_id) throw Error(ErrorKind::invalid_payload, "control payload: only PROFILE carries a profile_id");
      return out + (payload.kind == ControlKind::play ? "PLAY" : "STOP");
  }
  throw Error(ErrorKind::invalid_payload, "control payload: unknown kind");
}

ControlPayload decode_control_payload(std::string_view text) {
  const auto parts = split(text, ':');
  if (parts[0] != kPrefix) malformed("prefix", "expected PIAREC");
  if (parts.size() < 2 || parts[1].empty() ||
      !std::all_of(parts[1].begin(), parts[1].end(), [](unsigned char c) { return std::isdigit(c); })) {
    malformed("version", "expected a decimal version number");
  }
  if (parts[1] != "1") {
    throw Error(ErrorKind::unsupported_version, "control payload: unsupported version " + std::string(parts[1]));
  }
  if (parts.size() < 3) malformed("kind", "missing");

  ControlPayload p;
  if (parts[2] == "PROFILE") {
    p.kind = ControlKind::profile;
    if (parts.size() != 4 || !is_valid_identifier(parts[3])) malformed("profile_id", "expected one [A-Za-z0-9_-]{1,64} id");
    p.profile_id = std::string(parts[3]);
  } else if (parts[2] == "PLAY" || parts[2] == "STOP") {
    p.kind = parts[2] == "PLAY" ? ControlKind::play : ControlKind::stop;
    if (parts.size() != 3) malformed("trailing", "unexpected data after " + std::string(parts[2]));
  } else {
    malformed("kind", "expected PROFILE, PLAY or STOP");
  }
  return p;
}

}  // namespace pianofinger
