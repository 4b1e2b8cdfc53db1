/// @file
/// @brief Text payloads carried by the recorder's Profile / Play / Stop QR codes.
///
/// Grammar (bit-exact):  PIAREC:1:PROFILE:<profile_id> | PIAREC:1:PLAY | PIAREC:1:STOP
/// profile_id is 1-64 characters from [A-Za-z0-9_-].

#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace pianofinger {

enum class ControlKind { profile, play, stop };

struct ControlPayload {
  ControlKind kind = ControlKind::play;
  std::optional<std::string> profile_id;  // present iff kind == profile
  int version = 1;

  bool operator==(const ControlPayload&) const = default;
};

bool is_valid_identifier(std::string_view id);

/// Throws Error{invalid_payload} for a Profile without a valid id, or an id on Play/Stop.
std::string encode_control_payload(const ControlPayload& payload);

/// Throws Error{malformed_payload} naming the failing segment, or
/// Error{unsupported_version} for a well-formed but unknown version.
ControlPayload decode_control_payload(std::string_view text);

}  // namespace pianofinger
