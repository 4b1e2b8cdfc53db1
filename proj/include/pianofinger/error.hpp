#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pianofinger {

enum class ErrorKind {
  parse,
  unsupported_format,
  unsupported_codec,
  degenerate_signal,
  calibration_incomplete,
  invalid_keystone,
  no_region,
  invalid_landmark_count,
  duplicate_hand,
  invalid_payload,
  malformed_payload,
  unsupported_version,
  incomplete_session,
  id_collision,
  not_found,
  stale_edit,
  precondition_failed,
  validation,
  io,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-readable kind; every library failure throws this.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pianofinger
