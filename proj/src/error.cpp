#include "pianofinger/error.hpp"

namespace pianofinger {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse_error";
    case ErrorKind::unsupported_format: return "unsupported_format";
    case ErrorKind::unsupported_codec: return "unsupported_codec";
    case ErrorKind::degenerate_signal: return "degenerate_signal";
    case ErrorKind::calibration_incomplete: return "calibration_incomplete";
    case ErrorKind::invalid_keystone: return "invalid_keystone";
    case ErrorKind::no_region: return "no_region";
    case ErrorKind::invalid_landmark_count: return "invalid_landmark_count";
    case ErrorKind::duplicate_hand: return "duplicate_hand";
    case ErrorKind::invalid_payload: return "invalid_payload";
    case ErrorKind::malformed_payload: return "malformed_payload";
    case ErrorKind::unsupported_version: return "unsupported_version";
    case ErrorKind::incomplete_session: return "incomplete_session";
    case ErrorKind::id_collision: return "id_collision";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::stale_edit: return "stale_edit";
    case ErrorKind::precondition_failed: return "precondition_failed";
    case ErrorKind::validation: return "validation_error";
    case ErrorKind::io: return "io_error";
  }
  return "unknown";
}

}  // namespace pianofinger
