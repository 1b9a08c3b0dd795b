#pragma once

#include <stdexcept>
#include <string>

namespace dgrc {

// Every failure the pipeline can signal, so callers can branch on kind
// instead of parsing messages.
enum class ErrorKind {
  invalid_config,
  invalid_input,
  transport_error,
  provider_refusal,
  cache_corruption,
  unsupported_capability,
  empty_continuation,
  dimension_mismatch,
  mock_fixture_miss,
  judge_protocol_error,
  parse_error,
  format_error,
  alignment_error,
  score_range_error,
  degenerate_score,
  missing_predecessor,
  store_inconsistency,
  config_hash_mismatch,
  no_verified_chain,
};

const char* to_string(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const { return kind_; }
  const std::string& message() const { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace dgrc
