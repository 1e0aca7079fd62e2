#pragma once

#include <stdexcept>
#include <string>

namespace bsrkit {

enum class ErrorCode {
  kInvalidArgument,
  kMalformedHeader,
  kUnsupportedEncoding,
  kTruncatedData,
  kIo,
  kCorruptFile,
  kEmptyInput,
  kDimensionMismatch,
  kNonFinite,
  kAlignment,
  kTraining,
  kConfig,
};

const char* error_code_name(ErrorCode code) noexcept;

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bsrkit
