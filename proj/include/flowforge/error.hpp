#ifndef FLOWFORGE_ERROR_HPP
#define FLOWFORGE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace flowforge {

enum class ErrorCode {
  BadMagic,
  Truncated,
  BadDims,
  DimMismatch,
  OutOfRange,
  ShapeMismatch,
  MissingScale,
  EmptyMask,
  BadBins,
  BadParams,
  IoError,
  BadSpec,
  BadScale,
  BadPlan,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flowforge

#endif  // FLOWFORGE_ERROR_HPP
