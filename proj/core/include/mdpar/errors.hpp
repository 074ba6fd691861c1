#pragma once

#include <stdexcept>
#include <string>

namespace mdpar {

// Error taxonomy shared across the library. `code()` is stable and
// machine-greppable; the CLI prints failures as "error[<code>]: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};
struct DataError : Error {
  explicit DataError(const std::string& m) : Error("data", m) {}
};
struct RoutingError : Error {
  explicit RoutingError(const std::string& m) : Error("routing", m) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error("contract", m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};
struct CorruptionError : Error {
  explicit CorruptionError(const std::string& m) : Error("corruption", m) {}
};

}  // namespace mdpar
