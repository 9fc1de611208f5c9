#pragma once

#include <stdexcept>
#include <string>

namespace bellamy {

// Broad failure classes. The CLI maps each class onto a distinct exit code.
enum class ErrorKind {
  shape,
  non_finite,
  capacity,
  config,
  data,
  insufficient_data,
  schema,
  corrupt_file,
  version,
  training,
  io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace bellamy
