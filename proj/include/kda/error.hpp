#pragma once

#include <stdexcept>
#include <string>

namespace kda {

// Categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  input = 2,
  backend = 3,
  incomplete_matrix = 4,
  analysis = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline Error input_error(const std::string& what) {
  return Error(ErrorKind::input, what);
}
inline Error analysis_error(const std::string& what) {
  return Error(ErrorKind::analysis, what);
}

}  // namespace kda
