#pragma once

#include <stdexcept>
#include <string>

namespace exact {

// Error taxonomy shared by the library and the CLI. Exit codes:
// 0 success, 2 config error, 3 I/O error, 4 numeric failure, 5 gradcheck failure.
enum class ErrCode {
  config_invalid,
  shape_mismatch,
  io,
  ckpt_not_found,
  bad_magic,
  parse,
  numeric,
  gradcheck,
};

class Error : public std::runtime_error {
 public:
  Error(ErrCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}

  ErrCode code() const { return code_; }

  const char* code_name() const {
    switch (code_) {
      case ErrCode::config_invalid: return "E_CONFIG_INVALID";
      case ErrCode::shape_mismatch: return "E_SHAPE_MISMATCH";
      case ErrCode::io: return "E_IO";
      case ErrCode::ckpt_not_found: return "E_CKPT_NOT_FOUND";
      case ErrCode::bad_magic: return "E_BAD_MAGIC";
      case ErrCode::parse: return "E_PARSE";
      case ErrCode::numeric: return "E_NUMERIC";
      case ErrCode::gradcheck: return "E_GRADCHECK";
    }
    return "E_UNKNOWN";
  }

  int exit_code() const {
    switch (code_) {
      case ErrCode::config_invalid:
      case ErrCode::shape_mismatch: return 2;
      case ErrCode::io:
      case ErrCode::ckpt_not_found:
      case ErrCode::bad_magic:
      case ErrCode::parse: return 3;
      case ErrCode::numeric: return 4;
      case ErrCode::gradcheck: return 5;
    }
    return 1;
  }

 private:
  ErrCode code_;
};

[[noreturn]] inline void fail(ErrCode code, const std::string& msg) { throw Error(code, msg); }

}  // namespace exact
