#pragma once

#include <stdexcept>
#include <string>

namespace bwe {

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  InvalidArgument,
  MalformedWav,
  ShapeMismatch,
  VersionMismatch,
  MissingFile,
  MalformedControl,
  MalformedCheckpoint,
  UnstableFilter,
  Divergence,
  Config,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Process exit status for each kind; 1 is left for unexpected failures.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return 2;
    case ErrorKind::MalformedWav: return 3;
    case ErrorKind::ShapeMismatch: return 4;
    case ErrorKind::VersionMismatch: return 5;
    case ErrorKind::MissingFile: return 6;
    case ErrorKind::MalformedControl: return 7;
    case ErrorKind::MalformedCheckpoint: return 8;
    case ErrorKind::UnstableFilter: return 9;
    case ErrorKind::Divergence: return 10;
    case ErrorKind::Config: return 11;
  }
  return 1;
}

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::MalformedWav: return "malformed WAV";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::VersionMismatch: return "version mismatch";
    case ErrorKind::MissingFile: return "missing file";
    case ErrorKind::MalformedControl: return "malformed control";
    case ErrorKind::MalformedCheckpoint: return "malformed checkpoint";
    case ErrorKind::UnstableFilter: return "unstable filter";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Config: return "config";
  }
  return "?";
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  require(cond, ErrorKind::InvalidArgument, what);
}

} // namespace bwe
