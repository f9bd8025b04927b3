#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace q2d {

// Root of every error the library raises. Callers that only need to report
// can catch this; callers that need to react (retry, skip, abort) catch the
// specific subclasses below.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied an argument that violates a precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// A dataset file contains a malformed or conflicting record.
class DataError : public Error {
 public:
  DataError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), path_(path), line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

// Network-level failure: connection refused, timeout, non-2xx status.
// Distinct from ProtocolError so the pipeline knows what is worth retrying.
class TransportError : public Error {
 public:
  using Error::Error;
};

// A remote peer answered, but with a body that breaks the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// The configured provider cannot perform the requested operation at all.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Replay backend has no recording for a request.
class ReplayMissError : public Error {
 public:
  explicit ReplayMissError(const std::string& key)
      : Error("no recorded completion for request " + key), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// A completion could not be turned into a dialog.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// I/O failure on a named path.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what) : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace q2d
