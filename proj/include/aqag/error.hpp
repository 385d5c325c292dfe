#pragma once

#include <stdexcept>
#include <string>

namespace aqag {

// Base for every error the toolkit raises. The CLI maps subclasses to exit
// codes: IoError and NetworkError -> 1, everything else -> 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable/unwritable file.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input that does not follow a declared file layout.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t row = 0)
      : Error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}

  // 1-based data row (0 when not row-specific).
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_ = 0;
};

// A violated precondition or invariant on caller-supplied values.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Transport-level failure talking to the inference service (after retries).
class NetworkError : public Error {
 public:
  using Error::Error;
};

// The service answered with a non-success status.
class HttpStatusError : public Error {
 public:
  HttpStatusError(int status, std::string body)
      : Error("inference service returned HTTP " + std::to_string(status) +
              (body.empty() ? std::string{} : ": " + body)),
        status_(status),
        body_(std::move(body)) {}

  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

// The service lacks a capability a call needs (logprobs, embeddings), or
// answered with a payload that breaks the wire contract.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace aqag
