#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace palmscan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input outside an operation's mathematical domain (bad latitude, empty list...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A backend spoke something that is not the line protocol.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string offending_line)
      : Error(what + ": " + offending_line), line_(std::move(offending_line)) {}
  const std::string& offending_line() const noexcept { return line_; }

 private:
  std::string line_;
};

// Backend missing, failed handshake, or unusable.
class BackendError : public Error {
 public:
  using Error::Error;
};

class PersistenceError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Imagery provider refused or failed (quota, auth, transport).
class ProviderError : public Error {
 public:
  using Error::Error;
};

}  // namespace palmscan
