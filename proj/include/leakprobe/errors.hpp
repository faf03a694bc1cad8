#pragma once

#include <stdexcept>
#include <string>

namespace leakprobe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prompt plus requested tokens do not fit the backend context window.
class ContextOverflow : public Error {
 public:
  using Error::Error;
};

/// Rendering a template did not survive a tokenizer round trip; the
/// adversarial slice cannot be trusted.
class TemplateIncompatible : public Error {
 public:
  using Error::Error;
};

/// Text that cannot be expressed with the vocabulary.
class TokenizeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by a backend.
class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A judge response that does not contain a usable verdict object.
class MalformedVerdict : public Error {
 public:
  MalformedVerdict(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Transport-level judge failure (timeout, 5xx, 429, ...). Retryable.
class JudgeTransportError : public Error {
 public:
  JudgeTransportError(const std::string& what, int status = 0)
      : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// A campaign was interrupted; completed work has been checkpointed.
class Interrupted : public Error {
 public:
  using Error::Error;
};

}  // namespace leakprobe
