#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cardstream {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
public:
  SyntaxError(std::size_t position, const std::string& message)
      : Error("syntax error at " + std::to_string(position) + ": " + message), position_(position) {}

  std::size_t position() const noexcept { return position_; }

private:
  std::size_t position_;
};

/// A rule or query failed to compile into an automaton.
class CompileError : public Error {
public:
  using Error::Error;
};

class MalformedXml : public Error {
public:
  using Error::Error;
};

class UnsupportedFeature : public Error {
public:
  using Error::Error;
};

/// An event stream is not balanced (close without open, or ends open).
class Unbalanced : public Error {
public:
  using Error::Error;
};

class BudgetExceeded : public Error {
public:
  using Error::Error;
};

class DictionaryOverflow : public Error {
public:
  using Error::Error;
};

class CorruptStream : public Error {
public:
  using Error::Error;
};

class BadChunkSize : public Error {
public:
  using Error::Error;
};

/// A MAC did not verify, or the stored layout does not match its header.
class IntegrityError : public Error {
public:
  using Error::Error;
};

class RangeError : public Error {
public:
  using Error::Error;
};

class TransportError : public Error {
public:
  using Error::Error;
};

class BindError : public Error {
public:
  using Error::Error;
};

}  // namespace cardstream
