#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ppde {

// Base of every library error. Callers that only need a diagnostic can catch
// this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownSymbol : public Error {
 public:
  UnknownSymbol(std::size_t position, char symbol)
      : Error("unknown symbol '" + std::string(1, symbol) + "' at position " +
              std::to_string(position)),
        position_(position),
        symbol_(symbol) {}

  std::size_t position() const noexcept { return position_; }
  char symbol() const noexcept { return symbol_; }

 private:
  std::size_t position_;
  char symbol_;
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class Unsupported : public Error {
 public:
  using Error::Error;
};

class ExternalExpertFailure : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class EmptyPool : public Error {
 public:
  using Error::Error;
};

class DegenerateSystem : public Error {
 public:
  using Error::Error;
};

class TooLargeToEnumerate : public Error {
 public:
  using Error::Error;
};

class NonFiniteState : public Error {
 public:
  using Error::Error;
};

class EmptyPopulation : public Error {
 public:
  using Error::Error;
};

class NonLinearExpertPresent : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

// Malformed input file (CSV columns, parameter containers, FASTA).
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error("parse error at line " + std::to_string(line) + ": " + reason),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& reason)
      : Error("invalid '" + field + "': " + reason), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ChainFailure : public Error {
 public:
  ChainFailure(std::size_t chain_id, const std::string& what)
      : Error("chain " + std::to_string(chain_id) + ": " + what),
        chain_id_(chain_id) {}
  std::size_t chain_id() const noexcept { return chain_id_; }

 private:
  std::size_t chain_id_;
};

}  // namespace ppde
