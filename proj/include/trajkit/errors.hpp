#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trajkit {

// Base for every error the library throws on a violated contract.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// speed over a zero or negative time interval
struct ZeroOrNegativeInterval : Error {
  using Error::Error;
};

// GPX document that does not parse as XML
struct MalformedXml : Error {
  using Error::Error;
};

// GPX document from which no trajectory survives ingestion
struct NoUsablePoints : Error {
  using Error::Error;
};

// JSONL line violating the interchange schema; line is 1-based
struct SchemaViolation : Error {
  SchemaViolation(const std::string& what, std::size_t line_number)
      : Error("line " + std::to_string(line_number) + ": " + what), line(line_number) {}
  std::size_t line;
};

// input too short for the requested resample or mask
struct TooShort : Error {
  using Error::Error;
};

struct IndexMapMismatch : Error {
  using Error::Error;
};

struct EmptyDataset : Error {
  using Error::Error;
};

struct NonFiniteLoss : Error {
  using Error::Error;
};

struct LengthMismatch : Error {
  using Error::Error;
};

struct EmptyEvalSet : Error {
  using Error::Error;
};

}  // namespace trajkit
