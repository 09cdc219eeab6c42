#pragma once

#include <stdexcept>
#include <string>

namespace sdr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data: corpus lines, profiles, configs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Model output that cannot be interpreted (bad JSON, out-of-scale score).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Network / backend failure after retries.
class TransportError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sdr
