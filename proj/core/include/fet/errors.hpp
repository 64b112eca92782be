#pragma once

#include <stdexcept>
#include <string>

namespace fet {

// Base class of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or colliding type labels.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Inconsistent options, shapes or missing inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class RenderError : public Error {
 public:
  using Error::Error;
};

// A token the backend cannot map to an id.
class EncodeError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset, corpus or pair files.
class DataError : public Error {
 public:
  using Error::Error;
};

// The backend lacks a feature the run needs (e.g. registering new tokens).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// All type scores were zero, so no distribution can be formed.
class DegenerateScoresError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Sampling requests the data cannot satisfy.
class SamplingError : public Error {
 public:
  using Error::Error;
};

}  // namespace fet
