#pragma once

#include <stdexcept>
#include <string>

namespace graphre {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct SplitError : Error {
  using Error::Error;
};

struct GenerationError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  using Error::Error;
};

struct AttackError : Error {
  using Error::Error;
};

struct MetricError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace graphre
