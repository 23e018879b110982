#ifndef PEMB_ERRORS_HPP_
#define PEMB_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace pemb {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// ConfigError -> 3, NumericError/TrainingError -> 4, everything else -> 4.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MembershipError : std::runtime_error {
  explicit MembershipError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SamplingError : std::runtime_error {
  explicit SamplingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SplitError : std::runtime_error {
  explicit SplitError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateError : std::runtime_error {
  explicit DegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pemb

#endif  // PEMB_ERRORS_HPP_
