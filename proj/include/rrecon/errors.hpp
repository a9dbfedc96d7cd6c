#ifndef RRECON_ERRORS_HPP
#define RRECON_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rrecon {

// Bad parameters, malformed or unknown configuration keys.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Missing/unreadable files, malformed artifacts, manifest hash mismatches.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values, empty systems, iterations that fail to converge.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rrecon

#endif  // RRECON_ERRORS_HPP
