#pragma once

#include <stdexcept>
#include <string>

namespace nepadd {

// Error categories map onto CLI exit codes (see tools/nepadd_cli.cpp).
enum class ErrorKind {
  Dimension,
  Contract,
  Domain,
  Config,
  Data,
  Numeric,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::Dimension, w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorKind::Contract, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

}  // namespace nepadd
