#include "nepadd/errors.hpp"

namespace nepadd {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace nepadd
