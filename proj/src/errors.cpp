#include "koala/errors.hpp"

namespace koala {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidInput: return "E_INVALID_INPUT";
    case ErrorCode::Dimension: return "E_DIMENSION";
    case ErrorCode::Format: return "E_FORMAT";
    case ErrorCode::Fit: return "E_FIT";
    case ErrorCode::Infeasible: return "E_INFEASIBLE";
    case ErrorCode::GammaUndefined: return "E_GAMMA_UNDEFINED";
    case ErrorCode::Train: return "E_TRAIN";
    case ErrorCode::Io: return "E_IO";
  }
  return "E_UNKNOWN";
}

}  // namespace koala
