#ifndef FUSEREG_ERRORS_HPP
#define FUSEREG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fusereg {

/// Base class for all errors raised by this library. The category string is
/// stable and machine-readable; what() carries the human-readable detail.
class Error : public std::runtime_error {
public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(category + ": " + msg), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

private:
  std::string category_;
};

#define FUSEREG_DEFINE_ERROR(Name)                                            \
  class Name : public Error {                                                 \
  public:                                                                     \
    explicit Name(const std::string& msg) : Error(#Name, msg) {}              \
  }

// data_model
FUSEREG_DEFINE_ERROR(SchemaError);
FUSEREG_DEFINE_ERROR(PatternError);
FUSEREG_DEFINE_ERROR(ParseError);
FUSEREG_DEFINE_ERROR(IoError);

// model_zoo
FUSEREG_DEFINE_ERROR(IndexError);
FUSEREG_DEFINE_ERROR(SeparationError);
FUSEREG_DEFINE_ERROR(SingularError);
FUSEREG_DEFINE_ERROR(RankError);

// el_calibration
FUSEREG_DEFINE_ERROR(DegenerateConstraintError);
FUSEREG_DEFINE_ERROR(NoInteriorSolutionError);
FUSEREG_DEFINE_ERROR(SingularHessianError);
FUSEREG_DEFINE_ERROR(NonpositiveSlackError);

// estimators
FUSEREG_DEFINE_ERROR(DimensionError);
FUSEREG_DEFINE_ERROR(NonconvergenceError);
FUSEREG_DEFINE_ERROR(SingularJacobianError);

// inference
FUSEREG_DEFINE_ERROR(SingularMatrixError);

// cli_app
FUSEREG_DEFINE_ERROR(ConfigError);

#undef FUSEREG_DEFINE_ERROR

} // namespace fusereg

#endif
