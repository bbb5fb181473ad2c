#ifndef PENTROPY_ERROR_HPP
#define PENTROPY_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pentropy {

enum class ErrorKind {
    SingularPoint,
    OutOfDomain,
    NoBranchRule,
    RootFindingFailure,
    EmptySet,
    SingularOrbit,
    DegenerateJacobian,
    TooShort,
    NoGap,
    IllConditionedFrame,
    NonPositiveInput,
    HypothesisViolated,
    NewtonDivergence,
    DomainCollapse,
    RadiusTooLarge,
    ZeroDimensional,
    FullDimensional,
    ResolutionTooLow,
    SingularLinearPart,
    TreeBudgetExceeded,
    BudgetExceeded,
    InsufficientOrbit,
    EmptyInput,
    DegenerateTransversal,
    TooFewPoints,
    ParseError,
    ValidationError,
    IoError,
};

const char* error_kind_name(ErrorKind k);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

} // namespace pentropy

#endif
