#include "pentropy/error.hpp"
namespace pentropy {
const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::SingularPoint: return "SingularPoint";
        case ErrorKind::OutOfDomain: return "OutOfDomain";
        case ErrorKind::NoBranchRule: return "NoBranchRule";
        case ErrorKind::RootFindingFailure: return "RootFindingFailure";
        case ErrorKind::EmptySet: return "EmptySet";
        case ErrorKind::SingularOrbit: return "SingularOrbit";
        case ErrorKind::DegenerateJacobian: return "DegenerateJacobian";
        case ErrorKind::TooShort: return "TooShort";
        case ErrorKind::NoGap: return "NoGap";
        case ErrorKind::IllConditionedFrame: return "IllConditionedFrame";
        case ErrorKind::NonPositiveInput: return "NonPositiveInput";
        case ErrorKind::HypothesisViolated: return "HypothesisViolated";
        case ErrorKind::NewtonDivergence: return "NewtonDivergence";
        case ErrorKind::DomainCollapse: return "DomainCollapse";
        case ErrorKind::RadiusTooLarge: return "RadiusTooLarge";
        case ErrorKind::ZeroDimensional: return "ZeroDimensional";
        case ErrorKind::FullDimensional: return "FullDimensional";
        case ErrorKind::ResolutionTooLow: return "ResolutionTooLow";
        case ErrorKind::SingularLinearPart: return "SingularLinearPart";
        case ErrorKind::TreeBudgetExceeded: return "TreeBudgetExceeded";
        case ErrorKind::BudgetExceeded: return "BudgetExceeded";
        case ErrorKind::InsufficientOrbit: return "InsufficientOrbit";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::DegenerateTransversal: return "DegenerateTransversal";
        case ErrorKind::TooFewPoints: return "TooFewPoints";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::ValidationError: return "ValidationError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Error";
}
}
