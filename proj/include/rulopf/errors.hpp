#pragma once

#include <stdexcept>
#include <string>

namespace rulopf {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define RULOPF_DEFINE_ERROR(NAME)                                              \
    struct NAME : Error {                                                      \
        using Error::Error;                                                    \
    }

// cell
RULOPF_DEFINE_ERROR(ParamError);
RULOPF_DEFINE_ERROR(RangeError);
RULOPF_DEFINE_ERROR(AlreadyDead);
RULOPF_DEFINE_ERROR(NonTerminating);

// mc
RULOPF_DEFINE_ERROR(IndexError);

// stats
RULOPF_DEFINE_ERROR(DegenerateInput);
RULOPF_DEFINE_ERROR(RankDeficient);
RULOPF_DEFINE_ERROR(OutOfDomain);

// region
RULOPF_DEFINE_ERROR(Infeasible);

// case parsing
RULOPF_DEFINE_ERROR(SchemaError);
RULOPF_DEFINE_ERROR(ValidationError);
RULOPF_DEFINE_ERROR(UnknownBus);

// solvers
RULOPF_DEFINE_ERROR(Diverged);
RULOPF_DEFINE_ERROR(SingularJacobian);
RULOPF_DEFINE_ERROR(SingularKkt);
RULOPF_DEFINE_ERROR(MissingConstraints);

#undef RULOPF_DEFINE_ERROR

// Parse failure with source location attached.
struct ParseError : Error {
    ParseError(const std::string& msg, int line, int column)
        : Error("parse error at line " + std::to_string(line) + ", column " +
                std::to_string(column) + ": " + msg),
          line(line), column(column) {}
    int line;
    int column;
};

} // namespace rulopf
