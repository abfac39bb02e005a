#pragma once

#include <stdexcept>
#include <string>

namespace oiqa {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
    usage,      // bad flags or configuration keys
    data,       // malformed files, shape/input violations
    numerical,  // singularity, divergence, residue violations
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define OIQA_DEFINE_ERROR(Name, Kind)                                      \
    class Name : public Error {                                            \
    public:                                                                \
        explicit Name(const std::string& what) : Error(Kind, what) {}      \
    };

OIQA_DEFINE_ERROR(ShapeError, ErrorKind::data)
OIQA_DEFINE_ERROR(TypeError, ErrorKind::data)
OIQA_DEFINE_ERROR(InputError, ErrorKind::data)
OIQA_DEFINE_ERROR(FormatError, ErrorKind::data)
OIQA_DEFINE_ERROR(SizeError, ErrorKind::data)
OIQA_DEFINE_ERROR(NormalizationError, ErrorKind::data)
OIQA_DEFINE_ERROR(CorrelationError, ErrorKind::data)
OIQA_DEFINE_ERROR(ConfigError, ErrorKind::usage)
OIQA_DEFINE_ERROR(PruningError, ErrorKind::usage)
OIQA_DEFINE_ERROR(SymmetryError, ErrorKind::numerical)
OIQA_DEFINE_ERROR(InversionError, ErrorKind::numerical)
OIQA_DEFINE_ERROR(TrainingError, ErrorKind::numerical)
OIQA_DEFINE_ERROR(ConstructionError, ErrorKind::numerical)
OIQA_DEFINE_ERROR(GradientError, ErrorKind::numerical)

#undef OIQA_DEFINE_ERROR

}  // namespace oiqa
