#pragma once

#include <stdexcept>
#include <string>

namespace ecglink {

// Base of every error the library throws. Subclasses name the failure class so
// callers (notably the CLI) can map them onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ECGLINK_DEFINE_ERROR(Name)              \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

ECGLINK_DEFINE_ERROR(DimensionError);
ECGLINK_DEFINE_ERROR(NumericalError);
ECGLINK_DEFINE_ERROR(LabelError);
ECGLINK_DEFINE_ERROR(ScheduleError);
ECGLINK_DEFINE_ERROR(ParameterError);
ECGLINK_DEFINE_ERROR(ConfigError);
ECGLINK_DEFINE_ERROR(CalibrationError);
ECGLINK_DEFINE_ERROR(InputError);
ECGLINK_DEFINE_ERROR(MetricError);
ECGLINK_DEFINE_ERROR(IngestionError);
ECGLINK_DEFINE_ERROR(IntegrityError);
ECGLINK_DEFINE_ERROR(IoError);

#undef ECGLINK_DEFINE_ERROR

}  // namespace ecglink
