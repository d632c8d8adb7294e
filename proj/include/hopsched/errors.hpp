#pragma once

#include <stdexcept>
#include <string>

namespace hopsched {

/// Window or allocation request exceeds the idle capacity at hand.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// No feasible assignment exists for the given model.
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad configuration value or malformed config/workload file.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A caller broke an interface contract (e.g. fully-masked action space).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

/// Serialized artifact failed validation (bad magic, shape or checksum).
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Policy-gradient training produced non-finite statistics.
struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hopsched
