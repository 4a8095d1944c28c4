#pragma once

#include <stdexcept>
#include <string>

namespace mfgjump {

/// Invalid grid, table shape or kernel configuration.
class GridError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid model or solver parameters.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Forward propagation pushed more mass than allowed past the grid boundary.
class BoundaryMassError : public std::runtime_error {
public:
    BoundaryMassError(double clamped, double threshold)
        : std::runtime_error("boundary-clamped mass " + std::to_string(clamped) +
                             " exceeds threshold " + std::to_string(threshold)),
          clamped_mass(clamped) {}
    double clamped_mass;
};

}  // namespace mfgjump
