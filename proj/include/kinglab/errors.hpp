#ifndef KINGLAB_ERRORS_HPP
#define KINGLAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kinglab {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// steady-state construction
class DepthNeverVanishes : public Error { public: using Error::Error; };
class NonMonotonePotential : public Error { public: using Error::Error; };

// orbit geometry
class BracketFailure : public Error { public: using Error::Error; };
class NoOrbit : public Error { public: using Error::Error; };
class QuadratureNonConvergence : public Error { public: using Error::Error; };

// functionals
class DomainError : public Error { public: using Error::Error; };
class GridCoverageError : public Error { public: using Error::Error; };

// perturbations
class FlowBlowup : public Error { public: using Error::Error; };

// stability form
class SupportViolation : public Error { public: using Error::Error; };
class ParityViolation : public Error { public: using Error::Error; };
class OrthogonalityViolation : public Error { public: using Error::Error; };

// simulation
class RejectionStarvation : public Error { public: using Error::Error; };
class StepBlowup : public Error { public: using Error::Error; };

// I/O and configuration
class ConfigError : public Error { public: using Error::Error; };
class SnapshotError : public Error { public: using Error::Error; };

} // namespace kinglab

#endif
