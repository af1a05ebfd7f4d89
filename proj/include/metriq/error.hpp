#pragma once

#include <stdexcept>
#include <string>

namespace metriq {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
    /// Short stable identifier, used by the CLI in its JSON error line.
    virtual const char *kind() const noexcept { return "error"; }
};

#define METRIQ_DEFINE_ERROR(Name, Tag)                                                             \
    class Name : public Error {                                                                    \
      public:                                                                                      \
        using Error::Error;                                                                        \
        const char *kind() const noexcept override { return Tag; }                                 \
    };

// Argument / precondition failures.
METRIQ_DEFINE_ERROR(InvalidDimension, "invalid-dimension")
METRIQ_DEFINE_ERROR(ContractViolation, "contract-violation")
METRIQ_DEFINE_ERROR(LabelRadiusError, "label-radius")
METRIQ_DEFINE_ERROR(CapacityError, "capacity")
METRIQ_DEFINE_ERROR(SingularMapError, "singular-map")
METRIQ_DEFINE_ERROR(ParseError, "parse")

// Refusals and numerical failures.
METRIQ_DEFINE_ERROR(FeasibilityRefusal, "feasibility-guard")

#undef METRIQ_DEFINE_ERROR

/// A trajectory left the finite doubles; `last_time` is the last time at which it was finite.
class DivergenceError : public Error {
  public:
    DivergenceError(const std::string &what, double last_time)
        : Error(what), last_time_(last_time) {}
    const char *kind() const noexcept override { return "divergence"; }
    double last_time() const noexcept { return last_time_; }

  private:
    double last_time_;
};

/// A Monte Carlo sample produced NaN; the (seed, index) pair reproduces it.
class PoisonedSampleError : public Error {
  public:
    PoisonedSampleError(const std::string &what, unsigned long long seed, unsigned long long index)
        : Error(what), seed_(seed), index_(index) {}
    const char *kind() const noexcept override { return "poisoned-sample"; }
    unsigned long long seed() const noexcept { return seed_; }
    unsigned long long index() const noexcept { return index_; }

  private:
    unsigned long long seed_;
    unsigned long long index_;
};

} // namespace metriq
