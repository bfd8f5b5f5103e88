#pragma once

#include <stdexcept>
#include <string>

namespace monodiff {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class NonFiniteInput : public Error {
public:
    explicit NonFiniteInput(const std::string& what) : Error(what) {}
};

/// A scalar root/bracket search exhausted its iteration budget.
class NoConvergence : public Error {
public:
    explicit NoConvergence(const std::string& what) : Error(what) {}
};

class QuadratureFailure : public Error {
public:
    explicit QuadratureFailure(const std::string& what) : Error(what) {}
};

/// A potential evaluated to +inf on its probe grid (domain deficiency).
class DomainViolation : public Error {
public:
    explicit DomainViolation(const std::string& what) : Error(what) {}
};

class OperatorMismatch : public Error {
public:
    explicit OperatorMismatch(const std::string& what) : Error(what) {}
};

class SizeLimit : public Error {
public:
    explicit SizeLimit(const std::string& what) : Error(what) {}
};

/// Hilbert-Schmidt partial sums failed the Cauchy tail test.
class Divergent : public Error {
public:
    explicit Divergent(const std::string& what) : Error(what) {}
};

class GammaViolation : public Error {
public:
    explicit GammaViolation(const std::string& what) : Error(what) {}
};

/// The implicit-step inner iteration did not reach tolerance.
class InnerNoConvergence : public Error {
public:
    InnerNoConvergence(const std::string& what, double residual)
        : Error(what), residual_h_minus1(residual) {}
    double residual_h_minus1;
};

/// Successive lambda-continuation distances failed to shrink.
class ScheduleTooCoarse : public Error {
public:
    explicit ScheduleTooCoarse(const std::string& what) : Error(what) {}
};

/// Picard iterate ratios stayed at or above one.
class NoContraction : public Error {
public:
    explicit NoContraction(const std::string& what) : Error(what) {}
};

class MissingNoiseLedger : public Error {
public:
    explicit MissingNoiseLedger(const std::string& what) : Error(what) {}
};

class ConfigInvalid : public Error {
public:
    explicit ConfigInvalid(const std::string& what) : Error(what) {}
};

class ReproMismatch : public Error {
public:
    explicit ReproMismatch(const std::string& what) : Error(what) {}
};

} // namespace monodiff
