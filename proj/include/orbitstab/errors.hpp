#ifndef ORBITSTAB_ERRORS_HPP_
#define ORBITSTAB_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace orbitstab {

// Base class for all toolkit errors so callers can catch in one place.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// An evaluator raised, returned non-finite values, or produced the wrong shape.
class EvaluatorFailure : public Error {
 public:
  using Error::Error;
};

// Problem data violates a construction-time invariant (R not SPD, bad orbit, ...).
class ValidationFailure : public Error {
 public:
  using Error::Error;
};

// Adaptive integration could not reach the requested time (step-size collapse).
class IntegrationFailure : public Error {
 public:
  using Error::Error;
};

// The frame continuation does not close up over one period.
class NonOrientableFrame : public Error {
 public:
  using Error::Error;
};

// Point outside the tube where the transverse chart is valid.
class OutOfTube : public Error {
 public:
  using Error::Error;
};

// A trajectory left the tube during integration.
class TubeExit : public Error {
 public:
  using Error::Error;
};

// The transverse chart Jacobian is numerically singular at a probed point.
class SingularJacobian : public Error {
 public:
  using Error::Error;
};

// The cost Hessian along the orbit has a significantly negative eigenvalue.
class NonPSDHessian : public Error {
 public:
  using Error::Error;
};

// The Hamiltonian monodromy has no stable subspace of the right dimension,
// or the subspace is not a graph over the state block.
class NoStabilizingSolution : public Error {
 public:
  using Error::Error;
};

// The returned Riccati solution does not satisfy the equation to tolerance.
class ResidualTooLarge : public Error {
 public:
  using Error::Error;
};

// The Hamiltonian vector field does not match the symplectic gradient of H.
class GradientMismatch : public Error {
 public:
  using Error::Error;
};

// Normal hyperbolicity check failed (multiplier too close to the unit circle).
class NotNormallyHyperbolic : public Error {
 public:
  using Error::Error;
};

// Newton stagnation in the stable-manifold boundary value problem.
class BvpDiverged : public Error {
 public:
  using Error::Error;
};

// The boundary value problem did not converge within the maximum horizon.
class HorizonExceeded : public Error {
 public:
  using Error::Error;
};

// Distance record has no decaying tail.
class NonDecaying : public Error {
 public:
  using Error::Error;
};

}  // namespace orbitstab

#endif  // ORBITSTAB_ERRORS_HPP_
