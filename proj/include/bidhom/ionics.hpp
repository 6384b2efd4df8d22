#pragma once

#include <Eigen/Dense>

#include <functional>

namespace bidhom {

/// Membrane model: ionic current I_ion(p, q) and gating rate g(p, q), both
/// affine in the gating variable q. Two variants: an affine Hodgkin-Huxley
/// type model g = a(p)(q-1) + b(p)q, I_ion = h1(p) + h2(p)q, and the
/// regularized Mitchell-Schaeffer model.
struct IonicModel {
  enum class Variant { affine_hh, mitchell_schaeffer };
  Variant variant = Variant::affine_hh;

  // affine_hh: positive bounded Lipschitz a, b; Lipschitz h1, bounded h2
  std::function<double(double)> a, b, h1, h2;
  double lip_a = 0, lip_b = 0, lip_h1 = 0, lip_h2 = 0;

  // mitchell_schaeffer constants
  double tau_in = 0.3, tau_out = 6.0, tau_open = 120.0, tau_close = 150.0;
  double p_th = 0.13, p_gate = 0.013, r_max = 20.0;

  /// Declared uniform Lipschitz constant of the composed ionic current;
  /// the micro time step must satisfy dt <= 1/(2 C_I).
  double C_I = 2.0;

  /// Writes g(p, q) = lambda(p) q - mu(p); lambda >= 0 for admissible models.
  void rate_coeffs(double p, double& lambda, double& mu) const;
  double g_rate(double p, double q) const;
  double ionic_current(double p, double q) const;
  double gating_equilibrium(double p) const;  // mu/lambda (clamped to [0,1])

  /// Checks the model invariants; samples p in [p_lo, p_hi]. Throws on
  /// violation.
  void validate(double p_lo = -2.0, double p_hi = 2.0) const;

  static IonicModel default_affine_hh();
  static IonicModel default_mitchell_schaeffer();
  static IonicModel zero_current();  // affine_hh with h1 = h2 = 0 (linear runs)
};

/// One exact-in-q gating step per node: with g affine in q the update
/// w+ = q* + (w - q*) exp(-lambda dt) preserves [0,1] unconditionally;
/// degenerates to explicit Euler for lambda <= 1e-12.
double step_gating_scalar(const IonicModel& model, double w, double p, double dt);
void step_gating(const IonicModel& model, Eigen::VectorXd& w, const Eigen::VectorXd& p, double dt);

}  // namespace bidhom
