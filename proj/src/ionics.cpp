#include "bidhom/ionics.hpp"

#include <cmath>
#include <stdexcept>

namespace bidhom {

namespace {

// exp(-(c/p)^2) extended by its limit 0 at p = 0
double exp_neg_inv_sq(double c, double p) {
  if (p == 0.0) return 0.0;
  double r = c / p;
  return std::exp(-r * r);
}

}  // namespace

void IonicModel::rate_coeffs(double p, double& lambda, double& mu) const {
  if (variant == Variant::affine_hh) {
    // g = a(q-1) + bq = (a+b)q - a
    double ap = a(p), bp = b(p);
    lambda = ap + bp;
    mu = ap;
  } else {
    // g = (1/tau_cl + (tau_cl - tau_op)/(tau_cl tau_op) q_inf) (q - q_inf)
    double qinf = 1.0 - exp_neg_inv_sq(p_gate, p);
    lambda = 1.0 / tau_close + (tau_close - tau_open) / (tau_close * tau_open) * qinf;
    mu = lambda * qinf;
  }
}

double IonicModel::g_rate(double p, double q) const {
  double lambda, mu;
  rate_coeffs(p, lambda, mu);
  return lambda * q - mu;
}

double IonicModel::ionic_current(double p, double q) const {
  if (variant == Variant::affine_hh) return h1(p) + h2(p) * q;
  double gate = std::exp(-(p / p_th) * (p / p_th));
  return q * p * p * (p - 1.0) * gate / tau_in -
         p * (1.0 + r_max * exp_neg_inv_sq(p_th, p)) / tau_out;
}

double IonicModel::gating_equilibrium(double p) const {
  double lambda, mu;
  rate_coeffs(p, lambda, mu);
  if (lambda <= 1e-12) return 0.0;
  double q = mu / lambda;
  return std::min(1.0, std::max(0.0, q));
}

void IonicModel::validate(double p_lo, double p_hi) const {
  if (C_I <= 0.0) throw std::invalid_argument("ionic model: C_I must be positive");
  if (variant == Variant::affine_hh) {
    if (!a || !b || !h1 || !h2)
      throw std::invalid_argument("affine_hh: a, b, h1, h2 must all be set");
    const int samples = 401;
    double prev_a = 0, prev_b = 0, prev_h1 = 0, prev_p = 0;
    for (int i = 0; i < samples; ++i) {
      double p = p_lo + (p_hi - p_lo) * i / (samples - 1);
      double ap = a(p), bp = b(p);
      if (!(ap >= 0.0) || !(bp >= 0.0))
        throw std::invalid_argument("affine_hh: a and b must be nonnegative on the sampled range");
      if (i > 0) {
        double dp = p - prev_p;
        if (std::abs(ap - prev_a) > (lip_a + 1e-9) * dp)
          throw std::invalid_argument("affine_hh: sampled difference quotient of a exceeds lip_a");
        if (std::abs(bp - prev_b) > (lip_b + 1e-9) * dp)
          throw std::invalid_argument("affine_hh: sampled difference quotient of b exceeds lip_b");
        if (std::abs(h1(p) - prev_h1) > (lip_h1 + 1e-9) * dp)
          throw std::invalid_argument("affine_hh: sampled difference quotient of h1 exceeds lip_h1");
      }
      prev_a = ap;
      prev_b = bp;
      prev_h1 = h1(p);
      prev_p = p;
    }
  } else {
    if (!(tau_open > 0.0) || !(tau_close > tau_open))
      throw std::invalid_argument("mitchell_schaeffer: need 0 < tau_open < tau_close");
    if (!(tau_in > 0.0) || !(tau_out > 0.0))
      throw std::invalid_argument("mitchell_schaeffer: tau_in, tau_out must be positive");
    if (!(p_gate > 0.0) || !(p_th >= 10.0 * p_gate))
      throw std::invalid_argument("mitchell_schaeffer: need p_th >= 10 p_gate > 0");
    if (!(r_max >= 10.0)) throw std::invalid_argument("mitchell_schaeffer: need r_max >= 10");
  }
}

IonicModel IonicModel::default_affine_hh() {
  IonicModel m;
  m.variant = Variant::affine_hh;
  m.a = [](double p) { return 0.2 + 0.3 / (1.0 + p * p); };
  m.b = [](double p) { return 0.25 + 0.1 / (1.0 + p * p); };
  m.h1 = [](double p) { return p; };
  m.h2 = [](double) { return 0.5; };
  m.lip_a = 0.2;
  m.lip_b = 0.07;
  m.lip_h1 = 1.0;
  m.lip_h2 = 0.0;
  m.C_I = 2.0;
  return m;
}

IonicModel IonicModel::default_mitchell_schaeffer() {
  IonicModel m;
  m.variant = Variant::mitchell_schaeffer;
  m.C_I = 10.0;
  return m;
}

IonicModel IonicModel::zero_current() {
  IonicModel m = default_affine_hh();
  m.h1 = [](double) { return 0.0; };
  m.h2 = [](double) { return 0.0; };
  m.lip_h1 = 0.0;
  m.C_I = 1.0;
  return m;
}

double step_gating_scalar(const IonicModel& model, double w, double p, double dt) {
  double lambda, mu;
  model.rate_coeffs(p, lambda, mu);
  if (lambda <= 1e-12) return w + dt * (mu - lambda * w);
  double qstar = mu / lambda;
  return qstar + (w - qstar) * std::exp(-lambda * dt);
}

void step_gating(const IonicModel& model, Eigen::VectorXd& w, const Eigen::VectorXd& p,
                 double dt) {
  if (w.size() != p.size()) throw std::invalid_argument("step_gating: size mismatch");
  if (dt < 0.0) throw std::invalid_argument("step_gating: dt must be nonnegative");
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = step_gating_scalar(model, w[i], p[i], dt);
}

}  // namespace bidhom
