#pragma once

#include <functional>

#include "sdexit/sde.hpp"

namespace sdexit {

/// Drift b(x) and diffusion tensor a(x) = sigma(x) sigma(x)^T at one point.
/// For the diagonal noise classes in scope, a(x) is diagonal and only the
/// diagonal is stored.
struct GeneratorCoefficients {
  Vec drift;
  Vec diffusion_diag;

  Mat diffusion_matrix() const {
    Mat a = Mat::Zero(diffusion_diag.size(), diffusion_diag.size());
    a.diagonal() = diffusion_diag;
    return a;
  }
};

inline GeneratorCoefficients coefficients_at(const SdeModel& model, const Vec& x) {
  if (x.size() != model.state_dim)
    throw std::invalid_argument("coefficients_at: point dimension mismatch");
  GeneratorCoefficients gc;
  gc.drift = model.drift_at(x);
  gc.diffusion_diag = Vec::Zero(model.state_dim);
  for (int k = 0; k < model.noise_dim; ++k) {
    const double s = model.sigma_entry(k, x.data());
    gc.diffusion_diag(k) = s * s;
  }
  return gc;
}

/// A twice-differentiable scalar field supplying value, gradient and Hessian,
/// either analytically or by central finite differences at a stated step.
struct FieldProbe {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;

  static FieldProbe finite_difference(std::function<double(const Vec&)> f, double step) {
    FieldProbe p;
    p.value = f;
    p.gradient = [f, step](const Vec& x) {
      Vec g(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec xp = x, xm = x;
        xp(i) += step;
        xm(i) -= step;
        g(i) = (f(xp) - f(xm)) / (2.0 * step);
      }
      return g;
    };
    p.hessian = [f, step](const Vec& x) {
      Mat h(x.size(), x.size());
      const double f0 = f(x);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec xp = x, xm = x;
        xp(i) += step;
        xm(i) -= step;
        h(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (step * step);
        for (Eigen::Index j = i + 1; j < x.size(); ++j) {
          Vec xpp = x, xpm = x, xmp = x, xmm = x;
          xpp(i) += step; xpp(j) += step;
          xpm(i) += step; xpm(j) -= step;
          xmp(i) -= step; xmp(j) += step;
          xmm(i) -= step; xmm(j) -= step;
          h(i, j) = h(j, i) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * step * step);
        }
      }
      return h;
    };
    return p;
  }
};

/// A g(x) = b(x) . grad g(x) + (1/2) sum_ij a_ij(x) d2g/dxi dxj.
inline double apply_generator(const SdeModel& model, const FieldProbe& g, const Vec& x) {
  const GeneratorCoefficients gc = coefficients_at(model, x);
  const Vec grad = g.gradient(x);
  const Mat hess = g.hessian(x);
  double out = gc.drift.dot(grad);
  for (Eigen::Index i = 0; i < x.size(); ++i) out += 0.5 * gc.diffusion_diag(i) * hess(i, i);
  return out;
}

/// Result of sampling the smallest eigenvalue of a(x) over a domain.
/// pass requires the sampled minimum to clear the threshold.
struct EllipticityCertificate {
  std::size_t samples = 0;
  double min_eigenvalue = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

}  // namespace sdexit
