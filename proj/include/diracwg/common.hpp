#pragma once
// Shared error types and small numeric helpers used across the library.

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace diracwg {

using cplx = std::complex<double>;
inline constexpr double PI = 3.141592653589793238462643383279502884;

/// Configuration file is malformed or violates a declared constraint.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
/// Geometry cannot be meshed or violates the symmetry requirements.
struct GeometryError : std::runtime_error {
  explicit GeometryError(const std::string& m) : std::runtime_error(m) {}
};
/// A structural hypothesis the pipeline relies on failed its numerical check.
struct AssumptionError : std::runtime_error {
  explicit AssumptionError(const std::string& m) : std::runtime_error(m) {}
};
/// An iterative solver failed to converge or produced an inconsistent state.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& m) : std::runtime_error(m) {}
};

/// Least-squares fit of y = a + b*x; returns {a, b}.
inline std::pair<double, double> linear_fit(const std::vector<double>& x,
                                            const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw SolverError("linear_fit: need at least two samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  if (det == 0) throw SolverError("linear_fit: degenerate abscissae");
  const double b = (n * sxy - sx * sy) / det;
  const double a = (sy - b * sx) / n;
  return {a, b};
}

/// Slope of log|y| against log|x|, skipping non-positive entries.
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  return linear_fit(lx, ly).second;
}

/// FNV-1a 64-bit hash, used to fingerprint configuration bytes in manifests.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Shortest-round-trip formatting so reports reproduce bit-for-bit.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline std::string fmt_g17(cplx v) {
  return fmt_g17(v.real()) + (v.imag() < 0 ? "-" : "+") + fmt_g17(std::abs(v.imag())) + "i";
}

/// Scalar root by bisection refined with secant steps; f must change sign on [a,b].
template <class F>
double bisect_root(F&& f, double a, double b, double ftol, int max_iter = 200) {
  double fa = f(a), fb = f(b);
  if (fa == 0) return a;
  if (fb == 0) return b;
  if ((fa > 0) == (fb > 0)) throw SolverError("bisect_root: endpoints do not bracket");
  for (int it = 0; it < max_iter; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (std::abs(fm) <= ftol || 0.5 * (b - a) < 1e-15 * (std::abs(a) + std::abs(b) + 1)) {
      // secant polish inside the bracket
      double x0 = a, x1 = b, f0 = fa, f1 = fb;
      for (int k = 0; k < 8; ++k) {
        if (f1 == f0) break;
        const double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if (!(x2 > a && x2 < b)) break;
        x0 = x1; f0 = f1; x1 = x2; f1 = f(x2);
        if (std::abs(f1) <= ftol) return x1;
      }
      return std::abs(f1) < std::abs(fm) ? x1 : m;
    }
    if ((fm > 0) == (fa > 0)) { a = m; fa = fm; } else { b = m; fb = fm; }
  }
  return 0.5 * (a + b);
}

}  // namespace diracwg
