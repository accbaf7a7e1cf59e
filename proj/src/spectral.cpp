#include "mome/spectral.hpp"

#include <cmath>

#include "mome/error.hpp"

namespace mome {

std::vector<double> jacobi_eigenvalues(const Tensor& sym, double tol,
                                       int max_sweeps) {
  if (sym.rows != sym.cols) {
    throw DimensionError("jacobi_eigenvalues: matrix is " + sym.shape_str());
  }
  std::size_t n = sym.rows;
  if (n == 0) return {};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::fabs(sym.at(i, j) - sym.at(j, i)) > 1e-9) {
        throw DimensionError("jacobi_eigenvalues: matrix not symmetric");
      }
    }
  }

  Tensor a = sym;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        off += a.at(i, j) * a.at(i, j);
      }
    }
    if (off <= tol * tol) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a.at(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;

        double app = a.at(p, p);
        double aqq = a.at(q, q);
        a.at(p, p) = app - t * apq;
        a.at(q, q) = aqq + t * apq;
        a.at(p, q) = 0.0;
        a.at(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          double akp = a.at(k, p);
          double akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(p, k) = a.at(k, p);
          a.at(k, q) = s * akp + c * akq;
          a.at(q, k) = a.at(k, q);
        }
      }
    }
  }

  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a.at(i, i);
  return eig;
}

double gershgorin_max_bound(const Tensor& sym) {
  if (sym.rows != sym.cols) {
    throw DimensionError("gershgorin_max_bound: matrix is " + sym.shape_str());
  }
  double best = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < sym.rows; ++i) {
    double radius = 0.0;
    for (std::size_t j = 0; j < sym.cols; ++j) {
      if (j != i) radius += std::fabs(sym.at(i, j));
    }
    double bound = sym.at(i, i) + radius;
    if (first || bound > best) {
      best = bound;
      first = false;
    }
  }
  return first ? 0.0 : best;
}

}  // namespace mome
