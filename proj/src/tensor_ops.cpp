#include "mome/tensor_ops.hpp"

#include <algorithm>
#include <cmath>

#include "mome/error.hpp"

namespace mome {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows) {
    throw DimensionError("matmul: " + a.shape_str() + " x " + b.shape_str());
  }
  Tensor out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      double aik = a.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      double* orow = &out.data[i * out.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data) v *= s;
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = sigmoid_scalar(v);
  return out;
}

Tensor silu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = v * sigmoid_scalar(v);
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* row = &out.data[i * a.cols];
    double mx = row[0];
    for (std::size_t j = 1; j < a.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < a.cols; ++j) row[j] /= sum;
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* row = &out.data[i * a.cols];
    double mx = row[0];
    for (std::size_t j = 1; j < a.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < a.cols; ++j) row[j] -= lse;
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* row = &out.data[i * a.cols];
    double mean = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) mean += row[j];
    mean /= static_cast<double>(a.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(a.cols);
    double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < a.cols; ++j) row[j] = (row[j] - mean) * inv;
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols != b.cols) {
    throw DimensionError("concat_rows: " + a.shape_str() + " on " +
                         b.shape_str());
  }
  Tensor out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows != b.rows) {
    throw DimensionError("concat_cols: " + a.shape_str() + " beside " +
                         b.shape_str());
  }
  Tensor out(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::copy(&a.data[i * a.cols], &a.data[i * a.cols] + a.cols,
              &out.data[i * out.cols]);
    std::copy(&b.data[i * b.cols], &b.data[i * b.cols] + b.cols,
              &out.data[i * out.cols] + a.cols);
  }
  return out;
}

double sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data) s += v;
  return s;
}

double mean_all(const Tensor& a) {
  if (a.size() == 0) {
    throw DimensionError("mean_all on empty tensor");
  }
  return sum_all(a) / static_cast<double>(a.size());
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: " + a.shape_str() + " vs " + b.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double linear_slope(const std::vector<double>& y) {
  std::size_t n = y.size();
  if (n < 2) {
    throw DataError("linear_slope needs at least 2 points, got " +
                    std::to_string(n));
  }
  double xm = static_cast<double>(n - 1) / 2.0;
  double ym = 0.0;
  for (double v : y) ym += v;
  ym /= static_cast<double>(n);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = static_cast<double>(i) - xm;
    num += dx * (y[i] - ym);
    den += dx * dx;
  }
  return num / den;
}

}  // namespace mome
