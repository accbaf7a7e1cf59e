#include "mome/tensor.hpp"

#include <cmath>
#include <utility>

#include "mome/error.hpp"
#include "mome/rng.hpp"

namespace mome {

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.data[0] = v;
  return t;
}

Tensor Tensor::row(std::vector<double> v) {
  Tensor t;
  t.rows = 1;
  t.cols = v.size();
  t.data = std::move(v);
  return t;
}

Tensor Tensor::column(std::vector<double> v) {
  Tensor t;
  t.rows = v.size();
  t.cols = 1;
  t.data = std::move(v);
  return t;
}

Tensor Tensor::from_rows(std::size_t r, std::size_t c,
                         std::vector<double> flat) {
  if (flat.size() != r * c) {
    throw DimensionError("from_rows: " + std::to_string(flat.size()) +
                         " values cannot fill " + std::to_string(r) + "x" +
                         std::to_string(c));
  }
  Tensor t;
  t.rows = r;
  t.cols = c;
  t.data = std::move(flat);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::randn(std::size_t r, std::size_t c, RandomStream& rng,
                     double scale) {
  Tensor t(r, c);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

double Tensor::item() const {
  if (rows != 1 || cols != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str());
  }
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(std::size_t r, std::size_t c) const {
  if (r * c != data.size()) {
    throw DimensionError("reshape " + shape_str() + " -> " + std::to_string(r) +
                         "x" + std::to_string(c));
  }
  Tensor t;
  t.rows = r;
  t.cols = c;
  t.data = data;
  return t;
}

std::string Tensor::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace mome
