#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mome {

class RandomStream;

// Dense row-major matrix of doubles. Rank is always 2; vectors are stored
// as 1xN rows unless noted otherwise. This keeps shape handling trivial at
// the cost of a few explicit transposes.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);
  static Tensor column(std::vector<double> v);
  static Tensor from_rows(std::size_t r, std::size_t c,
                          std::vector<double> flat);
  static Tensor identity(std::size_t n);
  // Entries ~ N(0, scale^2).
  static Tensor randn(std::size_t r, std::size_t c, RandomStream& rng,
                      double scale = 1.0);

  std::size_t size() const { return data.size(); }

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  // Throws DimensionError unless the tensor is 1x1.
  double item() const;

  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool all_finite() const;

  Tensor reshaped(std::size_t r, std::size_t c) const;

  std::string shape_str() const;
};

}  // namespace mome
