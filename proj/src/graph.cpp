#include "mome/graph.hpp"

#include <cmath>
#include <utility>

#include "mome/error.hpp"
#include "mome/tensor_ops.hpp"

namespace mome {

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(Tensor v) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Graph::param(const Tensor& w) {
  auto it = params_.find(&w);
  if (it != params_.end()) return Var{it->second};
  Var v = leaf(w);
  params_.emplace(&w, v.id);
  return v;
}

Var Graph::matmul(Var a, Var b) {
  Node n;
  n.op = Op::Matmul;
  n.a = a.id;
  n.b = b.id;
  n.value = mome::matmul(value(a), value(b));
  return push(std::move(n));
}

Var Graph::transpose(Var a) {
  Node n;
  n.op = Op::Transpose;
  n.a = a.id;
  n.value = mome::transpose(value(a));
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = mome::add(value(a), value(b));
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.value = mome::sub(value(a), value(b));
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.value = hadamard(value(a), value(b));
  return push(std::move(n));
}

Var Graph::scale(Var a, double c) {
  Node n;
  n.op = Op::ScaleConst;
  n.a = a.id;
  n.c = c;
  n.value = mome::scale(value(a), c);
  return push(std::move(n));
}

Var Graph::scalar_mul(Var s, Var x) {
  if (value(s).rows != 1 || value(s).cols != 1) {
    throw DimensionError("scalar_mul: scalar operand has shape " +
                         value(s).shape_str());
  }
  Node n;
  n.op = Op::ScalarMul;
  n.a = s.id;
  n.b = x.id;
  n.value = mome::scale(value(x), value(s).data[0]);
  return push(std::move(n));
}

Var Graph::silu(Var a) {
  Node n;
  n.op = Op::Silu;
  n.a = a.id;
  n.value = mome::silu(value(a));
  return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.id;
  n.value = mome::sigmoid(value(a));
  return push(std::move(n));
}

Var Graph::relu(Var a) {
  Node n;
  n.op = Op::Relu;
  n.a = a.id;
  n.value = mome::relu(value(a));
  return push(std::move(n));
}

Var Graph::abs(Var a) {
  Node n;
  n.op = Op::Abs;
  n.a = a.id;
  n.value = value(a);
  for (double& v : n.value.data) v = std::fabs(v);
  return push(std::move(n));
}

Var Graph::inv(Var a) {
  Node n;
  n.op = Op::Inv;
  n.a = a.id;
  n.value = value(a);
  for (double& v : n.value.data) v = 1.0 / v;
  return push(std::move(n));
}

Var Graph::softmax_rows(Var a) {
  Node n;
  n.op = Op::SoftmaxRows;
  n.a = a.id;
  n.value = mome::softmax_rows(value(a));
  return push(std::move(n));
}

Var Graph::log_softmax_rows(Var a) {
  Node n;
  n.op = Op::LogSoftmaxRows;
  n.a = a.id;
  n.value = mome::log_softmax_rows(value(a));
  return push(std::move(n));
}

Var Graph::layer_norm_rows(Var a) {
  Node n;
  n.op = Op::LayerNormRows;
  n.a = a.id;
  n.value = mome::layer_norm_rows(value(a));
  return push(std::move(n));
}

Var Graph::reshape(Var a, std::size_t r, std::size_t c) {
  Node n;
  n.op = Op::Reshape;
  n.a = a.id;
  n.value = value(a).reshaped(r, c);
  return push(std::move(n));
}

Var Graph::concat_rows(Var a, Var b) {
  Node n;
  n.op = Op::ConcatRows;
  n.a = a.id;
  n.b = b.id;
  n.value = mome::concat_rows(value(a), value(b));
  return push(std::move(n));
}

Var Graph::concat_cols(Var a, Var b) {
  Node n;
  n.op = Op::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.value = mome::concat_cols(value(a), value(b));
  return push(std::move(n));
}

Var Graph::slice_rows(Var a, std::size_t r0, std::size_t len) {
  const Tensor& src = value(a);
  if (r0 + len > src.rows) {
    throw DimensionError("slice_rows [" + std::to_string(r0) + ", " +
                         std::to_string(r0 + len) + ") out of " +
                         src.shape_str());
  }
  Node n;
  n.op = Op::SliceRows;
  n.a = a.id;
  n.i0 = r0;
  n.i1 = len;
  n.value = Tensor(len, src.cols);
  std::copy(&src.data[r0 * src.cols], &src.data[(r0 + len) * src.cols],
            n.value.data.begin());
  return push(std::move(n));
}

Var Graph::slice_cols(Var a, std::size_t c0, std::size_t len) {
  const Tensor& src = value(a);
  if (c0 + len > src.cols) {
    throw DimensionError("slice_cols [" + std::to_string(c0) + ", " +
                         std::to_string(c0 + len) + ") out of " +
                         src.shape_str());
  }
  Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.i0 = c0;
  n.i1 = len;
  n.value = Tensor(src.rows, len);
  for (std::size_t i = 0; i < src.rows; ++i) {
    std::copy(&src.data[i * src.cols + c0], &src.data[i * src.cols + c0 + len],
              &n.value.data[i * len]);
  }
  return push(std::move(n));
}

Var Graph::pick(Var a, std::size_t i, std::size_t j) {
  const Tensor& src = value(a);
  if (i >= src.rows || j >= src.cols) {
    throw DimensionError("pick (" + std::to_string(i) + "," +
                         std::to_string(j) + ") out of " + src.shape_str());
  }
  Node n;
  n.op = Op::Pick;
  n.a = a.id;
  n.i0 = i;
  n.i1 = j;
  n.value = Tensor::scalar(src.at(i, j));
  return push(std::move(n));
}

Var Graph::sum_all(Var a) {
  Node n;
  n.op = Op::SumAll;
  n.a = a.id;
  n.value = Tensor::scalar(mome::sum_all(value(a)));
  return push(std::move(n));
}

Var Graph::mean_all(Var a) {
  Node n;
  n.op = Op::MeanAll;
  n.a = a.id;
  n.value = Tensor::scalar(mome::mean_all(value(a)));
  return push(std::move(n));
}

Var Graph::mean_rows(Var a) {
  const Tensor& src = value(a);
  Node n;
  n.op = Op::MeanRows;
  n.a = a.id;
  n.value = Tensor(1, src.cols);
  for (std::size_t i = 0; i < src.rows; ++i) {
    for (std::size_t j = 0; j < src.cols; ++j) {
      n.value.data[j] += src.at(i, j);
    }
  }
  for (double& v : n.value.data) v /= static_cast<double>(src.rows);
  return push(std::move(n));
}

Var Graph::broadcast_row(Var row, std::size_t n) {
  if (value(row).rows != 1) {
    throw DimensionError("broadcast_row: expected 1xC, got " +
                         value(row).shape_str());
  }
  Var ones = leaf(Tensor(n, 1, 1.0));
  return matmul(ones, row);
}

Tensor Graph::grad_of(const Tensor& w) const {
  auto it = params_.find(&w);
  if (it == params_.end()) return Tensor(w.rows, w.cols);
  const Tensor& g = nodes_[it->second].grad;
  if (g.size() == 0) return Tensor(w.rows, w.cols);
  return g;
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor(n.value.rows, n.value.cols);
  return n.grad;
}

void Graph::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.rows != 1 || lv.cols != 1) {
    throw DimensionError("backward: loss must be 1x1, got " + lv.shape_str());
  }
  grad_buf(loss.id).data[0] = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;  // not reachable from the loss
    const Tensor& G = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Matmul: {
        const Tensor& A = nodes_[n.a].value;
        const Tensor& B = nodes_[n.b].value;
        Tensor& dA = grad_buf(n.a);
        Tensor& dB = grad_buf(n.b);
        // dA += G * B^T
        for (std::size_t i = 0; i < A.rows; ++i) {
          for (std::size_t k = 0; k < B.cols; ++k) {
            double gik = G.at(i, k);
            if (gik == 0.0) continue;
            for (std::size_t j = 0; j < A.cols; ++j) {
              dA.at(i, j) += gik * B.at(j, k);
            }
          }
        }
        // dB += A^T * G
        for (std::size_t k = 0; k < A.rows; ++k) {
          for (std::size_t i = 0; i < A.cols; ++i) {
            double aki = A.at(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < B.cols; ++j) {
              dB.at(i, j) += aki * G.at(k, j);
            }
          }
        }
        break;
      }
      case Op::Transpose: {
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.rows; ++i) {
          for (std::size_t j = 0; j < G.cols; ++j) {
            dA.at(j, i) += G.at(i, j);
          }
        }
        break;
      }
      case Op::Add: {
        Tensor& dA = grad_buf(n.a);
        Tensor& dB = grad_buf(n.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          dA.data[i] += G.data[i];
          dB.data[i] += G.data[i];
        }
        break;
      }
      case Op::Sub: {
        Tensor& dA = grad_buf(n.a);
        Tensor& dB = grad_buf(n.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          dA.data[i] += G.data[i];
          dB.data[i] -= G.data[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& A = nodes_[n.a].value;
        const Tensor& B = nodes_[n.b].value;
        Tensor& dA = grad_buf(n.a);
        Tensor& dB = grad_buf(n.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          dA.data[i] += G.data[i] * B.data[i];
          dB.data[i] += G.data[i] * A.data[i];
        }
        break;
      }
      case Op::ScaleConst: {
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          dA.data[i] += n.c * G.data[i];
        }
        break;
      }
      case Op::ScalarMul: {
        double s = nodes_[n.a].value.data[0];
        const Tensor& X = nodes_[n.b].value;
        Tensor& dS = grad_buf(n.a);
        Tensor& dX = grad_buf(n.b);
        for (std::size_t i = 0; i < G.size(); ++i) {
          dS.data[0] += G.data[i] * X.data[i];
          dX.data[i] += s * G.data[i];
        }
        break;
      }
      case Op::Silu: {
        const Tensor& X = nodes_[n.a].value;
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          double s = sigmoid_scalar(X.data[i]);
          dA.data[i] += G.data[i] * s * (1.0 + X.data[i] * (1.0 - s));
        }
        break;
      }
      case Op::Sigmoid: {
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          double y = n.value.data[i];
          dA.data[i] += G.data[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::Inv: {
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          double y = n.value.data[i];
          dA.data[i] -= G.data[i] * y * y;
        }
        break;
      }
      case Op::Relu: {
        const Tensor& X = nodes_[n.a].value;
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          if (X.data[i] > 0.0) dA.data[i] += G.data[i];
        }
        break;
      }
      case Op::Abs: {
        const Tensor& X = nodes_[n.a].value;
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) {
          if (X.data[i] > 0.0) {
            dA.data[i] += G.data[i];
          } else if (X.data[i] < 0.0) {
            dA.data[i] -= G.data[i];
          }
        }
        break;
      }
      case Op::SoftmaxRows: {
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.rows; ++i) {
          double gy = 0.0;
          for (std::size_t j = 0; j < G.cols; ++j) {
            gy += G.at(i, j) * n.value.at(i, j);
          }
          for (std::size_t j = 0; j < G.cols; ++j) {
            dA.at(i, j) += n.value.at(i, j) * (G.at(i, j) - gy);
          }
        }
        break;
      }
      case Op::LogSoftmaxRows: {
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.rows; ++i) {
          double gsum = 0.0;
          for (std::size_t j = 0; j < G.cols; ++j) gsum += G.at(i, j);
          for (std::size_t j = 0; j < G.cols; ++j) {
            dA.at(i, j) += G.at(i, j) - std::exp(n.value.at(i, j)) * gsum;
          }
        }
        break;
      }
      case Op::LayerNormRows: {
        const Tensor& X = nodes_[n.a].value;
        Tensor& dA = grad_buf(n.a);
        double cols = static_cast<double>(X.cols);
        for (std::size_t i = 0; i < X.rows; ++i) {
          double mean = 0.0;
          for (std::size_t j = 0; j < X.cols; ++j) mean += X.at(i, j);
          mean /= cols;
          double var = 0.0;
          for (std::size_t j = 0; j < X.cols; ++j) {
            double d = X.at(i, j) - mean;
            var += d * d;
          }
          var /= cols;
          double inv = 1.0 / std::sqrt(var + 1e-5);
          double gmean = 0.0;
          double gy = 0.0;
          for (std::size_t j = 0; j < X.cols; ++j) {
            gmean += G.at(i, j);
            gy += G.at(i, j) * n.value.at(i, j);
          }
          gmean /= cols;
          gy /= cols;
          for (std::size_t j = 0; j < X.cols; ++j) {
            dA.at(i, j) +=
                inv * (G.at(i, j) - gmean - n.value.at(i, j) * gy);
          }
        }
        break;
      }
      case Op::Reshape: {
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.size(); ++i) dA.data[i] += G.data[i];
        break;
      }
      case Op::ConcatRows: {
        Tensor& dA = grad_buf(n.a);
        Tensor& dB = grad_buf(n.b);
        std::size_t split = dA.size();
        for (std::size_t i = 0; i < split; ++i) dA.data[i] += G.data[i];
        for (std::size_t i = 0; i < dB.size(); ++i) {
          dB.data[i] += G.data[split + i];
        }
        break;
      }
      case Op::ConcatCols: {
        Tensor& dA = grad_buf(n.a);
        Tensor& dB = grad_buf(n.b);
        for (std::size_t i = 0; i < G.rows; ++i) {
          for (std::size_t j = 0; j < dA.cols; ++j) {
            dA.at(i, j) += G.at(i, j);
          }
          for (std::size_t j = 0; j < dB.cols; ++j) {
            dB.at(i, j) += G.at(i, dA.cols + j);
          }
        }
        break;
      }
      case Op::SliceRows: {
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < n.i1; ++i) {
          for (std::size_t j = 0; j < G.cols; ++j) {
            dA.at(n.i0 + i, j) += G.at(i, j);
          }
        }
        break;
      }
      case Op::SliceCols: {
        Tensor& dA = grad_buf(n.a);
        for (std::size_t i = 0; i < G.rows; ++i) {
          for (std::size_t j = 0; j < n.i1; ++j) {
            dA.at(i, n.i0 + j) += G.at(i, j);
          }
        }
        break;
      }
      case Op::Pick: {
        grad_buf(n.a).at(n.i0, n.i1) += G.data[0];
        break;
      }
      case Op::SumAll: {
        Tensor& dA = grad_buf(n.a);
        for (double& v : dA.data) v += G.data[0];
        break;
      }
      case Op::MeanAll: {
        Tensor& dA = grad_buf(n.a);
        double g = G.data[0] / static_cast<double>(dA.size());
        for (double& v : dA.data) v += g;
        break;
      }
      case Op::MeanRows: {
        Tensor& dA = grad_buf(n.a);
        double inv = 1.0 / static_cast<double>(dA.rows);
        for (std::size_t i = 0; i < dA.rows; ++i) {
          for (std::size_t j = 0; j < dA.cols; ++j) {
            dA.at(i, j) += inv * G.at(0, j);
          }
        }
        break;
      }
    }
  }
}

}  // namespace mome
