#include "cdkit/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace cdkit::tensor {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a->shape == b->shape, std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                                    " vs " + shape_str(b->shape));
}

Tensor make(std::vector<int> shape, std::vector<Tensor> parents) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values.assign(numel(n->shape), 0.0);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
  return n;
}

}  // namespace

size_t numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    require(d > 0, "non-positive dimension in shape " + shape_str(shape));
    n *= size_t(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor constant(std::vector<int> shape, std::vector<double> values) {
  require(values.size() == numel(shape),
          "constant: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  return n;
}

Tensor constant(std::vector<int> shape, double fill) {
  auto n = std::make_shared<Node>();
  n->values.assign(numel(shape), fill);
  n->shape = std::move(shape);
  return n;
}

Tensor leaf(std::vector<int> shape, std::vector<double> values) {
  Tensor n = constant(std::move(shape), std::move(values));
  n->requires_grad = true;
  return n;
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = make(a->shape, {a, b});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] + b->values[i];
  out->backward_fn = [a = a.get(), b = b.get()](Node& self) {
    if (a->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i];
    if (b->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) b->grad[i] += self.grad[i];
  };
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = make(a->shape, {a, b});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] - b->values[i];
  out->backward_fn = [a = a.get(), b = b.get()](Node& self) {
    if (a->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i];
    if (b->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) b->grad[i] -= self.grad[i];
  };
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make(a->shape, {a, b});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] * b->values[i];
  out->backward_fn = [a = a.get(), b = b.get()](Node& self) {
    if (a->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i] * b->values[i];
    if (b->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) b->grad[i] += self.grad[i] * a->values[i];
  };
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Tensor out = make(a->shape, {a, b});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] / b->values[i];
  out->backward_fn = [a = a.get(), b = b.get()](Node& self) {
    if (a->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i] / b->values[i];
    if (b->requires_grad)
      for (size_t i = 0; i < self.size(); ++i)
        b->grad[i] -= self.grad[i] * a->values[i] / (b->values[i] * b->values[i]);
  };
  return out;
}

Tensor neg(const Tensor& a) {
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = -a->values[i];
  out->backward_fn = [a = a.get()](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) a->grad[i] -= self.grad[i];
  };
  return out;
}

Tensor abs(const Tensor& a) {
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = std::fabs(a->values[i]);
  out->backward_fn = [a = a.get()](Node& self) {
    if (!a->requires_grad) return;
    // subgradient 0 at the kink
    for (size_t i = 0; i < self.size(); ++i) {
      double x = a->values[i];
      if (x > 0)
        a->grad[i] += self.grad[i];
      else if (x < 0)
        a->grad[i] -= self.grad[i];
    }
  };
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = std::exp(a->values[i]);
  out->backward_fn = [a = a.get(), y = out.get()](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i] * y->values[i];
  };
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = std::log(a->values[i]);
  out->backward_fn = [a = a.get()](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i] / a->values[i];
  };
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] > 0 ? a->values[i] : 0.0;
  out->backward_fn = [a = a.get()](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i)
      if (a->values[i] > 0) a->grad[i] += self.grad[i];
  };
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i) {
    double x = a->values[i];
    out->values[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  out->backward_fn = [a = a.get(), y = out.get()](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) {
      double s = y->values[i];
      a->grad[i] += self.grad[i] * s * (1.0 - s);
    }
  };
  return out;
}

Tensor logsigmoid(const Tensor& a) {
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i) {
    double x = a->values[i];
    // log(1/(1+e^-x)) without overflow on either tail
    out->values[i] = x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  }
  out->backward_fn = [a = a.get()](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) {
      double x = a->values[i];
      double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      a->grad[i] += self.grad[i] * (1.0 - s);
    }
  };
  return out;
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "clamp: lo > hi");
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i)
    out->values[i] = a->values[i] < lo ? lo : (a->values[i] > hi ? hi : a->values[i]);
  out->backward_fn = [a = a.get(), lo, hi](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) {
      double x = a->values[i];
      if (x >= lo && x <= hi) a->grad[i] += self.grad[i];
    }
  };
  return out;
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  Tensor out = make(a->shape, {a, b});
  for (size_t i = 0; i < out->size(); ++i)
    out->values[i] = a->values[i] <= b->values[i] ? a->values[i] : b->values[i];
  out->backward_fn = [a = a.get(), b = b.get()](Node& self) {
    for (size_t i = 0; i < self.size(); ++i) {
      // ties route to the left operand
      if (a->values[i] <= b->values[i]) {
        if (a->requires_grad) a->grad[i] += self.grad[i];
      } else if (b->requires_grad) {
        b->grad[i] += self.grad[i];
      }
    }
  };
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] + c;
  out->backward_fn = [a = a.get()](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i];
  };
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = make(a->shape, {a});
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = a->values[i] * c;
  out->backward_fn = [a = a.get(), c](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i] * c;
  };
  return out;
}

// ---------------------------------------------------------------- structure

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  require(numel(shape) == a->size(), "reshape: " + shape_str(a->shape) + " has " +
                                         std::to_string(a->size()) + " values, target " +
                                         shape_str(shape));
  Tensor out = make(std::move(shape), {a});
  out->values = a->values;
  out->backward_fn = [a = a.get()](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i];
  };
  return out;
}

namespace {
// outer/axis/inner decomposition shared by concat, slice and softmax
void split_axis(const std::vector<int>& shape, int axis, size_t& outer, size_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= size_t(shape[i]);
  for (size_t i = size_t(axis) + 1; i < shape.size(); ++i) inner *= size_t(shape[i]);
}
}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const auto& s0 = parts[0]->shape;
  int rank = int(s0.size());
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "concat: bad axis");
  int total = 0;
  for (const auto& p : parts) {
    require(int(p->shape.size()) == rank, "concat: rank mismatch " + shape_str(s0) + " vs " +
                                              shape_str(p->shape));
    for (int d = 0; d < rank; ++d)
      require(d == axis || p->shape[d] == s0[d],
              "concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(p->shape));
    total += p->shape[size_t(axis)];
  }
  std::vector<int> oshape = s0;
  oshape[size_t(axis)] = total;
  Tensor out = make(oshape, parts);
  size_t outer, inner;
  split_axis(oshape, axis, outer, inner);
  size_t off = 0;  // element offset of this part along the axis
  for (const auto& p : parts) {
    size_t len = size_t(p->shape[size_t(axis)]);
    for (size_t o = 0; o < outer; ++o) {
      const double* src = p->values.data() + o * len * inner;
      double* dst = out->values.data() + (o * size_t(total) + off) * inner;
      for (size_t i = 0; i < len * inner; ++i) dst[i] = src[i];
    }
    off += len;
  }
  out->backward_fn = [parts, axis, outer, inner, total](Node& self) {
    size_t off = 0;
    for (const auto& p : parts) {
      size_t len = size_t(p->shape[size_t(axis)]);
      if (p->requires_grad)
        for (size_t o = 0; o < outer; ++o) {
          double* dst = p->grad.data() + o * len * inner;
          const double* src = self.grad.data() + (o * size_t(total) + off) * inner;
          for (size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      off += len;
    }
  };
  return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  int rank = int(a->shape.size());
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "slice: bad axis");
  int alen = a->shape[size_t(axis)];
  require(start >= 0 && len > 0 && start + len <= alen,
          "slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
              ") out of range for " + shape_str(a->shape));
  std::vector<int> oshape = a->shape;
  oshape[size_t(axis)] = len;
  Tensor out = make(oshape, {a});
  size_t outer, inner;
  split_axis(a->shape, axis, outer, inner);
  for (size_t o = 0; o < outer; ++o) {
    const double* src = a->values.data() + (o * size_t(alen) + size_t(start)) * inner;
    double* dst = out->values.data() + o * size_t(len) * inner;
    for (size_t i = 0; i < size_t(len) * inner; ++i) dst[i] = src[i];
  }
  out->backward_fn = [a = a.get(), alen, start, len, outer, inner](Node& self) {
    if (!a->requires_grad) return;
    for (size_t o = 0; o < outer; ++o) {
      double* dst = a->grad.data() + (o * size_t(alen) + size_t(start)) * inner;
      const double* src = self.grad.data() + o * size_t(len) * inner;
      for (size_t i = 0; i < size_t(len) * inner; ++i) dst[i] += src[i];
    }
  };
  return out;
}

Tensor transpose_last2(const Tensor& a) {
  int rank = int(a->shape.size());
  require(rank >= 2, "transpose_last2: needs rank >= 2, got " + shape_str(a->shape));
  std::vector<int> oshape = a->shape;
  std::swap(oshape[size_t(rank) - 1], oshape[size_t(rank) - 2]);
  int m = a->shape[size_t(rank) - 2], n = a->shape[size_t(rank) - 1];
  size_t batch = a->size() / (size_t(m) * n);
  Tensor out = make(oshape, {a});
  for (size_t b = 0; b < batch; ++b) {
    const double* src = a->values.data() + b * size_t(m) * n;
    double* dst = out->values.data() + b * size_t(m) * n;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) dst[size_t(j) * m + i] = src[size_t(i) * n + j];
  }
  out->backward_fn = [a = a.get(), m, n, batch](Node& self) {
    if (!a->requires_grad) return;
    for (size_t b = 0; b < batch; ++b) {
      double* dst = a->grad.data() + b * size_t(m) * n;
      const double* src = self.grad.data() + b * size_t(m) * n;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) dst[size_t(i) * n + j] += src[size_t(j) * m + i];
    }
  };
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = make({1}, {a});
  double acc = 0;
  for (double v : a->values) acc += v;
  out->values[0] = acc;
  out->backward_fn = [a = a.get()](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < a->size(); ++i) a->grad[i] += self.grad[0];
  };
  return out;
}

Tensor mean(const Tensor& a) {
  Tensor out = make({1}, {a});
  double acc = 0;
  for (double v : a->values) acc += v;
  double inv = 1.0 / double(a->size());
  out->values[0] = acc * inv;
  out->backward_fn = [a = a.get(), inv](Node& self) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < a->size(); ++i) a->grad[i] += self.grad[0] * inv;
  };
  return out;
}

// ---------------------------------------------------------------- matmul

namespace {
void mm(const double* A, const double* B, double* C, int m, int k, int n) {
  // C += A(m,k) * B(k,n)
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      double a = A[size_t(i) * k + l];
      if (a == 0) continue;
      const double* brow = B + size_t(l) * n;
      double* crow = C + size_t(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}

void mm_at(const double* A, const double* C, double* B, int m, int k, int n) {
  // B += A^T(k,m) * C(m,n)
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      double a = A[size_t(i) * k + l];
      if (a == 0) continue;
      const double* crow = C + size_t(i) * n;
      double* brow = B + size_t(l) * n;
      for (int j = 0; j < n; ++j) brow[j] += a * crow[j];
    }
}

void mm_bt(const double* C, const double* B, double* A, int m, int k, int n) {
  // A += C(m,n) * B^T(n,k)
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      const double* crow = C + size_t(i) * n;
      const double* brow = B + size_t(l) * n;
      double acc = 0;
      for (int j = 0; j < n; ++j) acc += crow[j] * brow[j];
      A[size_t(i) * k + l] += acc;
    }
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& sa = a->shape;
  const auto& sb = b->shape;
  auto fail = [&] {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(sa) + " x " +
                                shape_str(sb));
  };
  int B = 1, m, k, n;
  bool batched_a = sa.size() == 3, batched_b = sb.size() == 3;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0]; k = sa[1];
    if (sb[0] != k) fail();
    n = sb[1];
  } else if (batched_a && (sb.size() == 2 || batched_b)) {
    B = sa[0]; m = sa[1]; k = sa[2];
    if (batched_b) {
      if (sb[0] != B || sb[1] != k) fail();
      n = sb[2];
    } else {
      if (sb[0] != k) fail();
      n = sb[1];
    }
  } else {
    fail();
    return nullptr;  // unreachable
  }
  std::vector<int> oshape = batched_a ? std::vector<int>{B, m, n} : std::vector<int>{m, n};
  Tensor out = make(oshape, {a, b});
  for (int bi = 0; bi < B; ++bi)
    mm(a->values.data() + size_t(bi) * m * k,
       b->values.data() + (batched_b ? size_t(bi) * k * n : 0),
       out->values.data() + size_t(bi) * m * n, m, k, n);
  out->backward_fn = [a = a.get(), b = b.get(), B, m, k, n, batched_b](Node& self) {
    for (int bi = 0; bi < B; ++bi) {
      const double* g = self.grad.data() + size_t(bi) * m * n;
      const double* av = a->values.data() + size_t(bi) * m * k;
      const double* bv = b->values.data() + (batched_b ? size_t(bi) * k * n : 0);
      if (a->requires_grad) mm_bt(g, bv, a->grad.data() + size_t(bi) * m * k, m, k, n);
      if (b->requires_grad)
        mm_at(av, g, b->grad.data() + (batched_b ? size_t(bi) * k * n : 0), m, k, n);
    }
  };
  return out;
}

// ---------------------------------------------------------------- nn ops

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding) {
  require(x->shape.size() == 4 && k->shape.size() == 4,
          "conv2d: need NCHW input and OIHW kernel, got " + shape_str(x->shape) + " and " +
              shape_str(k->shape));
  require(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
  int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  int O = k->shape[0], KC = k->shape[1], KH = k->shape[2], KW = k->shape[3];
  require(KC == C, "conv2d: channel mismatch " + shape_str(x->shape) + " vs " +
                       shape_str(k->shape));
  require(H + 2 * padding >= KH && W + 2 * padding >= KW,
          "conv2d: kernel larger than padded input");
  int HO = (H + 2 * padding - KH) / stride + 1;
  int WO = (W + 2 * padding - KW) / stride + 1;
  Tensor out = make({N, O, HO, WO}, {x, k});
  auto xat = [&](int n, int c, int y, int xx) {
    return x->values[((size_t(n) * C + c) * H + y) * W + xx];
  };
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o)
      for (int oy = 0; oy < HO; ++oy)
        for (int ox = 0; ox < WO; ++ox) {
          double acc = 0;
          for (int c = 0; c < C; ++c) {
            const double* kk = k->values.data() + (size_t(o) * C + c) * KH * KW;
            for (int ky = 0; ky < KH; ++ky) {
              int iy = oy * stride + ky - padding;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < KW; ++kx) {
                int ix = ox * stride + kx - padding;
                if (ix < 0 || ix >= W) continue;
                acc += xat(n, c, iy, ix) * kk[size_t(ky) * KW + kx];
              }
            }
          }
          out->values[((size_t(n) * O + o) * HO + oy) * WO + ox] = acc;
        }
  out->backward_fn = [x = x.get(), k = k.get(), N, C, H, W, O, KH, KW, HO, WO, stride,
                      padding](Node& self) {
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o)
        for (int oy = 0; oy < HO; ++oy)
          for (int ox = 0; ox < WO; ++ox) {
            double g = self.grad[((size_t(n) * O + o) * HO + oy) * WO + ox];
            if (g == 0) continue;
            for (int c = 0; c < C; ++c) {
              size_t kbase = (size_t(o) * C + c) * KH * KW;
              size_t xbase = (size_t(n) * C + c) * H;
              for (int ky = 0; ky < KH; ++ky) {
                int iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < KW; ++kx) {
                  int ix = ox * stride + kx - padding;
                  if (ix < 0 || ix >= W) continue;
                  size_t xi = (xbase + size_t(iy)) * W + size_t(ix);
                  size_t ki = kbase + size_t(ky) * KW + kx;
                  if (x->requires_grad) x->grad[xi] += g * k->values[ki];
                  if (k->requires_grad) k->grad[ki] += g * x->values[xi];
                }
              }
            }
          }
  };
  return out;
}

Tensor max_pool2d(const Tensor& x, int ksize) {
  require(x->shape.size() == 4, "max_pool2d: need NCHW, got " + shape_str(x->shape));
  require(ksize >= 1, "max_pool2d: bad ksize");
  int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  require(H % ksize == 0 && W % ksize == 0,
          "max_pool2d: dims of " + shape_str(x->shape) + " not divisible by " +
              std::to_string(ksize));
  int HO = H / ksize, WO = W / ksize;
  Tensor out = make({N, C, HO, WO}, {x});
  auto arg = std::make_shared<std::vector<size_t>>(out->size());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < HO; ++oy)
        for (int ox = 0; ox < WO; ++ox) {
          size_t best_i = 0;
          double best = -1e300;
          for (int ky = 0; ky < ksize; ++ky)
            for (int kx = 0; kx < ksize; ++kx) {
              size_t xi =
                  ((size_t(n) * C + c) * H + oy * ksize + ky) * W + size_t(ox) * ksize + kx;
              if (x->values[xi] > best) {
                best = x->values[xi];
                best_i = xi;
              }
            }
          size_t oi = ((size_t(n) * C + c) * HO + oy) * WO + ox;
          out->values[oi] = best;
          (*arg)[oi] = best_i;
        }
  out->backward_fn = [x = x.get(), arg](Node& self) {
    if (!x->requires_grad) return;
    for (size_t i = 0; i < self.size(); ++i) x->grad[(*arg)[i]] += self.grad[i];
  };
  return out;
}

Tensor nearest_upsample(const Tensor& x, int factor) {
  require(x->shape.size() == 4, "nearest_upsample: need NCHW, got " + shape_str(x->shape));
  require(factor >= 1, "nearest_upsample: bad factor");
  int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  int HO = H * factor, WO = W * factor;
  Tensor out = make({N, C, HO, WO}, {x});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < HO; ++oy) {
        const double* src = x->values.data() + ((size_t(n) * C + c) * H + oy / factor) * W;
        double* dst = out->values.data() + ((size_t(n) * C + c) * HO + oy) * WO;
        for (int ox = 0; ox < WO; ++ox) dst[ox] = src[ox / factor];
      }
  out->backward_fn = [x = x.get(), N, C, H, W, HO, WO, factor](Node& self) {
    if (!x->requires_grad) return;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < HO; ++oy) {
          double* dst = x->grad.data() + ((size_t(n) * C + c) * H + oy / factor) * W;
          const double* src = self.grad.data() + ((size_t(n) * C + c) * HO + oy) * WO;
          for (int ox = 0; ox < WO; ++ox) dst[ox / factor] += src[ox];
        }
  };
  return out;
}

Tensor softmax(const Tensor& a, int axis) {
  int rank = int(a->shape.size());
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "softmax: bad axis for " + shape_str(a->shape));
  size_t outer, inner;
  split_axis(a->shape, axis, outer, inner);
  size_t len = size_t(a->shape[size_t(axis)]);
  Tensor out = make(a->shape, {a});
  for (size_t o = 0; o < outer; ++o)
    for (size_t i = 0; i < inner; ++i) {
      size_t base = o * len * inner + i;
      double mx = -1e300;
      for (size_t j = 0; j < len; ++j) mx = std::max(mx, a->values[base + j * inner]);
      double z = 0;
      for (size_t j = 0; j < len; ++j) {
        double e = std::exp(a->values[base + j * inner] - mx);
        out->values[base + j * inner] = e;
        z += e;
      }
      for (size_t j = 0; j < len; ++j) out->values[base + j * inner] /= z;
    }
  out->backward_fn = [a = a.get(), y = out.get(), outer, inner, len](Node& self) {
    if (!a->requires_grad) return;
    for (size_t o = 0; o < outer; ++o)
      for (size_t i = 0; i < inner; ++i) {
        size_t base = o * len * inner + i;
        double dot = 0;
        for (size_t j = 0; j < len; ++j)
          dot += self.grad[base + j * inner] * y->values[base + j * inner];
        for (size_t j = 0; j < len; ++j) {
          size_t idx = base + j * inner;
          a->grad[idx] += y->values[idx] * (self.grad[idx] - dot);
        }
      }
  };
  return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  require(x->shape.size() == 2 && b->shape.size() == 1 && b->shape[0] == x->shape[1],
          "add_row_bias: shape mismatch " + shape_str(x->shape) + " vs " + shape_str(b->shape));
  int N = x->shape[0], D = x->shape[1];
  Tensor out = make(x->shape, {x, b});
  for (int n = 0; n < N; ++n)
    for (int d = 0; d < D; ++d)
      out->values[size_t(n) * D + d] = x->values[size_t(n) * D + d] + b->values[size_t(d)];
  out->backward_fn = [x = x.get(), b = b.get(), N, D](Node& self) {
    if (x->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) x->grad[i] += self.grad[i];
    if (b->requires_grad)
      for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d) b->grad[size_t(d)] += self.grad[size_t(n) * D + d];
  };
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require(x->shape.size() == 4 && b->shape.size() == 1 && b->shape[0] == x->shape[1],
          "add_channel_bias: shape mismatch " + shape_str(x->shape) + " vs " +
              shape_str(b->shape));
  int N = x->shape[0], C = x->shape[1];
  size_t hw = size_t(x->shape[2]) * x->shape[3];
  Tensor out = make(x->shape, {x, b});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      size_t base = (size_t(n) * C + c) * hw;
      for (size_t i = 0; i < hw; ++i) out->values[base + i] = x->values[base + i] + b->values[c];
    }
  out->backward_fn = [x = x.get(), b = b.get(), N, C, hw](Node& self) {
    if (x->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) x->grad[i] += self.grad[i];
    if (b->requires_grad)
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          size_t base = (size_t(n) * C + c) * hw;
          double acc = 0;
          for (size_t i = 0; i < hw; ++i) acc += self.grad[base + i];
          b->grad[size_t(c)] += acc;
        }
  };
  return out;
}

Tensor mul_spatial(const Tensor& x, const Tensor& m) {
  require(x->shape.size() == 4 && m->shape.size() == 4 && m->shape[0] == x->shape[0] &&
              m->shape[1] == 1 && m->shape[2] == x->shape[2] && m->shape[3] == x->shape[3],
          "mul_spatial: shape mismatch " + shape_str(x->shape) + " vs " + shape_str(m->shape));
  int N = x->shape[0], C = x->shape[1];
  size_t hw = size_t(x->shape[2]) * x->shape[3];
  Tensor out = make(x->shape, {x, m});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      size_t base = (size_t(n) * C + c) * hw;
      const double* mr = m->values.data() + size_t(n) * hw;
      for (size_t i = 0; i < hw; ++i) out->values[base + i] = x->values[base + i] * mr[i];
    }
  out->backward_fn = [x = x.get(), m = m.get(), N, C, hw](Node& self) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        size_t base = (size_t(n) * C + c) * hw;
        const double* mr = m->values.data() + size_t(n) * hw;
        if (x->requires_grad)
          for (size_t i = 0; i < hw; ++i) x->grad[base + i] += self.grad[base + i] * mr[i];
        if (m->requires_grad)
          for (size_t i = 0; i < hw; ++i)
            m->grad[size_t(n) * hw + i] += self.grad[base + i] * x->values[base + i];
      }
  };
  return out;
}

Tensor scalar_scale(const Tensor& x, const Tensor& s) {
  require(s->size() == 1, "scalar_scale: scale must be a single value, got " +
                              shape_str(s->shape));
  Tensor out = make(x->shape, {x, s});
  double sv = s->values[0];
  for (size_t i = 0; i < out->size(); ++i) out->values[i] = x->values[i] * sv;
  out->backward_fn = [x = x.get(), s = s.get()](Node& self) {
    double sv = s->values[0];
    if (x->requires_grad)
      for (size_t i = 0; i < self.size(); ++i) x->grad[i] += self.grad[i] * sv;
    if (s->requires_grad) {
      double acc = 0;
      for (size_t i = 0; i < self.size(); ++i) acc += self.grad[i] * x->values[i];
      s->grad[0] += acc;
    }
  };
  return out;
}

namespace {
// window index helpers shared by partition and merge
struct WinDims {
  int N, C, H, W, ws, nwy, nwx;
};

size_t win_src_index(const WinDims& d, size_t b, size_t t, size_t c) {
  size_t n = b / (size_t(d.nwy) * d.nwx);
  size_t rem = b % (size_t(d.nwy) * d.nwx);
  size_t wy = rem / size_t(d.nwx), wx = rem % size_t(d.nwx);
  size_t iy = wy * size_t(d.ws) + t / size_t(d.ws);
  size_t ix = wx * size_t(d.ws) + t % size_t(d.ws);
  return ((n * size_t(d.C) + c) * size_t(d.H) + iy) * size_t(d.W) + ix;
}
}  // namespace

Tensor window_partition(const Tensor& x, int ws) {
  require(x->shape.size() == 4, "window_partition: need NCHW, got " + shape_str(x->shape));
  int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  require(ws >= 1 && H % ws == 0 && W % ws == 0,
          "window_partition: dims of " + shape_str(x->shape) + " not divisible by " +
              std::to_string(ws));
  WinDims d{N, C, H, W, ws, H / ws, W / ws};
  int B = N * d.nwy * d.nwx, T = ws * ws;
  Tensor out = make({B, T, C}, {x});
  for (size_t b = 0; b < size_t(B); ++b)
    for (size_t t = 0; t < size_t(T); ++t)
      for (size_t c = 0; c < size_t(C); ++c)
        out->values[(b * T + t) * C + c] = x->values[win_src_index(d, b, t, c)];
  out->backward_fn = [x = x.get(), d, B, T, C](Node& self) {
    if (!x->requires_grad) return;
    for (size_t b = 0; b < size_t(B); ++b)
      for (size_t t = 0; t < size_t(T); ++t)
        for (size_t c = 0; c < size_t(C); ++c)
          x->grad[win_src_index(d, b, t, c)] += self.grad[(b * T + t) * C + c];
  };
  return out;
}

Tensor window_merge(const Tensor& x, int n, int c, int h, int w, int ws) {
  require(x->shape.size() == 3, "window_merge: need [B,T,C], got " + shape_str(x->shape));
  require(ws >= 1 && h % ws == 0 && w % ws == 0, "window_merge: bad dims");
  WinDims d{n, c, h, w, ws, h / ws, w / ws};
  int B = n * d.nwy * d.nwx, T = ws * ws;
  require(x->shape[0] == B && x->shape[1] == T && x->shape[2] == c,
          "window_merge: shape " + shape_str(x->shape) + " does not fit " +
              shape_str({n, c, h, w}) + " with window " + std::to_string(ws));
  Tensor out = make({n, c, h, w}, {x});
  for (size_t b = 0; b < size_t(B); ++b)
    for (size_t t = 0; t < size_t(T); ++t)
      for (size_t ch = 0; ch < size_t(c); ++ch)
        out->values[win_src_index(d, b, t, ch)] = x->values[(b * T + t) * c + ch];
  out->backward_fn = [x = x.get(), d, B, T, c](Node& self) {
    if (!x->requires_grad) return;
    for (size_t b = 0; b < size_t(B); ++b)
      for (size_t t = 0; t < size_t(T); ++t)
        for (size_t ch = 0; ch < size_t(c); ++ch)
          x->grad[(b * T + t) * c + ch] += self.grad[win_src_index(d, b, t, ch)];
  };
  return out;
}

// ---------------------------------------------------------------- backward

void backward(const Tensor& loss) {
  require(loss && loss->size() == 1,
          "backward: loss must be a scalar, got " + (loss ? shape_str(loss->shape) : "null"));
  if (!loss->requires_grad) return;  // nothing trainable upstream

  // post-order DFS: parents land before their consumers
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    size_t next = 0;
  };
  std::vector<Frame> stack{{loss.get()}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    bool descended = false;
    while (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) {
        stack.push_back({p});
        descended = true;
        break;
      }
    }
    if (!descended && f.next >= f.n->parents.size()) {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad.assign(n->size(), 0.0);
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------- optimizer

Parameter::Parameter(Tensor tt) : t(std::move(tt)) {
  t->requires_grad = true;
  m.assign(t->size(), 0.0);
  v.assign(t->size(), 0.0);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {}

void Adam::step() { step(cfg_.lr); }

void Adam::step(double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (Parameter* p : params_) {
    Node& n = *p->t;
    if (n.grad.size() != n.size()) n.grad.assign(n.size(), 0.0);
    for (size_t i = 0; i < n.size(); ++i) {
      double g = n.grad[i];
      p->m[i] = cfg_.beta1 * p->m[i] + (1.0 - cfg_.beta1) * g;
      p->v[i] = cfg_.beta2 * p->v[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = p->m[i] / bc1;
      double vhat = p->v[i] / bc2;
      n.values[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    n.grad.assign(n.size(), 0.0);
  }
}

}  // namespace cdkit::tensor
