#pragma once
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cdkit::tensor {

// Define-by-run graph node. Interior nodes are created per forward pass and
// dropped afterwards; parameter leaves persist across steps.
struct Node {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized lazily by backward()
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // accumulates into parents' grad
  bool requires_grad = false;

  size_t size() const { return values.size(); }
};

using Tensor = std::shared_ptr<Node>;

size_t numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

Tensor constant(std::vector<int> shape, std::vector<double> values);
Tensor constant(std::vector<int> shape, double fill = 0.0);
// Leaf that participates in backward().
Tensor leaf(std::vector<int> shape, std::vector<double> values);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor logsigmoid(const Tensor& a);  // numerically stable log(sigmoid(x))
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

// ---- shape / structure ----
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor transpose_last2(const Tensor& a);
Tensor sum(const Tensor& a);   // -> [1]
Tensor mean(const Tensor& a);  // -> [1]

// ---- linear algebra ----
// [m,k]x[k,n], [B,m,k]x[B,k,n], or [B,m,k]x[k,n] (shared right operand).
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- nn ops, NCHW layout ----
Tensor conv2d(const Tensor& x, const Tensor& k, int stride = 1, int padding = 0);
Tensor max_pool2d(const Tensor& x, int ksize = 2);        // stride = ksize
Tensor nearest_upsample(const Tensor& x, int factor = 2);
Tensor softmax(const Tensor& a, int axis);
Tensor add_row_bias(const Tensor& x, const Tensor& b);      // [N,D] + [D]
Tensor add_channel_bias(const Tensor& x, const Tensor& b);  // [N,C,H,W] + [C]
Tensor mul_spatial(const Tensor& x, const Tensor& m);       // [N,C,H,W] * [N,1,H,W]
Tensor scalar_scale(const Tensor& x, const Tensor& s);      // x * s, s shape [1]

// [N,C,H,W] -> [N*(H/ws)*(W/ws), ws*ws, C] and back.
Tensor window_partition(const Tensor& x, int ws);
Tensor window_merge(const Tensor& x, int n, int c, int h, int w, int ws);

// Reverse-mode pass from a scalar loss. Zeroes grads of every node reachable
// in the recorded graph first, then accumulates.
void backward(const Tensor& loss);

// ---- optimizer ----
struct Parameter {
  Tensor t;
  std::vector<double> m, v;  // adam moments, zero at construction

  explicit Parameter(Tensor tt);
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<Parameter*> params, AdamConfig cfg = {});
  // Bias-corrected moment update; clears every parameter gradient afterwards.
  void step();
  void step(double lr);
  int steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  int t_ = 0;
};

}  // namespace cdkit::tensor
