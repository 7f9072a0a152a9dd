#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace radimpute::ad {

// Dense row-major tensor of 64-bit floats.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor scalar(double v) { return Tensor{{1}, {v}}; }
  static Tensor vector(std::vector<double> v) { return Tensor{{v.size()}, std::move(v)}; }

  std::size_t numel() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
};

// Recorded computation graph for one forward pass. Nodes are appended in
// topological order; backward() replays them once in reverse. Every forward
// result is checked for NaN/Inf and throws std::runtime_error on the first
// non-finite value.
class Tape {
 public:
  using Id = std::int32_t;

  Id param(Tensor value) { return leaf(std::move(value), true); }
  Id constant(Tensor value) { return leaf(std::move(value), false); }

  Id matmul(Id a, Id b);             // (m,n)x(n)->(m) or (m,n)x(n,p)->(m,p)
  Id add(Id a, Id b);                // same shape
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);                // elementwise
  Id concat(Id a, Id b);             // 1-D
  Id sigmoid(Id a);
  Id tanh(Id a);
  Id exp(Id a);
  Id neg(Id a);
  Id relu(Id a);                     // max(0, x), subgradient 0 at 0
  Id scale(Id a, double s);
  Id stack(std::span<const Id> scalars);          // scalars -> 1-D vector
  Id softmax(Id v);                                // over a 1-D vector
  Id weighted_sum(Id weights, std::span<const Id> vectors);
  Id sum(std::span<const Id> terms);               // same-shape accumulation

  // Mean squared error over the cells where mask is nonzero; an all-zero
  // mask yields exactly 0 with zero gradients.
  Id masked_mse(Id a, Id b, Id mask);
  Id mse(Id a, Id b);

  const Tensor& value(Id id) const { return nodes_[id].value; }
  const Tensor& grad(Id id) const;

  // Reverse sweep from a scalar loss; gradients accumulate per node.
  void backward(Id loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf, kMatMul, kAdd, kSub, kMul, kConcat, kSigmoid, kTanh, kExp, kNeg,
    kRelu, kScale, kStack, kSoftmax, kWeightedSum, kSum, kMaskedMse,
  };
  struct Node {
    Op op = Op::kLeaf;
    Tensor value;
    Tensor grad;
    std::vector<Id> parents;
    double aux = 0.0;          // scale factor / masked count
    bool requires_grad = false;
    bool grad_ready = false;
  };

  Id leaf(Tensor value, bool requires_grad);
  Id push(Node node);
  void check_finite(const Tensor& t) const;
  Tensor& grad_buffer(Id id);

  std::vector<Node> nodes_;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m, v;
};

// One bias-corrected Adam update; t counts from 1.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg,
               std::int64_t t);

// Checkpoints: 'RIMP' magic, little-endian u32 JSON header length, a JSON
// header naming tensors/shapes plus free-form metadata, then raw float64
// payload in header order.
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                  const std::string& meta_json);

struct LoadedTensors {
  std::map<std::string, Tensor> tensors;
  std::string meta_json;
};
LoadedTensors load_tensors(const std::string& path);

}  // namespace radimpute::ad
