#include "radimpute/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace radimpute::ad {

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(n, 0.0);
  return t;
}

namespace {

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace

void Tape::check_finite(const Tensor& t) const {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value in forward pass");
  }
}

Tape::Id Tape::leaf(Tensor value, bool requires_grad) {
  check_finite(value);
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::push(Node node) {
  node.requires_grad = node.requires_grad ||
                       std::any_of(node.parents.begin(), node.parents.end(),
                                   [&](Id p) { return nodes_[p].requires_grad; });
  nodes_.push_back(std::move(node));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (A.shape.size() != 2) throw std::invalid_argument("matmul: left operand must be 2-D");
  const std::size_t m = A.shape[0], n = A.shape[1];
  Node node;
  node.op = Op::kMatMul;
  node.parents = {a, b};
  if (B.shape.size() == 1) {
    if (B.shape[0] != n) throw std::invalid_argument("matmul: inner dimensions differ");
    node.value = Tensor::zeros({m});
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* row = &A.data[i * n];
      for (std::size_t k = 0; k < n; ++k) acc += row[k] * B.data[k];
      node.value.data[i] = acc;
    }
  } else if (B.shape.size() == 2) {
    if (B.shape[0] != n) throw std::invalid_argument("matmul: inner dimensions differ");
    const std::size_t p = B.shape[1];
    node.value = Tensor::zeros({m, p});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double aik = A.data[i * n + k];
        for (std::size_t j = 0; j < p; ++j) {
          node.value.data[i * p + j] += aik * B.data[k * p + j];
        }
      }
    }
  } else {
    throw std::invalid_argument("matmul: right operand must be 1-D or 2-D");
  }
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!same_shape(A, B)) throw std::invalid_argument("add: shape mismatch");
  Node node;
  node.op = Op::kAdd;
  node.parents = {a, b};
  node.value = A;
  for (std::size_t i = 0; i < B.numel(); ++i) node.value.data[i] += B.data[i];
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!same_shape(A, B)) throw std::invalid_argument("sub: shape mismatch");
  Node node;
  node.op = Op::kSub;
  node.parents = {a, b};
  node.value = A;
  for (std::size_t i = 0; i < B.numel(); ++i) node.value.data[i] -= B.data[i];
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!same_shape(A, B)) throw std::invalid_argument("mul: shape mismatch");
  Node node;
  node.op = Op::kMul;
  node.parents = {a, b};
  node.value = A;
  for (std::size_t i = 0; i < B.numel(); ++i) node.value.data[i] *= B.data[i];
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::concat(Id a, Id b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (A.shape.size() != 1 || B.shape.size() != 1) {
    throw std::invalid_argument("concat: operands must be 1-D");
  }
  Node node;
  node.op = Op::kConcat;
  node.parents = {a, b};
  node.value = Tensor::zeros({A.numel() + B.numel()});
  std::copy(A.data.begin(), A.data.end(), node.value.data.begin());
  std::copy(B.data.begin(), B.data.end(), node.value.data.begin() + A.numel());
  return push(std::move(node));
}

Tape::Id Tape::sigmoid(Id a) {
  Node node;
  node.op = Op::kSigmoid;
  node.parents = {a};
  node.value = nodes_[a].value;
  for (double& v : node.value.data) v = 1.0 / (1.0 + std::exp(-v));
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::tanh(Id a) {
  Node node;
  node.op = Op::kTanh;
  node.parents = {a};
  node.value = nodes_[a].value;
  for (double& v : node.value.data) v = std::tanh(v);
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::exp(Id a) {
  Node node;
  node.op = Op::kExp;
  node.parents = {a};
  node.value = nodes_[a].value;
  for (double& v : node.value.data) v = std::exp(v);
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::neg(Id a) {
  Node node;
  node.op = Op::kNeg;
  node.parents = {a};
  node.value = nodes_[a].value;
  for (double& v : node.value.data) v = -v;
  return push(std::move(node));
}

Tape::Id Tape::relu(Id a) {
  Node node;
  node.op = Op::kRelu;
  node.parents = {a};
  node.value = nodes_[a].value;
  for (double& v : node.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(node));
}

Tape::Id Tape::scale(Id a, double s) {
  Node node;
  node.op = Op::kScale;
  node.parents = {a};
  node.aux = s;
  node.value = nodes_[a].value;
  for (double& v : node.value.data) v *= s;
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::stack(std::span<const Id> scalars) {
  if (scalars.empty()) throw std::invalid_argument("stack: empty list");
  Node node;
  node.op = Op::kStack;
  node.value = Tensor::zeros({scalars.size()});
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Tensor& s = nodes_[scalars[i]].value;
    if (s.numel() != 1) throw std::invalid_argument("stack: operands must be scalars");
    node.value.data[i] = s.data[0];
    node.parents.push_back(scalars[i]);
  }
  return push(std::move(node));
}

Tape::Id Tape::softmax(Id v) {
  const Tensor& X = nodes_[v].value;
  if (X.shape.size() != 1) throw std::invalid_argument("softmax: operand must be 1-D");
  Node node;
  node.op = Op::kSoftmax;
  node.parents = {v};
  node.value = X;
  const double hi = *std::max_element(X.data.begin(), X.data.end());
  double total = 0.0;
  for (double& e : node.value.data) {
    e = std::exp(e - hi);
    total += e;
  }
  for (double& e : node.value.data) e /= total;
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::weighted_sum(Id weights, std::span<const Id> vectors) {
  const Tensor& W = nodes_[weights].value;
  if (W.shape.size() != 1 || W.numel() != vectors.size()) {
    throw std::invalid_argument("weighted_sum: one weight per vector required");
  }
  if (vectors.empty()) throw std::invalid_argument("weighted_sum: empty list");
  Node node;
  node.op = Op::kWeightedSum;
  node.parents = {weights};
  node.value = Tensor::zeros(nodes_[vectors[0]].value.shape);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const Tensor& V = nodes_[vectors[i]].value;
    if (!same_shape(V, node.value)) throw std::invalid_argument("weighted_sum: shape mismatch");
    for (std::size_t k = 0; k < V.numel(); ++k) node.value.data[k] += W.data[i] * V.data[k];
    node.parents.push_back(vectors[i]);
  }
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::sum(std::span<const Id> terms) {
  if (terms.empty()) throw std::invalid_argument("sum: empty list");
  Node node;
  node.op = Op::kSum;
  node.value = nodes_[terms[0]].value;
  node.parents.push_back(terms[0]);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    const Tensor& T = nodes_[terms[i]].value;
    if (!same_shape(T, node.value)) throw std::invalid_argument("sum: shape mismatch");
    for (std::size_t k = 0; k < T.numel(); ++k) node.value.data[k] += T.data[k];
    node.parents.push_back(terms[i]);
  }
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::masked_mse(Id a, Id b, Id mask) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  const Tensor& M = nodes_[mask].value;
  if (!same_shape(A, B) || !same_shape(A, M)) {
    throw std::invalid_argument("masked_mse: shape mismatch");
  }
  double count = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < A.numel(); ++i) {
    if (M.data[i] != 0.0) {
      const double d = M.data[i] * (A.data[i] - B.data[i]);
      acc += d * d;
      count += 1.0;
    }
  }
  Node node;
  node.op = Op::kMaskedMse;
  node.parents = {a, b, mask};
  node.aux = count;
  node.value = Tensor::scalar(count > 0.0 ? acc / count : 0.0);
  check_finite(node.value);
  return push(std::move(node));
}

Tape::Id Tape::mse(Id a, Id b) {
  Tensor ones = nodes_[a].value;
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  return masked_mse(a, b, constant(std::move(ones)));
}

Tensor& Tape::grad_buffer(Id id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_ready = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(Id id) const {
  const Node& n = nodes_[id];
  if (!n.grad_ready) throw std::logic_error("gradient not computed for this node");
  return n.grad;
}

void Tape::backward(Id loss) {
  if (nodes_[loss].value.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  // Zero every reachable gradient up front so dead paths (e.g. an all-zero
  // mask) still report zeros instead of missing buffers.
  for (Node& n : nodes_) {
    n.grad_ready = false;
    if (n.requires_grad) {
      n.grad = Tensor::zeros(n.value.shape);
      n.grad_ready = true;
    }
  }
  grad_buffer(loss).data[0] = 1.0;

  for (Id id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_ready || !n.requires_grad) continue;
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        const Tensor& A = nodes_[n.parents[0]].value;
        const Tensor& B = nodes_[n.parents[1]].value;
        const std::size_t m = A.shape[0], k = A.shape[1];
        const bool vec = B.shape.size() == 1;
        const std::size_t p = vec ? 1 : B.shape[1];
        if (nodes_[n.parents[0]].requires_grad) {
          Tensor& ga = grad_buffer(n.parents[0]);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < p; ++j) {
              const double gij = g.data[i * p + j];
              for (std::size_t c = 0; c < k; ++c) ga.data[i * k + c] += gij * B.data[c * p + j];
            }
          }
        }
        if (nodes_[n.parents[1]].requires_grad) {
          Tensor& gb = grad_buffer(n.parents[1]);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < p; ++j) {
              const double gij = g.data[i * p + j];
              for (std::size_t c = 0; c < k; ++c) gb.data[c * p + j] += gij * A.data[i * k + c];
            }
          }
        }
        break;
      }
      case Op::kAdd:
      case Op::kSum: {
        for (Id parent : n.parents) {
          if (!nodes_[parent].requires_grad) continue;
          Tensor& gp = grad_buffer(parent);
          for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] += g.data[i];
        }
        break;
      }
      case Op::kSub: {
        if (nodes_[n.parents[0]].requires_grad) {
          Tensor& ga = grad_buffer(n.parents[0]);
          for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
        }
        if (nodes_[n.parents[1]].requires_grad) {
          Tensor& gb = grad_buffer(n.parents[1]);
          for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] -= g.data[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& A = nodes_[n.parents[0]].value;
        const Tensor& B = nodes_[n.parents[1]].value;
        if (nodes_[n.parents[0]].requires_grad) {
          Tensor& ga = grad_buffer(n.parents[0]);
          for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * B.data[i];
        }
        if (nodes_[n.parents[1]].requires_grad) {
          Tensor& gb = grad_buffer(n.parents[1]);
          for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i] * A.data[i];
        }
        break;
      }
      case Op::kConcat: {
        const std::size_t na = nodes_[n.parents[0]].value.numel();
        if (nodes_[n.parents[0]].requires_grad) {
          Tensor& ga = grad_buffer(n.parents[0]);
          for (std::size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
        }
        if (nodes_[n.parents[1]].requires_grad) {
          Tensor& gb = grad_buffer(n.parents[1]);
          for (std::size_t i = 0; i < gb.numel(); ++i) gb.data[i] += g.data[na + i];
        }
        break;
      }
      case Op::kSigmoid: {
        Tensor& gp = grad_buffer(n.parents[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double y = n.value.data[i];
          gp.data[i] += g.data[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kTanh: {
        Tensor& gp = grad_buffer(n.parents[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double y = n.value.data[i];
          gp.data[i] += g.data[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kExp: {
        Tensor& gp = grad_buffer(n.parents[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] += g.data[i] * n.value.data[i];
        break;
      }
      case Op::kNeg: {
        Tensor& gp = grad_buffer(n.parents[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] -= g.data[i];
        break;
      }
      case Op::kRelu: {
        const Tensor& X = nodes_[n.parents[0]].value;
        Tensor& gp = grad_buffer(n.parents[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          if (X.data[i] > 0.0) gp.data[i] += g.data[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& gp = grad_buffer(n.parents[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) gp.data[i] += g.data[i] * n.aux;
        break;
      }
      case Op::kStack: {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
          if (!nodes_[n.parents[i]].requires_grad) continue;
          grad_buffer(n.parents[i]).data[0] += g.data[i];
        }
        break;
      }
      case Op::kSoftmax: {
        Tensor& gp = grad_buffer(n.parents[0]);
        double dot = 0.0;
        for (std::size_t i = 0; i < g.numel(); ++i) dot += g.data[i] * n.value.data[i];
        for (std::size_t i = 0; i < g.numel(); ++i) {
          gp.data[i] += n.value.data[i] * (g.data[i] - dot);
        }
        break;
      }
      case Op::kWeightedSum: {
        const Tensor& W = nodes_[n.parents[0]].value;
        const bool need_w = nodes_[n.parents[0]].requires_grad;
        for (std::size_t i = 1; i < n.parents.size(); ++i) {
          const Tensor& V = nodes_[n.parents[i]].value;
          if (need_w) {
            double dot = 0.0;
            for (std::size_t k = 0; k < g.numel(); ++k) dot += g.data[k] * V.data[k];
            grad_buffer(n.parents[0]).data[i - 1] += dot;
          }
          if (nodes_[n.parents[i]].requires_grad) {
            Tensor& gv = grad_buffer(n.parents[i]);
            for (std::size_t k = 0; k < g.numel(); ++k) gv.data[k] += g.data[k] * W.data[i - 1];
          }
        }
        break;
      }
      case Op::kMaskedMse: {
        if (n.aux <= 0.0) break;
        const Tensor& A = nodes_[n.parents[0]].value;
        const Tensor& B = nodes_[n.parents[1]].value;
        const Tensor& M = nodes_[n.parents[2]].value;
        const double c = 2.0 * g.data[0] / n.aux;
        if (nodes_[n.parents[0]].requires_grad) {
          Tensor& ga = grad_buffer(n.parents[0]);
          for (std::size_t i = 0; i < A.numel(); ++i) {
            const double m2 = M.data[i] * M.data[i];
            ga.data[i] += c * m2 * (A.data[i] - B.data[i]);
          }
        }
        if (nodes_[n.parents[1]].requires_grad) {
          Tensor& gb = grad_buffer(n.parents[1]);
          for (std::size_t i = 0; i < B.numel(); ++i) {
            const double m2 = M.data[i] * M.data[i];
            gb.data[i] -= c * m2 * (A.data[i] - B.data[i]);
          }
        }
        break;
      }
    }
  }
}

void Tape::clear() { nodes_.clear(); }

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg,
               std::int64_t t) {
  if (t < 1) throw std::invalid_argument("adam step count starts at 1");
  if (state.m.data.empty()) {
    state.m = Tensor::zeros(param.shape);
    state.v = Tensor::zeros(param.shape);
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = grad.data[i];
    state.m.data[i] = cfg.beta1 * state.m.data[i] + (1.0 - cfg.beta1) * g;
    state.v.data[i] = cfg.beta2 * state.v.data[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m.data[i] / bc1;
    const double vhat = state.v.data[i] / bc2;
    param.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

namespace {

void ensure_little_endian() {
  const std::uint16_t probe = 1;
  if (*reinterpret_cast<const std::uint8_t*>(&probe) != 1) {
    throw std::runtime_error("checkpoint io requires a little-endian host");
  }
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                  const std::string& meta_json) {
  ensure_little_endian();
  nlohmann::ordered_json header;
  auto list = nlohmann::ordered_json::array();
  for (const auto& [name, t] : tensors) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = t->shape;
    list.push_back(std::move(entry));
  }
  header["tensors"] = std::move(list);
  header["meta"] = meta_json.empty() ? nlohmann::ordered_json::object()
                                     : nlohmann::ordered_json::parse(meta_json);
  const std::string head = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write("RIMP", 4);
  const std::uint32_t len = static_cast<std::uint32_t>(head.size());
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, t] : tensors) {
    f.write(reinterpret_cast<const char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("failed writing checkpoint: " + path);
}

LoadedTensors load_tensors(const std::string& path) {
  ensure_little_endian();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "RIMP", 4) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  std::string head(len, '\0');
  f.read(head.data(), len);
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  const auto header = nlohmann::json::parse(head);

  LoadedTensors out;
  out.meta_json = header.at("meta").dump();
  for (const auto& entry : header.at("tensors")) {
    Tensor t = Tensor::zeros(entry.at("shape").get<std::vector<std::size_t>>());
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
    out.tensors[entry.at("name").get<std::string>()] = std::move(t);
  }
  return out;
}

}  // namespace radimpute::ad
