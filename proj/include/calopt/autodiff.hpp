// Reverse-mode differentiation over dense double tensors.
//
// A Tape is an eagerly-evaluated list of nodes: creating an op computes its
// output immediately and records enough to run the backward pass. Tapes are
// cheap and rebuilt per batch. Gradients flow into every node created with
// requires_grad, which covers both model parameters and designated inputs
// (the design vector).
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "calopt/tensor.hpp"

namespace calopt {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named parameter tensors with gradient accumulators.
struct ParamSet {
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> grads;

  void add(const std::string& name, Tensor t) {
    grads[name] = Tensor::zeros(t.shape);
    params[name] = std::move(t);
  }
  Tensor& at(const std::string& name) { return params.at(name); }
  const Tensor& at(const std::string& name) const { return params.at(name); }
  Tensor& grad(const std::string& name) { return grads.at(name); }
  void zero_grads() {
    for (auto& [k, g] : grads)
      std::fill(g.values.begin(), g.values.end(), 0.0);
  }
  bool operator==(const ParamSet& o) const {
    if (params.size() != o.params.size()) return false;
    for (const auto& [k, v] : params) {
      auto it = o.params.find(k);
      if (it == o.params.end() || it->second.shape != v.shape ||
          it->second.values != v.values)
        return false;
    }
    return true;
  }
};

enum class OpKind {
  Input,
  Constant,
  MatMul,
  AddBroadcast,  // M x N plus 1 x N (or equal shapes)
  Elu,
  Exp,
  Log,
  Square,
  Mul,           // elementwise, equal shapes
  Divide,        // elementwise, equal shapes
  Affine,        // scale * x + shift (scalars)
  MeanAll,
  SumAll,
  SoftmaxRows,   // over last axis
  LogSumExpAll,
  LogSumExpRows,
  NormalLogPdf,  // standard-normal log-density, elementwise
  ConcatCols,
  RepeatRow,     // tile a 1 x N row to M x N
  GatherCols,    // row m picks column idx[m]
  GatherPrefix,  // row m sums columns [0, idx[m])
};

using NodeId = int;

class Tape {
 public:
  // Leaves.
  NodeId input(Tensor value, bool requires_grad = false,
               std::string name = "input");
  NodeId constant(Tensor value, std::string name = "const");

  // Primitive ops. Each validates shapes, evaluates eagerly, and checks the
  // output for non-finite values.
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);  // broadcast add
  NodeId elu(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId square(NodeId a);
  NodeId mul(NodeId a, NodeId b);
  NodeId divide(NodeId a, NodeId b);
  NodeId affine(NodeId a, double scale, double shift);
  NodeId mean_all(NodeId a);
  NodeId sum_all(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId logsumexp_all(NodeId a);
  NodeId logsumexp_rows(NodeId a);
  NodeId normal_log_pdf(NodeId a);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId repeat_row(NodeId a, std::size_t times);
  NodeId gather_cols(NodeId a, std::vector<std::size_t> idx);
  NodeId gather_prefix(NodeId a, std::vector<std::size_t> idx);

  const Tensor& value(NodeId id) const { return nodes_.at(id).out; }
  const Tensor& grad(NodeId id) const;

  // Reverse pass from a scalar root. Each node is visited once, in reverse
  // creation order (creation order is already topological).
  void backward(NodeId root);

  // Convenience: bind every parameter of a ParamSet as a differentiable
  // input; returns name -> node id.
  std::map<std::string, NodeId> bind(const ParamSet& ps);
  // After backward(), accumulate tape gradients into the ParamSet slots.
  void accumulate_grads(ParamSet& ps,
                        const std::map<std::string, NodeId>& bound) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind;
    NodeId a = -1, b = -1;
    Tensor out;
    Tensor grad;            // filled by backward
    bool requires_grad = false;  // propagated from inputs
    double scale = 1.0, shift = 0.0;
    std::vector<std::size_t> idx;  // gather indices
    std::string name;
  };

  NodeId push(Node n);
  void check_finite(const Node& n, NodeId id) const;
  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Builds a scalar graph from a flat coordinate vector; used by grad_check.
using ScalarGraphBuilder =
    std::function<NodeId(Tape&, NodeId /*point: 1 x n input node*/)>;

// Compares backward gradients against central finite differences.
// Returns the worst relative error with denominator
// max(|analytic|, |numeric|, 1e-8).
double grad_check(const ScalarGraphBuilder& build,
                  const std::vector<double>& point, double step = 1e-5);

}  // namespace calopt
