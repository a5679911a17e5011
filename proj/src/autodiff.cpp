#include "calopt/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "calopt/mathutil.hpp"

namespace calopt {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>;
using MapMat = Eigen::Map<EMat>;
using CMapMat = Eigen::Map<const EMat>;

CMapMat as_mat(const Tensor& t) {
  return CMapMat(t.values.data(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}
MapMat as_mat(Tensor& t) {
  return MapMat(t.values.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

const char* kind_name(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::AddBroadcast: return "add";
    case OpKind::Elu: return "elu";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Square: return "square";
    case OpKind::Mul: return "mul";
    case OpKind::Divide: return "divide";
    case OpKind::Affine: return "affine";
    case OpKind::MeanAll: return "mean";
    case OpKind::SumAll: return "sum";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::LogSumExpAll: return "logsumexp_all";
    case OpKind::LogSumExpRows: return "logsumexp_rows";
    case OpKind::NormalLogPdf: return "normal_log_pdf";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::RepeatRow: return "repeat_row";
    case OpKind::GatherCols: return "gather_cols";
    case OpKind::GatherPrefix: return "gather_prefix";
  }
  return "?";
}

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw StateError("Tape: invalid node id " + std::to_string(id));
  return nodes_[id];
}

void Tape::check_finite(const Node& n, NodeId id) const {
  for (double v : n.out.values)
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite output at node ") +
                         std::to_string(id) + " (" + kind_name(n.kind) + ")");
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
  check_finite(nodes_.back(), id);
  backward_done_ = false;
  return id;
}

NodeId Tape::input(Tensor value, bool requires_grad, std::string name) {
  Node n;
  n.kind = OpKind::Input;
  n.out = std::move(value);
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Tape::constant(Tensor value, std::string name) {
  Node n;
  n.kind = OpKind::Constant;
  n.out = std::move(value);
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId ia, NodeId ib) {
  const Node &na = node(ia), &nb = node(ib);
  if (na.out.shape.size() != 2 || nb.out.shape.size() != 2 ||
      na.out.cols() != nb.out.rows())
    throw ShapeError("matmul: incompatible shapes " + na.out.shape_str() +
                     " x " + nb.out.shape_str());
  Node n;
  n.kind = OpKind::MatMul;
  n.a = ia;
  n.b = ib;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.out = Tensor::zeros({na.out.rows(), nb.out.cols()});
  as_mat(n.out).noalias() = as_mat(na.out) * as_mat(nb.out);
  return push(std::move(n));
}

NodeId Tape::add(NodeId ia, NodeId ib) {
  const Node &na = node(ia), &nb = node(ib);
  const bool same = na.out.same_shape(nb.out);
  const bool bcast = nb.out.rows() == 1 && na.out.cols() == nb.out.cols() &&
                     na.out.shape.size() == 2 && nb.out.shape.size() == 2;
  if (!same && !bcast)
    throw ShapeError("add: incompatible shapes " + na.out.shape_str() + " + " +
                     nb.out.shape_str());
  Node n;
  n.kind = OpKind::AddBroadcast;
  n.a = ia;
  n.b = ib;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.out = na.out;
  const std::size_t C = na.out.cols();
  for (std::size_t i = 0; i < n.out.values.size(); ++i)
    n.out.values[i] += same ? nb.out.values[i] : nb.out.values[i % C];
  return push(std::move(n));
}

NodeId Tape::elu(NodeId ia) {
  const Node& na = node(ia);
  Node n;
  n.kind = OpKind::Elu;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  n.out = na.out;
  for (double& v : n.out.values) v = v > 0.0 ? v : std::expm1(v);
  return push(std::move(n));
}

NodeId Tape::exp(NodeId ia) {
  const Node& na = node(ia);
  Node n;
  n.kind = OpKind::Exp;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  n.out = na.out;
  for (double& v : n.out.values) v = std::exp(v);
  return push(std::move(n));
}

NodeId Tape::log(NodeId ia) {
  const Node& na = node(ia);
  Node n;
  n.kind = OpKind::Log;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  n.out = na.out;
  for (double& v : n.out.values) v = std::log(v);
  return push(std::move(n));
}

NodeId Tape::square(NodeId ia) {
  const Node& na = node(ia);
  Node n;
  n.kind = OpKind::Square;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  n.out = na.out;
  for (double& v : n.out.values) v = v * v;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId ia, NodeId ib) {
  const Node &na = node(ia), &nb = node(ib);
  if (!na.out.same_shape(nb.out))
    throw ShapeError("mul: shape mismatch " + na.out.shape_str() + " vs " +
                     nb.out.shape_str());
  Node n;
  n.kind = OpKind::Mul;
  n.a = ia;
  n.b = ib;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.out = na.out;
  for (std::size_t i = 0; i < n.out.values.size(); ++i)
    n.out.values[i] *= nb.out.values[i];
  return push(std::move(n));
}

NodeId Tape::divide(NodeId ia, NodeId ib) {
  const Node &na = node(ia), &nb = node(ib);
  if (!na.out.same_shape(nb.out))
    throw ShapeError("divide: shape mismatch " + na.out.shape_str() + " vs " +
                     nb.out.shape_str());
  Node n;
  n.kind = OpKind::Divide;
  n.a = ia;
  n.b = ib;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.out = na.out;
  for (std::size_t i = 0; i < n.out.values.size(); ++i)
    n.out.values[i] /= nb.out.values[i];
  return push(std::move(n));
}

NodeId Tape::affine(NodeId ia, double scale, double shift) {
  const Node& na = node(ia);
  Node n;
  n.kind = OpKind::Affine;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  n.scale = scale;
  n.shift = shift;
  n.out = na.out;
  for (double& v : n.out.values) v = scale * v + shift;
  return push(std::move(n));
}

NodeId Tape::mean_all(NodeId ia) {
  const Node& na = node(ia);
  Node n;
  n.kind = OpKind::MeanAll;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  double s = 0.0;
  for (double v : na.out.values) s += v;
  n.out = Tensor::scalar(s / static_cast<double>(na.out.size()));
  return push(std::move(n));
}

NodeId Tape::sum_all(NodeId ia) {
  const Node& na = node(ia);
  Node n;
  n.kind = OpKind::SumAll;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  double s = 0.0;
  for (double v : na.out.values) s += v;
  n.out = Tensor::scalar(s);
  return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId ia) {
  const Node& na = node(ia);
  if (na.out.shape.size() != 2)
    throw ShapeError("softmax_rows: rank-2 tensor required");
  Node n;
  n.kind = OpKind::SoftmaxRows;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  n.out = na.out;
  const std::size_t R = na.out.rows(), C = na.out.cols();
  for (std::size_t r = 0; r < R; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, n.out.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      n.out.at(r, c) = std::exp(n.out.at(r, c) - mx);
      s += n.out.at(r, c);
    }
    for (std::size_t c = 0; c < C; ++c) n.out.at(r, c) /= s;
  }
  return push(std::move(n));
}

NodeId Tape::logsumexp_all(NodeId ia) {
  const Node& na = node(ia);
  Node n;
  n.kind = OpKind::LogSumExpAll;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : na.out.values) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : na.out.values) s += std::exp(v - mx);
  n.out = Tensor::scalar(mx + std::log(s));
  return push(std::move(n));
}

NodeId Tape::logsumexp_rows(NodeId ia) {
  const Node& na = node(ia);
  if (na.out.shape.size() != 2)
    throw ShapeError("logsumexp_rows: rank-2 tensor required");
  Node n;
  n.kind = OpKind::LogSumExpRows;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  const std::size_t R = na.out.rows(), C = na.out.cols();
  n.out = Tensor::zeros({R, 1});
  for (std::size_t r = 0; r < R; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, na.out.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(na.out.at(r, c) - mx);
    n.out.values[r] = mx + std::log(s);
  }
  return push(std::move(n));
}

NodeId Tape::normal_log_pdf(NodeId ia) {
  const Node& na = node(ia);
  Node n;
  n.kind = OpKind::NormalLogPdf;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  n.out = na.out;
  for (double& v : n.out.values) v = ::calopt::normal_log_pdf(v);
  return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId ia, NodeId ib) {
  const Node &na = node(ia), &nb = node(ib);
  if (na.out.shape.size() != 2 || nb.out.shape.size() != 2 ||
      na.out.rows() != nb.out.rows())
    throw ShapeError("concat_cols: row mismatch " + na.out.shape_str() +
                     " vs " + nb.out.shape_str());
  Node n;
  n.kind = OpKind::ConcatCols;
  n.a = ia;
  n.b = ib;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  const std::size_t R = na.out.rows(), Ca = na.out.cols(), Cb = nb.out.cols();
  n.out = Tensor::zeros({R, Ca + Cb});
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < Ca; ++c) n.out.at(r, c) = na.out.at(r, c);
    for (std::size_t c = 0; c < Cb; ++c) n.out.at(r, Ca + c) = nb.out.at(r, c);
  }
  return push(std::move(n));
}

NodeId Tape::repeat_row(NodeId ia, std::size_t times) {
  const Node& na = node(ia);
  if (na.out.shape.size() != 2 || na.out.rows() != 1)
    throw ShapeError("repeat_row: 1 x N tensor required, got " +
                     na.out.shape_str());
  Node n;
  n.kind = OpKind::RepeatRow;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  const std::size_t C = na.out.cols();
  n.out = Tensor::zeros({times, C});
  for (std::size_t r = 0; r < times; ++r)
    for (std::size_t c = 0; c < C; ++c) n.out.at(r, c) = na.out.values[c];
  return push(std::move(n));
}

NodeId Tape::gather_cols(NodeId ia, std::vector<std::size_t> idx) {
  const Node& na = node(ia);
  if (na.out.shape.size() != 2 || idx.size() != na.out.rows())
    throw ShapeError("gather_cols: index count must equal row count");
  for (auto i : idx)
    if (i >= na.out.cols()) throw ShapeError("gather_cols: index out of range");
  Node n;
  n.kind = OpKind::GatherCols;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  n.idx = std::move(idx);
  const std::size_t R = na.out.rows();
  n.out = Tensor::zeros({R, 1});
  for (std::size_t r = 0; r < R; ++r) n.out.values[r] = na.out.at(r, n.idx[r]);
  return push(std::move(n));
}

NodeId Tape::gather_prefix(NodeId ia, std::vector<std::size_t> idx) {
  const Node& na = node(ia);
  if (na.out.shape.size() != 2 || idx.size() != na.out.rows())
    throw ShapeError("gather_prefix: index count must equal row count");
  for (auto i : idx)
    if (i > na.out.cols()) throw ShapeError("gather_prefix: index out of range");
  Node n;
  n.kind = OpKind::GatherPrefix;
  n.a = ia;
  n.requires_grad = na.requires_grad;
  n.idx = std::move(idx);
  const std::size_t R = na.out.rows();
  n.out = Tensor::zeros({R, 1});
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n.idx[r]; ++c) s += na.out.at(r, c);
    n.out.values[r] = s;
  }
  return push(std::move(n));
}

const Tensor& Tape::grad(NodeId id) const {
  if (!backward_done_) throw StateError("grad() before backward()");
  return node(id).grad;
}

void Tape::backward(NodeId root) {
  Node& rn = nodes_.at(root);
  if (!rn.out.is_scalar())
    throw StateError("backward: root must be scalar, got shape " +
                     rn.out.shape_str());
  for (auto& n : nodes_) n.grad = Tensor();  // lazily allocated below
  auto ensure = [&](Node& n) {
    if (n.grad.values.empty()) n.grad = Tensor::zeros(n.out.shape);
  };
  ensure(rn);
  rn.grad.values[0] = 1.0;

  for (NodeId id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.values.empty()) continue;
    Node* pa = n.a >= 0 ? &nodes_[n.a] : nullptr;
    Node* pb = n.b >= 0 ? &nodes_[n.b] : nullptr;
    const Tensor& g = n.grad;
    switch (n.kind) {
      case OpKind::Input:
      case OpKind::Constant:
        break;
      case OpKind::MatMul: {
        if (pa->requires_grad) {
          ensure(*pa);
          as_mat(pa->grad).noalias() += as_mat(g) * as_mat(pb->out).transpose();
        }
        if (pb->requires_grad) {
          ensure(*pb);
          as_mat(pb->grad).noalias() += as_mat(pa->out).transpose() * as_mat(g);
        }
        break;
      }
      case OpKind::AddBroadcast: {
        if (pa->requires_grad) {
          ensure(*pa);
          for (std::size_t i = 0; i < g.values.size(); ++i)
            pa->grad.values[i] += g.values[i];
        }
        if (pb->requires_grad) {
          ensure(*pb);
          if (pb->out.same_shape(n.out)) {
            for (std::size_t i = 0; i < g.values.size(); ++i)
              pb->grad.values[i] += g.values[i];
          } else {
            const std::size_t C = n.out.cols();
            for (std::size_t i = 0; i < g.values.size(); ++i)
              pb->grad.values[i % C] += g.values[i];
          }
        }
        break;
      }
      case OpKind::Elu: {
        ensure(*pa);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
          const double x = pa->out.values[i];
          pa->grad.values[i] +=
              g.values[i] * (x > 0.0 ? 1.0 : n.out.values[i] + 1.0);
        }
        break;
      }
      case OpKind::Exp: {
        ensure(*pa);
        for (std::size_t i = 0; i < g.values.size(); ++i)
          pa->grad.values[i] += g.values[i] * n.out.values[i];
        break;
      }
      case OpKind::Log: {
        ensure(*pa);
        for (std::size_t i = 0; i < g.values.size(); ++i)
          pa->grad.values[i] += g.values[i] / pa->out.values[i];
        break;
      }
      case OpKind::Square: {
        ensure(*pa);
        for (std::size_t i = 0; i < g.values.size(); ++i)
          pa->grad.values[i] += g.values[i] * 2.0 * pa->out.values[i];
        break;
      }
      case OpKind::Mul: {
        if (pa->requires_grad) {
          ensure(*pa);
          for (std::size_t i = 0; i < g.values.size(); ++i)
            pa->grad.values[i] += g.values[i] * pb->out.values[i];
        }
        if (pb->requires_grad) {
          ensure(*pb);
          for (std::size_t i = 0; i < g.values.size(); ++i)
            pb->grad.values[i] += g.values[i] * pa->out.values[i];
        }
        break;
      }
      case OpKind::Divide: {
        if (pa->requires_grad) {
          ensure(*pa);
          for (std::size_t i = 0; i < g.values.size(); ++i)
            pa->grad.values[i] += g.values[i] / pb->out.values[i];
        }
        if (pb->requires_grad) {
          ensure(*pb);
          for (std::size_t i = 0; i < g.values.size(); ++i)
            pb->grad.values[i] -= g.values[i] * n.out.values[i] /
                                  pb->out.values[i];
        }
        break;
      }
      case OpKind::Affine: {
        ensure(*pa);
        for (std::size_t i = 0; i < g.values.size(); ++i)
          pa->grad.values[i] += g.values[i] * n.scale;
        break;
      }
      case OpKind::MeanAll: {
        ensure(*pa);
        const double s = g.values[0] / static_cast<double>(pa->out.size());
        for (double& v : pa->grad.values) v += s;
        break;
      }
      case OpKind::SumAll: {
        ensure(*pa);
        for (double& v : pa->grad.values) v += g.values[0];
        break;
      }
      case OpKind::SoftmaxRows: {
        ensure(*pa);
        const std::size_t R = n.out.rows(), C = n.out.cols();
        for (std::size_t r = 0; r < R; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            dot += g.at(r, c) * n.out.at(r, c);
          for (std::size_t c = 0; c < C; ++c)
            pa->grad.at(r, c) += n.out.at(r, c) * (g.at(r, c) - dot);
        }
        break;
      }
      case OpKind::LogSumExpAll: {
        ensure(*pa);
        const double lse = n.out.values[0];
        for (std::size_t i = 0; i < pa->out.values.size(); ++i)
          pa->grad.values[i] +=
              g.values[0] * std::exp(pa->out.values[i] - lse);
        break;
      }
      case OpKind::LogSumExpRows: {
        ensure(*pa);
        const std::size_t R = pa->out.rows(), C = pa->out.cols();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c)
            pa->grad.at(r, c) +=
                g.values[r] * std::exp(pa->out.at(r, c) - n.out.values[r]);
        break;
      }
      case OpKind::NormalLogPdf: {
        ensure(*pa);
        for (std::size_t i = 0; i < g.values.size(); ++i)
          pa->grad.values[i] += g.values[i] * (-pa->out.values[i]);
        break;
      }
      case OpKind::ConcatCols: {
        const std::size_t R = n.out.rows(), Ca = pa->out.cols(),
                          Cb = pb->out.cols();
        if (pa->requires_grad) {
          ensure(*pa);
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < Ca; ++c)
              pa->grad.at(r, c) += g.at(r, c);
        }
        if (pb->requires_grad) {
          ensure(*pb);
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < Cb; ++c)
              pb->grad.at(r, c) += g.at(r, Ca + c);
        }
        break;
      }
      case OpKind::RepeatRow: {
        ensure(*pa);
        const std::size_t R = n.out.rows(), C = n.out.cols();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c)
            pa->grad.values[c] += g.at(r, c);
        break;
      }
      case OpKind::GatherCols: {
        ensure(*pa);
        for (std::size_t r = 0; r < n.idx.size(); ++r)
          pa->grad.at(r, n.idx[r]) += g.values[r];
        break;
      }
      case OpKind::GatherPrefix: {
        ensure(*pa);
        for (std::size_t r = 0; r < n.idx.size(); ++r)
          for (std::size_t c = 0; c < n.idx[r]; ++c)
            pa->grad.at(r, c) += g.values[r];
        break;
      }
    }
  }
  backward_done_ = true;
}

std::map<std::string, NodeId> Tape::bind(const ParamSet& ps) {
  std::map<std::string, NodeId> out;
  for (const auto& [name, t] : ps.params)
    out[name] = input(t, /*requires_grad=*/true, name);
  return out;
}

void Tape::accumulate_grads(ParamSet& ps,
                            const std::map<std::string, NodeId>& bound) const {
  if (!backward_done_) throw StateError("accumulate_grads before backward");
  for (const auto& [name, id] : bound) {
    const Tensor& g = node(id).grad;
    Tensor& slot = ps.grad(name);
    if (g.values.empty()) continue;  // node unreached by the root
    for (std::size_t i = 0; i < slot.values.size(); ++i)
      slot.values[i] += g.values[i];
  }
}

double grad_check(const ScalarGraphBuilder& build,
                  const std::vector<double>& point, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be > 0");
  Tape tape;
  NodeId x = tape.input(Tensor::row(point), /*requires_grad=*/true, "point");
  NodeId root = build(tape, x);
  tape.backward(root);
  Tensor analytic = tape.grad(x);
  if (analytic.values.empty()) analytic = Tensor::zeros({1, point.size()});

  auto eval = [&](const std::vector<double>& p) {
    Tape t;
    NodeId xi = t.input(Tensor::row(p), false, "point");
    NodeId r = build(t, xi);
    const double v = t.value(r).values[0];
    if (!std::isfinite(v))
      throw NumericError("grad_check: non-finite evaluation at perturbed point");
    return v;
  };

  double worst = 0.0;
  std::vector<double> p = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    p[i] = point[i] + step;
    const double fp = eval(p);
    p[i] = point[i] - step;
    const double fm = eval(p);
    p[i] = point[i];
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic.values[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace calopt
