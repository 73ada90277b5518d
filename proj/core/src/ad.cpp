#include "cberl/ad.hpp"

#include <cmath>
#include <cstring>
#include <utility>

namespace cberl::ad {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw ShapeMismatch(what);
}

}  // namespace

// ---- ParamSet --------------------------------------------------------------

Param* ParamSet::add(std::string name, int rows, int cols) {
  auto p = std::make_unique<Param>();
  p->name = std::move(name);
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  p->m = Mat::Zero(rows, cols);
  p->v = Mat::Zero(rows, cols);
  params_.push_back(std::move(p));
  return params_.back().get();
}

Param* ParamSet::add(std::string name, int rows, int cols, Rng& rng,
                     double scale) {
  Param* p = add(std::move(name), rows, cols);
  p->value = rng.uniform_mat(rows, cols, -scale, scale);
  return p;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

std::uint64_t ParamSet::value_hash() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params_) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), sizeof(double) * p->value.size());
  }
  return h;
}

Param* ParamSet::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

// ---- Adam ------------------------------------------------------------------

void Adam::step(ParamSet& ps) {
  for (const auto& p : ps.items()) {
    if (!p->frozen && !p->grad.allFinite())
      throw NonFiniteGradient("non-finite gradient in parameter " + p->name);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (const auto& p : ps.items()) {
    if (p->frozen) continue;
    p->m = cfg_.beta1 * p->m + (1.0 - cfg_.beta1) * p->grad;
    p->v = cfg_.beta2 * p->v +
           (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad).eval();
    const Mat mhat = p->m / bc1;
    const Mat vhat = p->v / bc2;
    p->value.array() -=
        cfg_.lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps));
  }
}

// ---- Expr ------------------------------------------------------------------

const Mat& Expr::value() const { return tape->value(*this); }

double Expr::scalar() const {
  const Mat& m = value();
  check(m.rows() == 1 && m.cols() == 1, "scalar() on non 1x1 expression");
  return m(0, 0);
}

int Expr::rows() const { return static_cast<int>(value().rows()); }
int Expr::cols() const { return static_cast<int>(value().cols()); }

// ---- Tape ------------------------------------------------------------------

Expr Tape::emit(Node n) {
  nodes_.push_back(std::move(n));
  return Expr{this, static_cast<int>(nodes_.size()) - 1};
}

Expr Tape::input(Mat m) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(m);
  return emit(std::move(n));
}

Expr Tape::input_col(const Vec& v) { return input(Mat(v)); }

Expr Tape::scalar_input(double x) {
  Mat m(1, 1);
  m(0, 0) = x;
  return input(std::move(m));
}

Expr Tape::param(Param& p) {
  Node n;
  n.op = Op::kParam;
  n.value = p.value;
  n.param = &p;
  return emit(std::move(n));
}

void Tape::backward(Expr root) {
  check(root.tape == this, "backward on foreign expression");
  const Node& r = nodes_[root.id];
  check(r.value.rows() == 1 && r.value.cols() == 1,
        "backward root must be scalar");

  std::vector<Mat> grads(nodes_.size());
  std::vector<char> touched(nodes_.size(), 0);
  auto acc = [&](int id) -> Mat& {
    if (!touched[id]) {
      grads[id] = Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
      touched[id] = 1;
    }
    return grads[id];
  };
  acc(root.id)(0, 0) = 1.0;

  for (int id = root.id; id >= 0; --id) {
    if (!touched[id]) continue;
    Node& n = nodes_[id];
    const Mat& g = grads[id];
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kParam:
        n.param->grad += g;
        break;
      case Op::kAdd:
        acc(n.a) += g;
        acc(n.b) += g;
        break;
      case Op::kSub:
        acc(n.a) += g;
        acc(n.b) -= g;
        break;
      case Op::kCMul:
        acc(n.a) += g.cwiseProduct(nodes_[n.b].value);
        acc(n.b) += g.cwiseProduct(nodes_[n.a].value);
        break;
      case Op::kAffineConst:
        acc(n.a) += n.d0 * g;
        break;
      case Op::kMatMul:
        acc(n.a) += g * nodes_[n.b].value.transpose();
        acc(n.b) += nodes_[n.a].value.transpose() * g;
        break;
      case Op::kAddColwise:
        acc(n.a) += g;
        acc(n.b) += g.rowwise().sum();
        break;
      case Op::kSigmoid:
        acc(n.a) +=
            g.cwiseProduct(n.value.cwiseProduct((1.0 - n.value.array()).matrix()));
        break;
      case Op::kTanh:
        acc(n.a) += g.cwiseProduct(
            (1.0 - n.value.array().square()).matrix());
        break;
      case Op::kRelu:
        acc(n.a) += g.cwiseProduct(
            (nodes_[n.a].value.array() > 0.0).cast<double>().matrix());
        break;
      case Op::kLeakyRelu: {
        const auto& x = nodes_[n.a].value.array();
        acc(n.a) +=
            g.cwiseProduct(((x > 0.0).cast<double>() * (1.0 - n.d0) + n.d0)
                               .matrix());
        break;
      }
      case Op::kExp:
        acc(n.a) += g.cwiseProduct(n.value);
        break;
      case Op::kLogFloor: {
        const auto& x = nodes_[n.a].value.array();
        acc(n.a) +=
            g.cwiseProduct(((x > n.d0).cast<double>() / x.max(n.d0)).matrix());
        break;
      }
      case Op::kClampMin: {
        const auto& x = nodes_[n.a].value.array();
        acc(n.a) += g.cwiseProduct((x > n.d0).cast<double>().matrix());
        break;
      }
      case Op::kPowConst: {
        if (n.d0 != 0.0) {
          const auto& x = nodes_[n.a].value.array();
          acc(n.a) +=
              g.cwiseProduct((n.d0 * x.pow(n.d0 - 1.0)).matrix());
        }
        break;
      }
      case Op::kSqrtFloor: {
        const auto& x = nodes_[n.a].value.array();
        acc(n.a) += g.cwiseProduct(
            ((x > n.d0).cast<double>() / (2.0 * n.value.array())).matrix());
        break;
      }
      case Op::kSum:
        acc(n.a).array() += g(0, 0);
        break;
      case Op::kConcatRows: {
        int r0 = 0;
        for (int in : *n.idx) {
          const int nr = static_cast<int>(nodes_[in].value.rows());
          acc(in) += g.middleRows(r0, nr);
          r0 += nr;
        }
        break;
      }
      case Op::kConcatCols: {
        int c0 = 0;
        for (int in : *n.idx) {
          const int nc = static_cast<int>(nodes_[in].value.cols());
          acc(in) += g.middleCols(c0, nc);
          c0 += nc;
        }
        break;
      }
      case Op::kSliceRows:
        acc(n.a).middleRows(n.i0, n.i1) += g;
        break;
      case Op::kSliceCols:
        acc(n.a).middleCols(n.i0, n.i1) += g;
        break;
      case Op::kSoftmaxCols: {
        Mat& da = acc(n.a);
        for (int c = 0; c < n.value.cols(); ++c) {
          const auto y = n.value.col(c);
          const auto gc = g.col(c);
          const double dot = gc.dot(y);
          da.col(c) += y.cwiseProduct(gc.array().matrix() -
                                      Mat::Constant(y.rows(), 1, dot));
        }
        break;
      }
      case Op::kPickCols: {
        Mat& da = acc(n.a);
        const auto& labels = *n.idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
          da(labels[i], static_cast<int>(i)) += g(0, static_cast<int>(i));
        break;
      }
      case Op::kGroupSoftmax: {
        Mat& da = acc(n.a);
        for (const auto& grp : *n.groups) {
          double dot = 0.0;
          for (int j : grp) dot += g(0, j) * n.value(0, j);
          for (int j : grp) da(0, j) += n.value(0, j) * (g(0, j) - dot);
        }
        break;
      }
      case Op::kEdgeGather: {
        Mat& dv = acc(n.a);
        Mat& dw = acc(n.b);
        const Mat& V = nodes_[n.a].value;
        const Mat& W = nodes_[n.b].value;
        for (const EdgeRef& e : *n.edges) {
          const double w = e.weight >= 0 ? W(0, e.weight) : 1.0;
          dv.col(e.src) += (e.scale * w) * g.col(e.dst);
          if (e.weight >= 0)
            dw(0, e.weight) += e.scale * g.col(e.dst).dot(V.col(e.src));
        }
        break;
      }
      case Op::kPoolColsMean: {
        Mat& da = acc(n.a);
        const int k = n.i0;
        for (int j = 0; j < n.value.cols(); ++j)
          for (int u = 0; u < k; ++u) da.col(j * k + u) += g.col(j) / k;
        break;
      }
    }
  }
}

// ---- builders --------------------------------------------------------------

namespace {

Expr unary(Expr x, Op op, double d0 = 0.0) {
  Node n;
  n.op = op;
  n.a = x.id;
  n.d0 = d0;
  const Mat& v = x.value();
  switch (op) {
    case Op::kSigmoid:
      n.value = (1.0 / (1.0 + (-v.array()).exp())).matrix();
      break;
    case Op::kTanh:
      n.value = v.array().tanh().matrix();
      break;
    case Op::kRelu:
      n.value = v.cwiseMax(0.0);
      break;
    case Op::kLeakyRelu:
      n.value = (v.array() > 0.0).select(v, d0 * v);
      break;
    case Op::kExp:
      n.value = v.array().exp().matrix();
      break;
    case Op::kLogFloor:
      n.value = v.array().max(d0).log().matrix();
      break;
    case Op::kClampMin:
      n.value = v.cwiseMax(d0);
      break;
    case Op::kPowConst:
      n.value = v.array().pow(d0).matrix();
      break;
    case Op::kSqrtFloor:
      n.value = v.array().max(d0).sqrt().matrix();
      break;
    default:
      throw Error("unary: bad op");
  }
  return x.tape->emit(std::move(n));
}

}  // namespace

Expr add(Expr a, Expr b) {
  check(a.tape == b.tape, "add: different tapes");
  check(a.value().rows() == b.value().rows() &&
            a.value().cols() == b.value().cols(),
        "add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.value = a.value() + b.value();
  return a.tape->emit(std::move(n));
}

Expr sub(Expr a, Expr b) {
  check(a.tape == b.tape, "sub: different tapes");
  check(a.value().rows() == b.value().rows() &&
            a.value().cols() == b.value().cols(),
        "sub: shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.value = a.value() - b.value();
  return a.tape->emit(std::move(n));
}

Expr cmul(Expr a, Expr b) {
  check(a.tape == b.tape, "cmul: different tapes");
  check(a.value().rows() == b.value().rows() &&
            a.value().cols() == b.value().cols(),
        "cmul: shape mismatch");
  Node n;
  n.op = Op::kCMul;
  n.a = a.id;
  n.b = b.id;
  n.value = a.value().cwiseProduct(b.value());
  return a.tape->emit(std::move(n));
}

Expr affine_const(Expr x, double a, double c) {
  Node n;
  n.op = Op::kAffineConst;
  n.a = x.id;
  n.d0 = a;
  n.value = (a * x.value().array() + c).matrix();
  return x.tape->emit(std::move(n));
}

Expr matmul(Expr a, Expr b) {
  check(a.tape == b.tape, "matmul: different tapes");
  check(a.value().cols() == b.value().rows(), "matmul: inner dim mismatch");
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = a.value() * b.value();
  return a.tape->emit(std::move(n));
}

Expr add_colwise(Expr m, Expr col) {
  check(m.tape == col.tape, "add_colwise: different tapes");
  check(col.value().cols() == 1 && m.value().rows() == col.value().rows(),
        "add_colwise: shape mismatch");
  Node n;
  n.op = Op::kAddColwise;
  n.a = m.id;
  n.b = col.id;
  n.value = m.value().colwise() + Vec(col.value().col(0));
  return m.tape->emit(std::move(n));
}

Expr sigmoid(Expr x) { return unary(x, Op::kSigmoid); }
Expr tanh_(Expr x) { return unary(x, Op::kTanh); }
Expr relu(Expr x) { return unary(x, Op::kRelu); }
Expr leaky_relu(Expr x, double alpha) {
  return unary(x, Op::kLeakyRelu, alpha);
}
Expr exp_(Expr x) { return unary(x, Op::kExp); }
Expr log_floor(Expr x, double floor) { return unary(x, Op::kLogFloor, floor); }
Expr clamp_min(Expr x, double c) { return unary(x, Op::kClampMin, c); }
Expr pow_const(Expr x, double p) { return unary(x, Op::kPowConst, p); }
Expr sqrt_floor(Expr x, double floor) {
  return unary(x, Op::kSqrtFloor, floor);
}

Expr sum(Expr x) {
  Node n;
  n.op = Op::kSum;
  n.a = x.id;
  Mat m(1, 1);
  m(0, 0) = x.value().sum();
  n.value = std::move(m);
  return x.tape->emit(std::move(n));
}

Expr concat_rows(const std::vector<Expr>& xs) {
  check(!xs.empty(), "concat_rows: empty");
  int rows = 0;
  const int cols = static_cast<int>(xs[0].value().cols());
  auto ids = std::make_shared<std::vector<int>>();
  for (const Expr& x : xs) {
    check(x.tape == xs[0].tape, "concat_rows: different tapes");
    check(x.value().cols() == cols, "concat_rows: column mismatch");
    rows += static_cast<int>(x.value().rows());
    ids->push_back(x.id);
  }
  Node n;
  n.op = Op::kConcatRows;
  n.idx = ids;
  n.value = Mat(rows, cols);
  int r0 = 0;
  for (const Expr& x : xs) {
    n.value.middleRows(r0, x.value().rows()) = x.value();
    r0 += static_cast<int>(x.value().rows());
  }
  return xs[0].tape->emit(std::move(n));
}

Expr concat_cols(const std::vector<Expr>& xs) {
  check(!xs.empty(), "concat_cols: empty");
  int cols = 0;
  const int rows = static_cast<int>(xs[0].value().rows());
  auto ids = std::make_shared<std::vector<int>>();
  for (const Expr& x : xs) {
    check(x.tape == xs[0].tape, "concat_cols: different tapes");
    check(x.value().rows() == rows, "concat_cols: row mismatch");
    cols += static_cast<int>(x.value().cols());
    ids->push_back(x.id);
  }
  Node n;
  n.op = Op::kConcatCols;
  n.idx = ids;
  n.value = Mat(rows, cols);
  int c0 = 0;
  for (const Expr& x : xs) {
    n.value.middleCols(c0, x.value().cols()) = x.value();
    c0 += static_cast<int>(x.value().cols());
  }
  return xs[0].tape->emit(std::move(n));
}

Expr slice_rows(Expr x, int r0, int nrows) {
  check(r0 >= 0 && r0 + nrows <= x.value().rows(), "slice_rows: out of range");
  Node n;
  n.op = Op::kSliceRows;
  n.a = x.id;
  n.i0 = r0;
  n.i1 = nrows;
  n.value = x.value().middleRows(r0, nrows);
  return x.tape->emit(std::move(n));
}

Expr slice_cols(Expr x, int c0, int ncols) {
  check(c0 >= 0 && c0 + ncols <= x.value().cols(), "slice_cols: out of range");
  Node n;
  n.op = Op::kSliceCols;
  n.a = x.id;
  n.i0 = c0;
  n.i1 = ncols;
  n.value = x.value().middleCols(c0, ncols);
  return x.tape->emit(std::move(n));
}

Expr softmax_cols(Expr x) {
  Node n;
  n.op = Op::kSoftmaxCols;
  n.a = x.id;
  const Mat& v = x.value();
  n.value = Mat(v.rows(), v.cols());
  for (int c = 0; c < v.cols(); ++c) {
    Vec col = v.col(c);
    const double mx = col.maxCoeff();
    Vec e = (col.array() - mx).exp();
    n.value.col(c) = e / e.sum();
  }
  return x.tape->emit(std::move(n));
}

Expr pick_cols(Expr x, std::vector<int> labels) {
  check(static_cast<int>(labels.size()) == x.value().cols(),
        "pick_cols: label count mismatch");
  Node n;
  n.op = Op::kPickCols;
  n.a = x.id;
  n.value = Mat(1, x.value().cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check(labels[i] >= 0 && labels[i] < x.value().rows(),
          "pick_cols: label out of range");
    n.value(0, static_cast<int>(i)) =
        x.value()(labels[i], static_cast<int>(i));
  }
  n.idx = std::make_shared<const std::vector<int>>(std::move(labels));
  return x.tape->emit(std::move(n));
}

Expr group_softmax(Expr row, std::vector<std::vector<int>> groups) {
  check(row.value().rows() == 1, "group_softmax: expected a row");
  Node n;
  n.op = Op::kGroupSoftmax;
  n.a = row.id;
  const Mat& v = row.value();
  n.value = Mat::Zero(1, v.cols());
  for (const auto& grp : groups) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j : grp) {
      check(j >= 0 && j < v.cols(), "group_softmax: index out of range");
      mx = std::max(mx, v(0, j));
    }
    double z = 0.0;
    for (int j : grp) z += std::exp(v(0, j) - mx);
    for (int j : grp) n.value(0, j) = std::exp(v(0, j) - mx) / z;
  }
  n.groups =
      std::make_shared<const std::vector<std::vector<int>>>(std::move(groups));
  return row.tape->emit(std::move(n));
}

Expr edge_gather(Expr values, Expr weights, std::vector<EdgeRef> edges,
                 int out_cols) {
  check(values.tape == weights.tape, "edge_gather: different tapes");
  check(weights.value().rows() == 1, "edge_gather: weights must be a row");
  Node n;
  n.op = Op::kEdgeGather;
  n.a = values.id;
  n.b = weights.id;
  const Mat& V = values.value();
  const Mat& W = weights.value();
  n.value = Mat::Zero(V.rows(), out_cols);
  for (const EdgeRef& e : edges) {
    check(e.src >= 0 && e.src < V.cols(), "edge_gather: src out of range");
    check(e.dst >= 0 && e.dst < out_cols, "edge_gather: dst out of range");
    check(e.weight < static_cast<int>(W.cols()),
          "edge_gather: weight out of range");
    const double w = e.weight >= 0 ? W(0, e.weight) : 1.0;
    n.value.col(e.dst) += (e.scale * w) * V.col(e.src);
  }
  n.edges = std::make_shared<const std::vector<EdgeRef>>(std::move(edges));
  return values.tape->emit(std::move(n));
}

Expr pool_cols_mean(Expr x, int group_size) {
  const Mat& v = x.value();
  check(group_size > 0 && v.cols() % group_size == 0,
        "pool_cols_mean: columns not divisible by group size");
  Node n;
  n.op = Op::kPoolColsMean;
  n.a = x.id;
  n.i0 = group_size;
  const int out = static_cast<int>(v.cols()) / group_size;
  n.value = Mat::Zero(v.rows(), out);
  for (int j = 0; j < out; ++j) {
    for (int u = 0; u < group_size; ++u)
      n.value.col(j) += v.col(j * group_size + u);
    n.value.col(j) /= group_size;
  }
  return x.tape->emit(std::move(n));
}

Expr l2_norm(Tape& tape, const std::vector<Param*>& params, double floor) {
  std::vector<Expr> sq;
  sq.reserve(params.size());
  for (Param* p : params) sq.push_back(sum_squares(tape.param(*p)));
  Expr total = sq[0];
  for (std::size_t i = 1; i < sq.size(); ++i) total = add(total, sq[i]);
  return sqrt_floor(total, floor);
}

}  // namespace cberl::ad
