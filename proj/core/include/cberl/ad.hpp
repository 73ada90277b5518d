#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cberl/errors.hpp"
#include "cberl/rng.hpp"

namespace cberl::ad {

/// One trainable tensor. Gradients accumulate into `grad`; Adam moments are
/// kept alongside so optimizer state survives as long as the parameter does.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;  // Adam first moment
  Mat v;  // Adam second moment
  bool frozen = false;

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
};

/// Owns a group of parameters updated by one optimizer.
class ParamSet {
 public:
  Param* add(std::string name, int rows, int cols);
  Param* add(std::string name, int rows, int cols, Rng& rng, double scale);

  void zero_grad();
  std::size_t scalar_count() const;
  std::uint64_t value_hash() const;
  Param* find(std::string_view name) const;

  std::vector<std::unique_ptr<Param>>& items() { return params_; }
  const std::vector<std::unique_ptr<Param>>& items() const { return params_; }

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a ParamSet. step() throws NonFiniteGradient when any gradient
/// entry is not finite; parameters are left untouched in that case.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(ParamSet& ps);
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
};

enum class Op : std::uint8_t {
  kInput,
  kParam,
  kAdd,
  kSub,
  kCMul,
  kAffineConst,  // a*x + c elementwise
  kMatMul,
  kAddColwise,  // matrix + column broadcast
  kSigmoid,
  kTanh,
  kRelu,
  kLeakyRelu,
  kExp,
  kLogFloor,  // log(max(x, floor))
  kClampMin,
  kPowConst,
  kSqrtFloor,  // sqrt(max(x, floor))
  kSum,
  kConcatRows,
  kConcatCols,
  kSliceRows,
  kSliceCols,
  kSoftmaxCols,
  kPickCols,      // out[0,i] = x[label[i], i]
  kGroupSoftmax,  // softmax within index groups of a 1xE row
  kEdgeGather,    // out[:,dst] += scale * w[e] * x[:,src]
  kPoolColsMean,  // mean over consecutive column groups
};

/// Directed weighted edge used by kEdgeGather.
struct EdgeRef {
  int src;       // column in the value matrix
  int dst;       // column in the output
  int weight;    // index into the weight row, -1 for weight 1
  double scale;  // fixed multiplier (e.g. 1/c_{i,r})
};

class Tape;

/// Lightweight handle to a tape node.
struct Expr {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr; }
  const Mat& value() const;
  double scalar() const;
  int rows() const;
  int cols() const;
};

struct Node {
  Op op;
  int a = -1;
  int b = -1;
  Mat value;
  double d0 = 0.0;  // op constant (scale, floor, exponent, ...)
  double d1 = 0.0;
  int i0 = 0;  // op ints (slice offsets, group size, ...)
  int i1 = 0;
  Param* param = nullptr;
  std::shared_ptr<const std::vector<int>> idx;                  // labels / input lists
  std::shared_ptr<const std::vector<std::vector<int>>> groups;  // softmax groups
  std::shared_ptr<const std::vector<EdgeRef>> edges;
};

/// Reverse-mode tape. Build a scalar expression, call backward() once;
/// gradients of kParam leaves accumulate into their Param::grad.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }

  Expr input(Mat m);
  Expr input_col(const Vec& v);
  Expr scalar_input(double x);
  Expr param(Param& p);

  const Mat& value(Expr e) const { return nodes_[e.id].value; }
  void backward(Expr root);
  std::size_t size() const { return nodes_.size(); }

  // Raw node construction; used by the op builders below.
  Expr emit(Node n);
  const Node& node(int id) const { return nodes_[id]; }

 private:
  std::vector<Node> nodes_;
};

// ---- op builders ----------------------------------------------------------

Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr cmul(Expr a, Expr b);
Expr affine_const(Expr x, double a, double c);
inline Expr neg(Expr x) { return affine_const(x, -1.0, 0.0); }
inline Expr scale(Expr x, double a) { return affine_const(x, a, 0.0); }
inline Expr one_minus(Expr x) { return affine_const(x, -1.0, 1.0); }
Expr matmul(Expr a, Expr b);
Expr add_colwise(Expr m, Expr col);
Expr sigmoid(Expr x);
Expr tanh_(Expr x);
Expr relu(Expr x);
Expr leaky_relu(Expr x, double alpha);
Expr exp_(Expr x);
Expr log_floor(Expr x, double floor = 1e-12);
Expr clamp_min(Expr x, double c);
Expr pow_const(Expr x, double p);
Expr sqrt_floor(Expr x, double floor = 0.0);
Expr sum(Expr x);
inline Expr mean(Expr x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.rows() * x.cols()));
}
inline Expr sum_squares(Expr x) { return sum(cmul(x, x)); }
Expr concat_rows(const std::vector<Expr>& xs);
Expr concat_cols(const std::vector<Expr>& xs);
Expr slice_rows(Expr x, int r0, int nrows);
Expr slice_cols(Expr x, int c0, int ncols);
Expr softmax_cols(Expr x);
Expr pick_cols(Expr x, std::vector<int> labels);
Expr group_softmax(Expr row, std::vector<std::vector<int>> groups);
Expr edge_gather(Expr values, Expr weights, std::vector<EdgeRef> edges,
                 int out_cols);
Expr pool_cols_mean(Expr x, int group_size);

inline Expr operator+(Expr a, Expr b) { return add(a, b); }
inline Expr operator-(Expr a, Expr b) { return sub(a, b); }

/// lambda * sqrt(sum of squared entries over all given params).
Expr l2_norm(Tape& tape, const std::vector<Param*>& params,
             double floor = 1e-24);

}  // namespace cberl::ad
