#pragma once

// Tape-based reverse-mode differentiation over dense double matrices, plus
// the LSTM and GRU cells used by the window model, the baselines and the
// discriminator.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ndnet/rng.hpp"

namespace ndnet {

using Mat = Eigen::MatrixXd;

enum class ParamGroup { Window, Packet };

std::string to_string(ParamGroup g);
ParamGroup param_group_from_string(const std::string& s);

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  ParamGroup group = ParamGroup::Window;
  double weight_decay = 0.0;
};

/// Named parameter tensors. Names are unique and shapes fixed at creation.
class ParamStore {
 public:
  int add(const std::string& name, Mat init, ParamGroup group, double weight_decay = 0.0);
  int index(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) > 0; }
  Param& operator[](int i) { return params_.at(static_cast<std::size_t>(i)); }
  const Param& operator[](int i) const { return params_.at(static_cast<std::size_t>(i)); }
  Param& operator[](const std::string& name) { return (*this)[index(name)]; }
  const Param& operator[](const std::string& name) const { return (*this)[index(name)]; }
  int size() const { return static_cast<int>(params_.size()); }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  void zero_grad();
  /// Zero-initialized gradient buffers shaped like the parameters.
  std::vector<Mat> zero_grads() const;
  /// Total number of scalars.
  std::size_t n_scalars() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> by_name_;
};

struct LearningRates {
  double window = 0.001;
  double packet = 0.01;
};

/// theta <- theta - lr(group) * (grad + weight_decay * theta)
void sgd_step(ParamStore& store, const LearningRates& lr);

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op {
  Leaf, Add, Sub, Mul, Scale, AddScalar, MatMul, AddBias, ConcatRows, SliceRows, Col,
  Select, Sigmoid, Tanh, Relu, Softmax, LogSoftmax, Log, Exp, Softplus, Sum, Mean, Square
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var constant(double value);
  /// Leaf bound to store[index]; repeated calls return the same node.
  Var param(const ParamStore& store, int index);
  Var param(const ParamStore& store, const std::string& name) { return param(store, store.index(name)); }

  /// Reverse accumulation from a 1x1 node. Parameter gradients are added to
  /// `grads` (shaped like the store the parameters came from).
  void backward(Var loss, std::vector<Mat>& grads);
  /// Same, accumulating into store.params()[i].grad.
  void backward(Var loss, ParamStore& store);

  /// Gradient of the last backward() with respect to a node (zero if none).
  Mat grad_of(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear();

  // Used by the op functions.
  struct Node {
    Mat value;
    Mat grad;
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    double s = 0.0;
    Eigen::Index i0 = 0;
    Eigen::Index i1 = 0;
    std::vector<int> inputs;
    int param = -1;
    bool needs_grad = false;
  };
  int push(Node n);
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  void run_backward(Var loss);

  std::vector<Node> nodes_;
  std::unordered_map<int, int> param_nodes_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double k);
Var add_scalar(Var a, double k);
Var matmul(Var a, Var b);
/// a (r x c) plus column vector b (r x 1) added to every column.
Var add_bias(Var a, Var b);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var col(Var a, Eigen::Index j);
Var select(Var a, Eigen::Index i, Eigen::Index j);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// Column-wise.
Var softmax(Var a);
Var log_softmax(Var a);
Var log(Var a);
Var exp(Var a);
/// log(1 + e^x), numerically stable.
Var softplus(Var a);
Var sum(Var a);
Var mean(Var a);
Var square(Var a);
/// Constant copy of the value; gradients stop here.
Var detach(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator+(Var a, double k) { return add_scalar(a, k); }
inline Var operator+(double k, Var a) { return add_scalar(a, k); }
inline Var operator-(Var a, double k) { return add_scalar(a, -k); }
inline Var operator-(double k, Var a) { return add_scalar(scale(a, -1.0), k); }
inline Var operator-(Var a) { return scale(a, -1.0); }
inline Var operator*(Var a, double k) { return scale(a, k); }
inline Var operator*(double k, Var a) { return scale(a, k); }
inline Var operator/(Var a, double k) { return scale(a, 1.0 / k); }

/// Scalar helpers so model code can be written once for double and Var.
inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double value_of(double x) { return x; }
inline double value_of(Var x) { return x.scalar(); }

struct LstmLayer {
  int w_ih = -1;  // 4H x I
  int w_hh = -1;  // 4H x H
  int b = -1;     // 4H x 1
  int hidden = 0;
};

/// Registers `<prefix>.w_ih`, `<prefix>.w_hh`, `<prefix>.b` with uniform
/// +-1/sqrt(hidden) initialization.
LstmLayer make_lstm_layer(ParamStore& store, const std::string& prefix, int input, int hidden,
                          ParamGroup group, double weight_decay, Rng& rng);

/// Gates ordered input, forget, candidate, output. x is I x B, h and c are
/// H x B.
std::pair<Var, Var> lstm_cell(Tape& tape, const ParamStore& store, const LstmLayer& layer, Var x,
                              Var h, Var c);

/// W_ih x + b, reusable across steps when the input does not change.
Var lstm_input_projection(Tape& tape, const ParamStore& store, const LstmLayer& layer, Var x);
std::pair<Var, Var> lstm_cell_projected(Tape& tape, const ParamStore& store, const LstmLayer& layer,
                                        Var x_proj, Var h, Var c);

struct GruLayer {
  int w_ih = -1;  // 3H x I, rows: reset, update, new
  int w_hh = -1;  // 3H x H
  int b_ih = -1;  // 3H x 1
  int b_hh = -1;  // 3H x 1
  int hidden = 0;
};

GruLayer make_gru_layer(ParamStore& store, const std::string& prefix, int input, int hidden,
                        ParamGroup group, double weight_decay, Rng& rng);

/// h' = u * n + (1 - u) * h, n = tanh(W_in x + b_in + r * (W_hn h + b_hn)).
Var gru_cell(Tape& tape, const ParamStore& store, const GruLayer& layer, Var x, Var h);

/// Uniform(-a, a) matrix.
Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double a, Rng& rng);

}  // namespace ndnet
