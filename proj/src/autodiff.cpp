#include "ndnet/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace ndnet {

std::string to_string(ParamGroup g) { return g == ParamGroup::Window ? "window" : "packet"; }

ParamGroup param_group_from_string(const std::string& s) {
  if (s == "window") return ParamGroup::Window;
  if (s == "packet") return ParamGroup::Packet;
  throw std::invalid_argument("unknown parameter group '" + s + "'");
}

int ParamStore::add(const std::string& name, Mat init, ParamGroup group, double weight_decay) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  Param p;
  p.name = name;
  p.grad = Mat::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.group = group;
  p.weight_decay = weight_decay;
  params_.push_back(std::move(p));
  const int id = static_cast<int>(params_.size()) - 1;
  by_name_[name] = id;
  return id;
}

int ParamStore::index(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::vector<Mat> ParamStore::zero_grads() const {
  std::vector<Mat> g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
  return g;
}

std::size_t ParamStore::n_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void sgd_step(ParamStore& store, const LearningRates& lr) {
  for (auto& p : store.params()) {
    const double eta = p.group == ParamGroup::Window ? lr.window : lr.packet;
    p.value -= eta * (p.grad + p.weight_decay * p.value);
  }
}

const Mat& Var::value() const {
  if (!tape_) throw std::logic_error("use of an empty Var");
  return tape_->node(id_).value;
}

double Var::scalar() const {
  const Mat& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::invalid_argument("scalar() on a " + std::to_string(v.rows()) + "x" +
                                std::to_string(v.cols()) + " value");
  }
  return v(0, 0);
}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  return Var(this, push(std::move(n)));
}

Var Tape::constant(double value) { return constant(Mat::Constant(1, 1, value)); }

Var Tape::param(const ParamStore& store, int index) {
  auto it = param_nodes_.find(index);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = store[index].value;
  n.param = index;
  n.needs_grad = true;
  const int id = push(std::move(n));
  param_nodes_[index] = id;
  return Var(this, id);
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

Mat Tape::grad_of(Var v) const {
  const Node& n = node(v.id());
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

std::string shape(const Mat& m) { return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")"; }

void check_same(const char* op, const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
  }
}

Tape* same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument("operands live on different tapes");
  }
  return a.tape();
}

Var make(Tape* t, Op op, Mat value, int a, int b = -1) {
  Tape::Node n;
  n.value = std::move(value);
  n.op = op;
  n.a = a;
  n.b = b;
  n.needs_grad = (a >= 0 && t->node(a).needs_grad) || (b >= 0 && t->node(b).needs_grad);
  return Var(t, t->push(std::move(n)));
}

Var make_idx(Tape* t, Op op, Mat value, int a, Eigen::Index i0, Eigen::Index i1) {
  Tape::Node n;
  n.value = std::move(value);
  n.op = op;
  n.a = a;
  n.i0 = i0;
  n.i1 = i1;
  n.needs_grad = t->node(a).needs_grad;
  return Var(t, t->push(std::move(n)));
}

Var make_s(Tape* t, Op op, Mat value, int a, double s) {
  Tape::Node n;
  n.value = std::move(value);
  n.op = op;
  n.a = a;
  n.s = s;
  n.needs_grad = t->node(a).needs_grad;
  return Var(t, t->push(std::move(n)));
}

Mat sigmoid_m(const Mat& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

Mat softmax_cols(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).maxCoeff();
    y.col(j) = (x.col(j).array() - m).exp().matrix();
    y.col(j) /= y.col(j).sum();
  }
  return y;
}

}  // namespace

Var add(Var a, Var b) {
  Tape* t = same_tape(a, b);
  check_same("add", a.value(), b.value());
  return make(t, Op::Add, a.value() + b.value(), a.id(), b.id());
}

Var sub(Var a, Var b) {
  Tape* t = same_tape(a, b);
  check_same("sub", a.value(), b.value());
  return make(t, Op::Sub, a.value() - b.value(), a.id(), b.id());
}

Var mul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  check_same("mul", a.value(), b.value());
  return make(t, Op::Mul, a.value().cwiseProduct(b.value()), a.id(), b.id());
}

Var scale(Var a, double k) { return make_s(a.tape(), Op::Scale, a.value() * k, a.id(), k); }

Var add_scalar(Var a, double k) {
  return make_s(a.tape(), Op::AddScalar, (a.value().array() + k).matrix(), a.id(), k);
}

Var matmul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  if (a.value().cols() != b.value().rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape(a.value()) + " vs " + shape(b.value()));
  }
  return make(t, Op::MatMul, a.value() * b.value(), a.id(), b.id());
}

Var add_bias(Var a, Var b) {
  Tape* t = same_tape(a, b);
  if (b.value().cols() != 1 || b.value().rows() != a.value().rows()) {
    throw std::invalid_argument("add_bias: shape mismatch " + shape(a.value()) + " vs " + shape(b.value()));
  }
  return make(t, Op::AddBias, a.value().colwise() + b.value().col(0), a.id(), b.id());
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  Tape* t = parts[0].tape();
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].value().cols();
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.value().cols() != cols) {
      throw std::invalid_argument("concat_rows: shape mismatch " + shape(parts[0].value()) + " vs " +
                                  shape(p.value()));
    }
    rows += p.value().rows();
  }
  Tape::Node n;
  n.value.resize(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    n.value.middleRows(r, p.value().rows()) = p.value();
    r += p.value().rows();
    n.inputs.push_back(p.id());
    n.needs_grad = n.needs_grad || t->node(p.id()).needs_grad;
  }
  n.op = Op::ConcatRows;
  return Var(t, t->push(std::move(n)));
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.value().rows()) {
    throw std::invalid_argument("slice_rows: rows [" + std::to_string(start) + ", " +
                                std::to_string(start + n) + ") out of " + shape(a.value()));
  }
  return make_idx(a.tape(), Op::SliceRows, a.value().middleRows(start, n), a.id(), start, 0);
}

Var col(Var a, Eigen::Index j) {
  if (j < 0 || j >= a.value().cols()) throw std::invalid_argument("col: index out of " + shape(a.value()));
  return make_idx(a.tape(), Op::Col, a.value().col(j), a.id(), 0, j);
}

Var select(Var a, Eigen::Index i, Eigen::Index j) {
  if (i < 0 || j < 0 || i >= a.value().rows() || j >= a.value().cols()) {
    throw std::invalid_argument("select: index out of " + shape(a.value()));
  }
  return make_idx(a.tape(), Op::Select, Mat::Constant(1, 1, a.value()(i, j)), a.id(), i, j);
}

Var sigmoid(Var a) { return make(a.tape(), Op::Sigmoid, sigmoid_m(a.value()), a.id()); }
Var tanh(Var a) { return make(a.tape(), Op::Tanh, a.value().array().tanh().matrix(), a.id()); }
Var relu(Var a) { return make(a.tape(), Op::Relu, a.value().cwiseMax(0.0), a.id()); }
Var softmax(Var a) { return make(a.tape(), Op::Softmax, softmax_cols(a.value()), a.id()); }

Var log_softmax(Var a) {
  Mat y(a.value().rows(), a.value().cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const double m = a.value().col(j).maxCoeff();
    const double lse = m + std::log((a.value().col(j).array() - m).exp().sum());
    y.col(j) = (a.value().col(j).array() - lse).matrix();
  }
  return make(a.tape(), Op::LogSoftmax, std::move(y), a.id());
}

Var log(Var a) { return make(a.tape(), Op::Log, a.value().array().log().matrix(), a.id()); }
Var exp(Var a) { return make(a.tape(), Op::Exp, a.value().array().exp().matrix(), a.id()); }

Var softplus(Var a) {
  return make(a.tape(), Op::Softplus, a.value().unaryExpr([](double x) { return softplus(x); }), a.id());
}

Var sum(Var a) { return make(a.tape(), Op::Sum, Mat::Constant(1, 1, a.value().sum()), a.id()); }

Var mean(Var a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean of an empty value");
  return make(a.tape(), Op::Mean, Mat::Constant(1, 1, a.value().mean()), a.id());
}

Var square(Var a) { return make(a.tape(), Op::Square, a.value().array().square().matrix(), a.id()); }

Var detach(Var a) { return a.tape()->constant(a.value()); }

void Tape::run_backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss lives on another tape");
  const Mat& lv = node(loss.id()).value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("backward on a non-scalar " + shape(lv));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(loss.id())].grad = Mat::Ones(1, 1);

  auto acc = [this](int id, const auto& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  };

  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0 || n.op == Op::Leaf) continue;
    const Mat g = n.grad;
    switch (n.op) {
      case Op::Leaf: break;
      case Op::Add:
        acc(n.a, g);
        acc(n.b, g);
        break;
      case Op::Sub:
        acc(n.a, g);
        acc(n.b, Mat(-g));
        break;
      case Op::Mul:
        acc(n.a, Mat(g.cwiseProduct(node(n.b).value)));
        acc(n.b, Mat(g.cwiseProduct(node(n.a).value)));
        break;
      case Op::Scale: acc(n.a, Mat(g * n.s)); break;
      case Op::AddScalar: acc(n.a, g); break;
      case Op::MatMul:
        if (node(n.a).needs_grad) acc(n.a, Mat(g * node(n.b).value.transpose()));
        if (node(n.b).needs_grad) acc(n.b, Mat(node(n.a).value.transpose() * g));
        break;
      case Op::AddBias:
        acc(n.a, g);
        acc(n.b, Mat(g.rowwise().sum()));
        break;
      case Op::ConcatRows: {
        Eigen::Index r = 0;
        for (int in : n.inputs) {
          const Eigen::Index rows = node(in).value.rows();
          acc(in, Mat(g.middleRows(r, rows)));
          r += rows;
        }
        break;
      }
      case Op::SliceRows: {
        if (!node(n.a).needs_grad) break;
        Mat full = Mat::Zero(node(n.a).value.rows(), node(n.a).value.cols());
        full.middleRows(n.i0, g.rows()) = g;
        acc(n.a, full);
        break;
      }
      case Op::Col: {
        if (!node(n.a).needs_grad) break;
        Mat full = Mat::Zero(node(n.a).value.rows(), node(n.a).value.cols());
        full.col(n.i1) = g;
        acc(n.a, full);
        break;
      }
      case Op::Select: {
        if (!node(n.a).needs_grad) break;
        Mat full = Mat::Zero(node(n.a).value.rows(), node(n.a).value.cols());
        full(n.i0, n.i1) = g(0, 0);
        acc(n.a, full);
        break;
      }
      case Op::Sigmoid:
        acc(n.a, Mat(g.array() * n.value.array() * (1.0 - n.value.array())));
        break;
      case Op::Tanh: acc(n.a, Mat(g.array() * (1.0 - n.value.array().square()))); break;
      case Op::Relu:
        acc(n.a, Mat(g.array() * (node(n.a).value.array() > 0.0).cast<double>()));
        break;
      case Op::Softmax: {
        Mat gi(g.rows(), g.cols());
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
          const double dot = g.col(j).dot(n.value.col(j));
          gi.col(j) = (n.value.col(j).array() * (g.col(j).array() - dot)).matrix();
        }
        acc(n.a, gi);
        break;
      }
      case Op::LogSoftmax: {
        Mat gi(g.rows(), g.cols());
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
          gi.col(j) = g.col(j) - n.value.col(j).array().exp().matrix() * g.col(j).sum();
        }
        acc(n.a, gi);
        break;
      }
      case Op::Log: acc(n.a, Mat(g.array() / node(n.a).value.array())); break;
      case Op::Exp: acc(n.a, Mat(g.array() * n.value.array())); break;
      case Op::Softplus: acc(n.a, Mat(g.array() * sigmoid_m(node(n.a).value).array())); break;
      case Op::Sum:
        acc(n.a, Mat::Constant(node(n.a).value.rows(), node(n.a).value.cols(), g(0, 0)));
        break;
      case Op::Mean: {
        const Mat& av = node(n.a).value;
        acc(n.a, Mat::Constant(av.rows(), av.cols(), g(0, 0) / static_cast<double>(av.size())));
        break;
      }
      case Op::Square: acc(n.a, Mat(2.0 * g.array() * node(n.a).value.array())); break;
    }
  }
}

void Tape::backward(Var loss, std::vector<Mat>& grads) {
  run_backward(loss);
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = node(id);
    if (n.grad.size() == 0) continue;
    grads.at(static_cast<std::size_t>(param)) += n.grad;
  }
}

void Tape::backward(Var loss, ParamStore& store) {
  run_backward(loss);
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = node(id);
    if (n.grad.size() == 0) continue;
    store[param].grad += n.grad;
  }
}

Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double a, Rng& rng) {
  Mat m(rows, cols);
  // Column-major fill order keeps initialization reproducible.
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, -a, a);
  }
  return m;
}

LstmLayer make_lstm_layer(ParamStore& store, const std::string& prefix, int input, int hidden,
                          ParamGroup group, double weight_decay, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmLayer l;
  l.hidden = hidden;
  l.w_ih = store.add(prefix + ".w_ih", uniform_matrix(4 * hidden, input, a, rng), group, weight_decay);
  l.w_hh = store.add(prefix + ".w_hh", uniform_matrix(4 * hidden, hidden, a, rng), group, weight_decay);
  l.b = store.add(prefix + ".b", uniform_matrix(4 * hidden, 1, a, rng), group, weight_decay);
  return l;
}

Var lstm_input_projection(Tape& tape, const ParamStore& store, const LstmLayer& layer, Var x) {
  return add_bias(matmul(tape.param(store, layer.w_ih), x), tape.param(store, layer.b));
}

std::pair<Var, Var> lstm_cell_projected(Tape& tape, const ParamStore& store, const LstmLayer& layer,
                                        Var x_proj, Var h, Var c) {
  const Eigen::Index H = layer.hidden;
  Var gates = x_proj + matmul(tape.param(store, layer.w_hh), h);
  Var i = sigmoid(slice_rows(gates, 0, H));
  Var f = sigmoid(slice_rows(gates, H, H));
  Var g = tanh(slice_rows(gates, 2 * H, H));
  Var o = sigmoid(slice_rows(gates, 3 * H, H));
  Var c2 = f * c + i * g;
  Var h2 = o * tanh(c2);
  return {h2, c2};
}

std::pair<Var, Var> lstm_cell(Tape& tape, const ParamStore& store, const LstmLayer& layer, Var x,
                              Var h, Var c) {
  return lstm_cell_projected(tape, store, layer, lstm_input_projection(tape, store, layer, x), h, c);
}

GruLayer make_gru_layer(ParamStore& store, const std::string& prefix, int input, int hidden,
                        ParamGroup group, double weight_decay, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruLayer l;
  l.hidden = hidden;
  l.w_ih = store.add(prefix + ".w_ih", uniform_matrix(3 * hidden, input, a, rng), group, weight_decay);
  l.w_hh = store.add(prefix + ".w_hh", uniform_matrix(3 * hidden, hidden, a, rng), group, weight_decay);
  l.b_ih = store.add(prefix + ".b_ih", uniform_matrix(3 * hidden, 1, a, rng), group, weight_decay);
  l.b_hh = store.add(prefix + ".b_hh", uniform_matrix(3 * hidden, 1, a, rng), group, weight_decay);
  return l;
}

Var gru_cell(Tape& tape, const ParamStore& store, const GruLayer& layer, Var x, Var h) {
  const Eigen::Index H = layer.hidden;
  Var gx = add_bias(matmul(tape.param(store, layer.w_ih), x), tape.param(store, layer.b_ih));
  Var gh = add_bias(matmul(tape.param(store, layer.w_hh), h), tape.param(store, layer.b_hh));
  Var r = sigmoid(slice_rows(gx, 0, H) + slice_rows(gh, 0, H));
  Var u = sigmoid(slice_rows(gx, H, H) + slice_rows(gh, H, H));
  Var n = tanh(slice_rows(gx, 2 * H, H) + r * slice_rows(gh, 2 * H, H));
  return u * n + (1.0 - u) * h;
}

}  // namespace ndnet
