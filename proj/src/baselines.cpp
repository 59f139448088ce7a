#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ndnet/training.hpp"

namespace ndnet {

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::LstmWin: return "lstm-win";
    case BaselineKind::LstmPkt: return "lstm-pkt";
    case BaselineKind::LstmPktFifo: return "lstm-pkt-fifo";
  }
  return "unknown";
}

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "lstm-win" || s == "LstmWin") return BaselineKind::LstmWin;
  if (s == "lstm-pkt" || s == "LstmPkt") return BaselineKind::LstmPkt;
  if (s == "lstm-pkt-fifo" || s == "LstmPktFifo") return BaselineKind::LstmPktFifo;
  throw std::invalid_argument("unknown baseline kind '" + s + "'");
}

BaselineModel::BaselineModel(const BaselineConfig& cfg, std::uint64_t seed) : config(cfg) {
  if (cfg.hidden < 1 || cfg.layers < 1 || cfg.n_bins < 2) {
    throw std::invalid_argument("hidden, layers must be >= 1 and n_bins >= 2");
  }
  Rng rng = make_rng(seed, "baseline.init");
  const auto W = ParamGroup::Window;
  for (int l = 0; l < cfg.layers; ++l) {
    make_lstm_layer(store, "baseline.lstm" + std::to_string(l), l == 0 ? kBaselineInputs : cfg.hidden,
                    cfg.hidden, W, cfg.weight_decay, rng);
  }
  const double a = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  store.add("baseline.out_y.w", uniform_matrix(cfg.n_bins, cfg.hidden, a, rng), W, cfg.weight_decay);
  store.add("baseline.out_y.b", uniform_matrix(cfg.n_bins, 1, a, rng), W, cfg.weight_decay);
  store.add("baseline.out_drop.w", uniform_matrix(1, cfg.hidden, a, rng), W, cfg.weight_decay);
  store.add("baseline.out_drop.b", uniform_matrix(1, 1, a, rng), W, cfg.weight_decay);
  bind_indices();
}

void BaselineModel::bind_indices() {
  lstm.clear();
  for (int l = 0; l < config.layers; ++l) {
    const std::string pre = "baseline.lstm" + std::to_string(l);
    LstmLayer layer;
    layer.w_ih = store.index(pre + ".w_ih");
    layer.w_hh = store.index(pre + ".w_hh");
    layer.b = store.index(pre + ".b");
    layer.hidden = config.hidden;
    lstm.push_back(layer);
  }
  out_y_w = store.index("baseline.out_y.w");
  out_y_b = store.index("baseline.out_y.b");
  out_drop_w = store.index("baseline.out_drop.w");
  out_drop_b = store.index("baseline.out_drop.b");
}

Eigen::VectorXd baseline_window_input(const XNorm& x_norm, const StaticFeatures& x,
                                      std::span<const PacketRecord> prev, double window_len) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kBaselineInputs);
  v << x_norm[0], x_norm[1], x_norm[2], 0.0, 0.0, 0.0;
  if (prev.empty()) return v;
  double bits = 0.0;
  double delay = 0.0;
  std::size_t delivered = 0;
  for (const auto& p : prev) {
    bits += 8.0 * p.size;
    if (p.delay.delivered()) {
      delay += p.delay.seconds();
      ++delivered;
    }
  }
  v(3) = std::min(bits / window_len / x.p95_throughput, 4.0);
  v(4) = delivered ? std::min(delay / static_cast<double>(delivered) / x.y_max, 1.0) : 0.0;
  v(5) = 1.0 - static_cast<double>(delivered) / static_cast<double>(prev.size());
  return v;
}

BaselineRunner::BaselineRunner(const BaselineModel& model) : model_(&model) {
  for (std::size_t l = 0; l < model.lstm.size(); ++l) {
    h_.push_back(Eigen::MatrixXd::Zero(model.config.hidden, 1));
    c_.push_back(Eigen::MatrixXd::Zero(model.config.hidden, 1));
  }
}

BaselineStep BaselineRunner::step(const Eigen::VectorXd& input) {
  const auto& st = model_->store;
  const Eigen::Index H = model_->config.hidden;
  auto sig = [](const Eigen::MatrixXd& m) { return Eigen::MatrixXd(1.0 / (1.0 + (-m.array()).exp())); };
  Eigen::MatrixXd x = input;
  for (std::size_t l = 0; l < model_->lstm.size(); ++l) {
    const LstmLayer& L = model_->lstm[l];
    const Eigen::MatrixXd gates = st[L.w_ih].value * x + st[L.w_hh].value * h_[l] + st[L.b].value;
    const Eigen::MatrixXd i = sig(gates.middleRows(0, H));
    const Eigen::MatrixXd f = sig(gates.middleRows(H, H));
    const Eigen::MatrixXd g = gates.middleRows(2 * H, H).array().tanh();
    const Eigen::MatrixXd o = sig(gates.middleRows(3 * H, H));
    c_[l] = f.cwiseProduct(c_[l]) + i.cwiseProduct(g);
    h_[l] = o.cwiseProduct(Eigen::MatrixXd(c_[l].array().tanh()));
    x = h_[l];
  }
  Eigen::VectorXd logits = st[model_->out_y_w].value * x + st[model_->out_y_b].value;
  logits = (logits.array() - logits.maxCoeff()).exp();
  BaselineStep out;
  out.y_probs = logits / logits.sum();
  out.drop_prob = sigmoid((st[model_->out_drop_w].value * x + st[model_->out_drop_b].value)(0, 0));
  return out;
}

namespace {

struct BaselineTrace {
  std::vector<Eigen::VectorXd> inputs;   // per window
  std::vector<Eigen::VectorXd> y_hist;   // empty when no delivered packet
  std::vector<std::optional<double>> drop_frac;
  int n_hist = 0;
  int n_drop = 0;
};

std::vector<BaselineTrace> prepare_baseline(const Dataset& data, const BaselineConfig& bc) {
  if (data.traces.empty()) throw std::invalid_argument("empty dataset");
  const Discretizer disc(bc.n_bins, 0.0, 1.0);
  std::vector<BaselineTrace> out;
  for (std::size_t i = 0; i < data.traces.size(); ++i) {
    const Trace& t = data.traces[i];
    if (t.packets.empty() || t.duration() < bc.window_len) {
      throw std::invalid_argument("trace " + std::to_string(i) + " is shorter than one window");
    }
    const WindowGrid grid = assign_windows(t, bc.window_len);
    const auto ranges = grid.ranges();
    const XNorm xn = normalize_static(t.static_features, data.ranges);
    BaselineTrace bt;
    for (std::size_t w = 0; w < grid.n_windows; ++w) {
      std::span<const PacketRecord> prev;
      if (w > 0) prev = std::span(t.packets).subspan(ranges[w - 1].first, ranges[w - 1].second - ranges[w - 1].first);
      bt.inputs.push_back(baseline_window_input(xn, t.static_features, prev, bc.window_len));
      Eigen::VectorXd h = Eigen::VectorXd::Zero(bc.n_bins);
      int delivered = 0;
      const auto [first, last] = ranges[w];
      for (std::size_t k = first; k < last; ++k) {
        const auto& p = t.packets[k];
        if (!p.delay.delivered()) continue;
        h(disc.discretize(p.delay.seconds() / t.static_features.y_max)) += 1.0;
        ++delivered;
      }
      if (delivered > 0) {
        bt.y_hist.push_back(h / delivered);
        ++bt.n_hist;
      } else {
        bt.y_hist.emplace_back();
      }
      if (last > first) {
        bt.drop_frac.push_back(1.0 - static_cast<double>(delivered) / static_cast<double>(last - first));
        ++bt.n_drop;
      } else {
        bt.drop_frac.push_back(std::nullopt);
      }
    }
    out.push_back(std::move(bt));
  }
  return out;
}

Var sum_all(Tape& tape, const std::vector<Var>& v) {
  if (v.empty()) return tape.constant(0.0);
  if (v.size() == 1) return v[0];
  return sum(concat_rows(v));
}

Var baseline_objective(Tape& tape, const BaselineModel& m, const std::vector<const BaselineTrace*>& batch) {
  const auto B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index H = m.config.hidden;
  const int nb = m.config.n_bins;
  std::size_t n_max = 0;
  for (const auto* b : batch) n_max = std::max(n_max, b->inputs.size());
  const std::size_t L = m.lstm.size();
  std::vector<Var> h(L), c(L);
  for (std::size_t l = 0; l < L; ++l) {
    h[l] = tape.constant(Mat::Zero(H, B));
    c[l] = tape.constant(Mat::Zero(H, B));
  }
  Var wy = tape.param(m.store, m.out_y_w), by = tape.param(m.store, m.out_y_b);
  Var wd = tape.param(m.store, m.out_drop_w), bd = tape.param(m.store, m.out_drop_b);
  std::vector<Var> terms;
  for (std::size_t w = 0; w < n_max; ++w) {
    Mat X = Mat::Zero(kBaselineInputs, B);
    Mat ty = Mat::Zero(nb, B);
    Mat d1 = Mat::Zero(1, B), d0 = Mat::Zero(1, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const BaselineTrace& bt = *batch[static_cast<std::size_t>(b)];
      if (w >= bt.inputs.size()) continue;
      X.col(b) = bt.inputs[w];
      if (bt.y_hist[w].size() > 0) ty.col(b) = bt.y_hist[w] / (bt.n_hist * static_cast<double>(B));
      if (bt.drop_frac[w]) {
        const double wt = 1.0 / (bt.n_drop * static_cast<double>(B));
        d1(0, b) = *bt.drop_frac[w] * wt;
        d0(0, b) = (1.0 - *bt.drop_frac[w]) * wt;
      }
    }
    Var x = tape.constant(X);
    for (std::size_t l = 0; l < L; ++l) {
      std::tie(h[l], c[l]) = lstm_cell(tape, m.store, m.lstm[l], l == 0 ? x : h[l - 1], h[l], c[l]);
    }
    if (ty.sum() > 0.0) terms.push_back(-sum(mul(log_softmax(add_bias(matmul(wy, h[L - 1]), by)), tape.constant(ty))));
    if (d1.sum() + d0.sum() > 0.0) {
      Var dl = add_bias(matmul(wd, h[L - 1]), bd);
      terms.push_back(sum(mul(softplus(-dl), tape.constant(d1))) + sum(mul(softplus(dl), tape.constant(d0))));
    }
  }
  return sum_all(tape, terms);
}

}  // namespace

BaselineTrainResult train_baseline(const Dataset& data, const TrainConfig& cfg, const BaselineConfig& bcfg,
                                   const EpochCallback& on_epoch) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("epochs and batch_size must be >= 1");
  const auto prepared = prepare_baseline(data, bcfg);
  BaselineTrainResult res{BaselineModel(bcfg, derive_seed(cfg.seed, "baseline")), {}};
  BaselineModel& m = res.model;
  if (cfg.prior_bias_init) {
    Eigen::VectorXd marginal = Eigen::VectorXd::Zero(bcfg.n_bins);
    double n = 0.0, drop = 0.0, nd = 0.0;
    for (const auto& bt : prepared) {
      for (const auto& hst : bt.y_hist) {
        if (hst.size() == 0) continue;
        marginal += hst;
        n += 1.0;
      }
      for (const auto& d : bt.drop_frac) {
        if (!d) continue;
        drop += *d;
        nd += 1.0;
      }
    }
    if (n > 0.0) {
      Eigen::VectorXd bias = (marginal.array() / n + 1e-3).log().matrix();
      bias.array() -= bias.mean();
      m.store[m.out_y_b].value = bias;
    }
    if (nd > 0.0) {
      const double p = std::clamp(drop / nd, 1e-3, 1.0 - 1e-3);
      m.store[m.out_drop_b].value(0, 0) = std::log(p / (1.0 - p));
    }
  }
  std::vector<std::size_t> order(prepared.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(cfg.seed, "baseline.epoch", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const BaselineTrace*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&prepared[order[k]]);
      Tape tape;
      Var loss = baseline_objective(tape, m, batch);
      m.store.zero_grad();
      tape.backward(loss, m.store);
      sgd_step(m.store, cfg.lr);
      total += loss.scalar() * static_cast<double>(batch.size());
    }
    EpochStats s;
    s.epoch = epoch;
    s.j_win = total / static_cast<double>(prepared.size());
    s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(s);
    if (on_epoch) on_epoch(s);
  }
  return res;
}

Checkpoint make_baseline_checkpoint(const BaselineModel& model, BaselineKind kind, const Dataset& train) {
  Checkpoint c;
  c.kind = to_string(kind);
  const BaselineConfig& b = model.config;
  c.config = {{"hidden", b.hidden},
              {"layers", b.layers},
              {"n_bins", b.n_bins},
              {"window_len", b.window_len},
              {"weight_decay", b.weight_decay}};
  c.store = model.store;
  c.ranges = train.ranges;
  for (const auto& t : train.traces) c.sources.push_back(t.static_features);
  c.disc = Discretizer(b.n_bins, 0.0, 1.0);
  return c;
}

BaselineModel baseline_from_checkpoint(const Checkpoint& ckpt) {
  baseline_kind_from_string(ckpt.kind);
  BaselineModel m;
  m.config.hidden = ckpt.config.at("hidden").get<int>();
  m.config.layers = ckpt.config.at("layers").get<int>();
  m.config.n_bins = ckpt.config.at("n_bins").get<int>();
  m.config.window_len = ckpt.config.at("window_len").get<double>();
  m.config.weight_decay = ckpt.config.at("weight_decay").get<double>();
  m.store = ckpt.store;
  m.bind_indices();
  return m;
}

}  // namespace ndnet
