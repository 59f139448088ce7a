#include "ndnet/rbu.hpp"

#include <algorithm>
#include <cmath>

namespace ndnet {

HeuristicParams heuristic_path_params(const StaticFeatures& x, std::uint32_t mtu, double rho) {
  if (!(x.p95_throughput > 0.0)) throw std::invalid_argument("p95_throughput must be > 0");
  HeuristicParams h;
  h.d_prop = rho * x.y_min;
  h.d_trans = mtu * 8.0 / x.p95_throughput;
  h.tau = x.y_max - h.d_prop;
  if (!(h.tau > 0.0)) throw std::invalid_argument("heuristic buffer size tau <= 0");
  return h;
}

int select_bin(const Eigen::VectorXd& probs, BinMode mode, Rng& rng) {
  if (probs.size() == 0) throw std::invalid_argument("select_bin on an empty distribution");
  if (mode == BinMode::Sample) {
    const double u = uniform(rng, 0.0, 1.0) * probs.sum();
    double acc = 0.0;
    for (Eigen::Index b = 0; b < probs.size(); ++b) {
      acc += probs(b);
      if (u < acc) return static_cast<int>(b);
    }
    return static_cast<int>(probs.size() - 1);
  }
  Eigen::Index best = 0;
  for (Eigen::Index b = 1; b < probs.size(); ++b) {
    if (probs(b) > probs(best)) best = b;
  }
  return static_cast<int>(best);
}

RbuModel::RbuModel(const RbuConfig& cfg, std::uint64_t seed) : config(cfg) {
  if (cfg.hidden < 1 || cfg.layers < 1 || cfg.n_bins < 2) {
    throw std::invalid_argument("hidden, layers must be >= 1 and n_bins >= 2");
  }
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (!(cfg.kappa > 0.0)) throw std::invalid_argument("kappa must be > 0");
  Rng rng = make_rng(seed, "rbu.init");
  const double wd = cfg.weight_decay;
  const auto W = ParamGroup::Window;
  const auto P = ParamGroup::Packet;
  for (int l = 0; l < cfg.layers; ++l) {
    make_lstm_layer(store, "window.lstm" + std::to_string(l), l == 0 ? 3 : cfg.hidden, cfg.hidden, W, wd, rng);
  }
  const double a = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  store.add("window.out_c.w", uniform_matrix(cfg.n_bins, cfg.hidden, a, rng), W, wd);
  store.add("window.out_c.b", uniform_matrix(cfg.n_bins, 1, a, rng), W, wd);
  if (cfg.multipath) {
    const int q_out = cfg.q_bins ? cfg.n_bins : 1;
    store.add("window.out_q.w", uniform_matrix(q_out, cfg.hidden, a, rng), W, wd);
    store.add("window.out_q.b", uniform_matrix(q_out, 1, a, rng), W, wd);
  }
  store.add("packet.g_prop", Mat::Zero(1, 4), P, wd);
  store.add("packet.g_trans", Mat::Zero(1, 4), P, wd);
  store.add("packet.g_tau", Mat::Zero(1, 4), P, wd);
  if (cfg.multipath) {
    Mat scale = Mat::Zero(1, 4);
    // Second queue starts twice as deep as the first.
    const double f = (2.0 - kScaleLo) / (kScaleHi - kScaleLo);
    scale(0, 3) = std::log(f / (1.0 - f));
    store.add("packet.g_scale", scale, P, wd);
    store.add("packet.g_trans2", Mat::Zero(1, 4), P, wd);
  }
  store.add("packet.cell.wh", uniform_matrix(1, 5, 0.5, rng), P, wd);
  store.add("packet.cell.bh", uniform_matrix(1, 1, 0.5, rng), P, wd);
  store.add("packet.cell.uh", uniform_matrix(1, 1, 0.5, rng), P, wd);
  store.add("packet.cell.wc", uniform_matrix(1, 1, 0.5, rng), P, wd);
  store.add("packet.cell.bc", uniform_matrix(1, 1, 0.5, rng), P, wd);
  bind_indices();
}

void RbuModel::bind_indices() {
  lstm.clear();
  for (int l = 0; l < config.layers; ++l) {
    const std::string pre = "window.lstm" + std::to_string(l);
    LstmLayer layer;
    layer.w_ih = store.index(pre + ".w_ih");
    layer.w_hh = store.index(pre + ".w_hh");
    layer.b = store.index(pre + ".b");
    layer.hidden = config.hidden;
    lstm.push_back(layer);
  }
  out_c_w = store.index("window.out_c.w");
  out_c_b = store.index("window.out_c.b");
  out_q_w = config.multipath ? store.index("window.out_q.w") : -1;
  out_q_b = config.multipath ? store.index("window.out_q.b") : -1;
  g_prop = store.index("packet.g_prop");
  g_trans = store.index("packet.g_trans");
  g_tau = store.index("packet.g_tau");
  g_scale = config.multipath ? store.index("packet.g_scale") : -1;
  g_trans2 = config.multipath ? store.index("packet.g_trans2") : -1;
  cell_wh = store.index("packet.cell.wh");
  cell_bh = store.index("packet.cell.bh");
  cell_uh = store.index("packet.cell.uh");
  cell_wc = store.index("packet.cell.wc");
  cell_bc = store.index("packet.cell.bc");
}

std::size_t RbuModel::n_buffer_scalars() const {
  std::size_t n = 0;
  for (const auto& p : store.params()) {
    if (p.group == ParamGroup::Packet) n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

namespace {

template <class Get>
auto read_buffer(const RbuModel& m, Get get) {
  using T = decltype(get(0, 0));
  BufferParamsT<T> b;
  auto head = [&](int idx) {
    GHeadT<T> h;
    for (int i = 0; i < 3; ++i) h.w[static_cast<std::size_t>(i)] = get(idx, i);
    h.bias = get(idx, 3);
    return h;
  };
  b.prop = head(m.g_prop);
  b.trans = head(m.g_trans);
  b.tau = head(m.g_tau);
  if (m.config.multipath) {
    b.scale = head(m.g_scale);
    b.trans2 = head(m.g_trans2);
  } else {
    b.scale = b.prop;
    b.trans2 = b.trans;
  }
  for (int i = 0; i < 5; ++i) b.cell.wh[static_cast<std::size_t>(i)] = get(m.cell_wh, i);
  b.cell.bh = get(m.cell_bh, 0);
  b.cell.uh = get(m.cell_uh, 0);
  b.cell.wc = get(m.cell_wc, 0);
  b.cell.bc = get(m.cell_bc, 0);
  return b;
}

}  // namespace

BufferParamsT<double> buffer_values(const RbuModel& m) {
  return read_buffer(m, [&](int idx, int i) { return m.store[idx].value(0, i); });
}

BufferParamsT<Var> buffer_vars(Tape& tape, const RbuModel& m) {
  return read_buffer(m, [&](int idx, int i) { return select(tape.param(m.store, idx), 0, i); });
}

WindowForward window_forward(Tape& tape, const RbuModel& m, const Mat& x_norm, std::size_t n_windows) {
  if (x_norm.rows() != 3) throw std::invalid_argument("x_norm must have 3 rows");
  const Eigen::Index B = x_norm.cols();
  const Eigen::Index H = m.config.hidden;
  const auto L = m.lstm.size();
  Var x = tape.constant(x_norm);
  Var proj0 = lstm_input_projection(tape, m.store, m.lstm[0], x);
  std::vector<Var> h(L), c(L);
  for (std::size_t l = 0; l < L; ++l) {
    h[l] = tape.constant(Mat::Zero(H, B));
    c[l] = tape.constant(Mat::Zero(H, B));
  }
  Var wc = tape.param(m.store, m.out_c_w);
  Var bc = tape.param(m.store, m.out_c_b);
  WindowForward out;
  out.c_logits.reserve(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    std::tie(h[0], c[0]) = lstm_cell_projected(tape, m.store, m.lstm[0], proj0, h[0], c[0]);
    for (std::size_t l = 1; l < L; ++l) {
      std::tie(h[l], c[l]) = lstm_cell(tape, m.store, m.lstm[l], h[l - 1], h[l], c[l]);
    }
    out.c_logits.push_back(add_bias(matmul(wc, h[L - 1]), bc));
    if (m.config.multipath) {
      out.q_logits.push_back(add_bias(matmul(tape.param(m.store, m.out_q_w), h[L - 1]),
                                      tape.param(m.store, m.out_q_b)));
    }
  }
  return out;
}

WindowPlan plan_windows(const RbuModel& m, const XNorm& x_norm, std::size_t n_windows, BinMode mode,
                        Rng& rng) {
  Tape tape;
  Mat x(3, 1);
  x << x_norm[0], x_norm[1], x_norm[2];
  const WindowForward fw = window_forward(tape, m, x, n_windows);
  const Discretizer disc(m.config.n_bins, 0.0, 1.0);
  auto pick = [&](const Eigen::VectorXd& probs) {
    if (mode == BinMode::Expected) {
      double v = 0.0;
      for (Eigen::Index b = 0; b < probs.size(); ++b) v += probs(b) * disc.bin_center(static_cast<int>(b));
      return v;
    }
    return disc.bin_to_value(select_bin(probs, mode, rng), rng);
  };
  auto softmax_col = [](const Mat& logits) {
    Eigen::VectorXd v = logits.col(0);
    v = (v.array() - v.maxCoeff()).exp();
    return Eigen::VectorXd(v / v.sum());
  };
  WindowPlan plan;
  for (std::size_t w = 0; w < n_windows; ++w) {
    Eigen::VectorXd probs = softmax_col(fw.c_logits[w].value());
    plan.c_w.push_back(pick(probs));
    plan.c_probs.push_back(std::move(probs));
    if (m.config.multipath) {
      const Mat& ql = fw.q_logits[w].value();
      plan.q_w.push_back(m.config.q_bins ? pick(softmax_col(ql)) : sigmoid(ql(0, 0)));
    }
  }
  return plan;
}

InversionResult invert_cross_traffic(const Trace& trace, const HeuristicParams& hp,
                                     const WindowGrid& grid, const Discretizer& disc,
                                     std::uint32_t mtu) {
  InversionResult res;
  const auto& pk = trace.packets;
  res.c_tilde.assign(pk.size(), std::nullopt);
  std::vector<Eigen::VectorXd> counts(grid.n_windows, Eigen::VectorXd::Zero(disc.n_bins()));
  std::vector<int> n_in(grid.n_windows, 0);
  double d_prev = 0.0;
  double elapsed = 0.0;
  for (std::size_t i = 0; i < pk.size(); ++i) {
    const double s = elapsed + pk[i].spacing;
    if (pk[i].delay.dropped()) {
      elapsed = s;
      continue;
    }
    elapsed = 0.0;
    const double d = pk[i].delay.seconds() - hp.d_prop;
    const double a = hp.d_trans * pk[i].size / static_cast<double>(mtu) + relu(d_prev - s);
    double c;
    if (hp.tau - a <= 1e-12) {
      c = 1.0;
      ++res.n_degenerate;
    } else {
      c = (d - a) / (hp.tau - a);
      if (c < 0.0 || c > 1.0) {
        ++res.n_clamped;
        c = std::clamp(c, 0.0, 1.0);
      }
    }
    res.c_tilde[i] = c;
    d_prev = d;
    const std::size_t w = grid.assignment[i];
    counts[w](disc.discretize(c)) += 1.0;
    ++n_in[w];
  }
  res.window_hist.resize(grid.n_windows);
  for (std::size_t w = 0; w < grid.n_windows; ++w) {
    if (n_in[w] > 0) res.window_hist[w] = counts[w] / n_in[w];
  }
  return res;
}

}  // namespace ndnet
