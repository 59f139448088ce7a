#include "ndnet/training.hpp"

#include "ndnet/groundtruth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ndnet {

namespace {

Var sum_vars(Tape& tape, const std::vector<Var>& v) {
  if (v.empty()) return tape.constant(0.0);
  if (v.size() == 1) return v[0];
  return sum(concat_rows(v));
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

std::vector<PreparedTrace> prepare_traces(const Dataset& data, const TrainConfig& cfg) {
  if (data.traces.empty()) throw std::invalid_argument("empty dataset");
  const double L = cfg.model.window_len;
  const Discretizer disc(cfg.model.n_bins, 0.0, 1.0);
  std::vector<PreparedTrace> out;
  out.reserve(data.traces.size());
  for (std::size_t i = 0; i < data.traces.size(); ++i) {
    const Trace& t = data.traces[i];
    if (t.packets.empty() || t.duration() < L) {
      throw std::invalid_argument("trace " + std::to_string(i) + " is shorter than one window");
    }
    PreparedTrace p;
    p.trace = &t;
    p.x_norm = normalize_static(t.static_features, data.ranges);
    p.heuristic = heuristic_path_params(t.static_features, cfg.model.mtu, cfg.model.rho);
    p.grid = assign_windows(t, L);
    p.windows = p.grid.ranges();
    p.inversion = invert_cross_traffic(t, p.heuristic, p.grid, disc, cfg.model.mtu);
    if (cfg.model.multipath) {
      const auto flags = overtaken_flags(t);
      p.q_target.assign(p.grid.n_windows, std::nullopt);
      for (std::size_t w = 0; w < p.grid.n_windows; ++w) {
        int delivered = 0;
        int over = 0;
        for (std::size_t k = p.windows[w].first; k < p.windows[w].second; ++k) {
          if (t.packets[k].delay.delivered()) ++delivered;
          if (flags[k]) ++over;
        }
        if (delivered > 0) p.q_target[w] = static_cast<double>(over) / delivered;
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

double packet_loss(double y_hat, double logit_p, const Delay& y, double y_scale) {
  if (y.dropped()) return softplus(-logit_p);
  const double e = (y_hat - y.seconds()) / y_scale;
  return softplus(logit_p) + e * e;
}

Var packet_loss(Var y_hat, Var logit_p, const Delay& y, double y_scale) {
  if (y.dropped()) return softplus(-logit_p);
  return softplus(logit_p) + square((y_hat - y.seconds()) / y_scale);
}

double window_loss(const Eigen::VectorXd& logits, const Eigen::VectorXd& target) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return -(target.array() * (logits.array() - lse)).sum();
}

namespace {

// Mixture drop probability of the two-path relaxation.
Var mixture_packet_loss(Var y_hat, Var p, const Delay& y, double y_scale) {
  constexpr double eps = 1e-12;
  if (y.dropped()) return -log(p + eps);
  return -log((1.0 + eps) - p) + square((y_hat - y.seconds()) / y_scale);
}

double mixture_packet_loss(double y_hat, double p, const Delay& y, double y_scale) {
  constexpr double eps = 1e-12;
  if (y.dropped()) return -std::log(p + eps);
  const double e = (y_hat - y.seconds()) / y_scale;
  return -std::log((1.0 + eps) - p) + e * e;
}

PacketInput packet_input(const PacketRecord& pk, std::size_t w, double L, double y_max, std::uint32_t mtu) {
  PacketInput in;
  in.spacing = pk.spacing;
  in.size_norm = static_cast<double>(pk.size) / mtu;
  in.window_elapsed = std::clamp((pk.send_time - static_cast<double>(w) * L) / L, 0.0, 1.0);
  in.y_max = y_max;
  return in;
}

}  // namespace

Objective batch_objective(Tape& tape, const RbuModel& model,
                          const std::vector<const PreparedTrace*>& batch, const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const RbuConfig& mc = model.config;
  const auto B = static_cast<Eigen::Index>(batch.size());
  const int nb = mc.n_bins;
  const double L = mc.window_len;
  std::size_t n_max = 0;
  Mat X(3, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto* p = batch[static_cast<std::size_t>(b)];
    X.col(b) << p->x_norm[0], p->x_norm[1], p->x_norm[2];
    n_max = std::max(n_max, p->grid.n_windows);
  }
  const WindowForward fw = window_forward(tape, model, X, n_max);
  const BufferParamsT<Var> bp = buffer_vars(tape, model);
  const Discretizer disc(nb, 0.0, 1.0);
  Mat centers_m(1, nb);
  for (int k = 0; k < nb; ++k) centers_m(0, k) = disc.bin_center(k);
  Var centers = tape.constant(centers_m);

  // Non-empty window counts per trace for the window-loss averages.
  std::vector<int> n_hist(static_cast<std::size_t>(B), 0), n_q(static_cast<std::size_t>(B), 0);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto* p = batch[static_cast<std::size_t>(b)];
    for (const auto& h : p->inversion.window_hist) n_hist[static_cast<std::size_t>(b)] += h.size() > 0;
    for (const auto& q : p->q_target) n_q[static_cast<std::size_t>(b)] += q.has_value();
  }

  std::vector<Var> win_terms;
  std::vector<Var> cw_rows(n_max), q_rows(n_max);
  for (std::size_t w = 0; w < n_max; ++w) {
    Mat target = Mat::Zero(nb, B);
    bool any_packets = false;
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto* p = batch[static_cast<std::size_t>(b)];
      if (w >= p->grid.n_windows) continue;
      const auto& h = p->inversion.window_hist[w];
      if (h.size() > 0) target.col(b) = h / (n_hist[static_cast<std::size_t>(b)] * static_cast<double>(B));
      any_packets = any_packets || p->windows[w].second > p->windows[w].first;
    }
    Var logits = fw.c_logits[w];
    if (target.cwiseAbs().sum() > 0.0) win_terms.push_back(-sum(mul(log_softmax(logits), tape.constant(target))));
    if (any_packets) cw_rows[w] = matmul(centers, softmax(logits));

    if (mc.multipath) {
      Var ql = fw.q_logits[w];
      if (mc.q_bins) {
        Mat qt = Mat::Zero(nb, B);
        for (Eigen::Index b = 0; b < B; ++b) {
          const auto* p = batch[static_cast<std::size_t>(b)];
          if (w < p->q_target.size() && p->q_target[w]) {
            qt(disc.discretize(*p->q_target[w]), b) = 1.0 / (n_q[static_cast<std::size_t>(b)] * static_cast<double>(B));
          }
        }
        if (qt.sum() > 0.0) win_terms.push_back(-sum(mul(log_softmax(ql), tape.constant(qt))));
        if (any_packets) q_rows[w] = matmul(centers, softmax(ql));
      } else {
        Mat w1 = Mat::Zero(1, B), w0 = Mat::Zero(1, B);
        for (Eigen::Index b = 0; b < B; ++b) {
          const auto* p = batch[static_cast<std::size_t>(b)];
          if (w < p->q_target.size() && p->q_target[w]) {
            const double wt = 1.0 / (n_q[static_cast<std::size_t>(b)] * static_cast<double>(B));
            w1(0, b) = *p->q_target[w] * wt;
            w0(0, b) = (1.0 - *p->q_target[w]) * wt;
          }
        }
        if (w1.sum() + w0.sum() > 0.0) {
          win_terms.push_back(sum(mul(softplus(-ql), tape.constant(w1))) +
                              sum(mul(softplus(ql), tape.constant(w0))));
        }
        if (any_packets) q_rows[w] = sigmoid(ql);
      }
    }
  }
  Var j_win = sum_vars(tape, win_terms);

  std::vector<Var> trace_terms;
  Var zero = tape.constant(0.0);
  for (Eigen::Index b = 0; b < B; ++b) {
    const PreparedTrace& p = *batch[static_cast<std::size_t>(b)];
    const Trace& t = *p.trace;
    const StaticFeatures& x = t.static_features;
    const PathParamsT<Var> path = path_params(bp, p.x_norm, x, mc.multipath);
    RbuStateT<Var> st = initial_state(zero);
    MultiStateT<Var> ms = initial_multi_state(zero);
    std::vector<Var> window_means;
    for (std::size_t w = 0; w < p.grid.n_windows; ++w) {
      const auto [first, last] = p.windows[w];
      if (first == last) continue;
      Var cw = select(cw_rows[w], 0, b);
      std::vector<Var> losses;
      losses.reserve(last - first);
      for (std::size_t i = first; i < last; ++i) {
        const PacketRecord& pk = t.packets[i];
        const PacketInput in = packet_input(pk, w, L, x.y_max, mc.mtu);
        const bool delivered = pk.delay.delivered();
        if (mc.multipath) {
          Var q = select(q_rows[w], 0, b);
          const auto out = multipath_soft_step(path, bp.cell, cw, q, in, mc.gamma, mc.kappa, delivered, ms);
          losses.push_back(mixture_packet_loss(out.y, out.p, pk.delay, x.y_max));
        } else {
          const auto out = rbu_forward(path, bp.cell, cw, in, mc.gamma, mc.kappa, st);
          losses.push_back(packet_loss(out.y, mc.kappa * (out.d - path.tau), pk.delay, x.y_max));
          rbu_commit(st, bp.cell, cw, in, out, delivered);
        }
      }
      window_means.push_back(sum_vars(tape, losses) / static_cast<double>(losses.size()));
    }
    trace_terms.push_back(sum_vars(tape, window_means) / static_cast<double>(window_means.size()));
  }
  Var j_pkt = sum_vars(tape, trace_terms) / static_cast<double>(B);
  return {j_pkt + cfg.lambda * j_win, j_pkt, j_win};
}

void init_from_data(RbuModel& model, const std::vector<PreparedTrace>& traces, const TrainConfig& cfg) {
  const int nb = model.config.n_bins;
  if (cfg.prior_bias_init) {
    Eigen::VectorXd marginal = Eigen::VectorXd::Zero(nb);
    double n = 0.0;
    for (const auto& p : traces) {
      for (const auto& h : p.inversion.window_hist) {
        if (h.size() == 0) continue;
        marginal += h;
        n += 1.0;
      }
    }
    if (n > 0.0) {
      marginal /= n;
      Eigen::VectorXd bias = (marginal.array() + 1e-3).log().matrix();
      bias.array() -= bias.mean();
      model.store[model.out_c_b].value = bias;
    }
    if (model.config.multipath && !model.config.q_bins) {
      double q = 0.0;
      double m = 0.0;
      for (const auto& p : traces) {
        for (const auto& t : p.q_target) {
          if (t) {
            q += *t;
            m += 1.0;
          }
        }
      }
      if (m > 0.0) model.store[model.out_q_b].value(0, 0) = logit(std::clamp(q / m, 0.02, 0.98));
    }
  }
  if (cfg.heuristic_head_init) {
    const auto N = static_cast<Eigen::Index>(traces.size());
    Mat A(N, 4);
    Eigen::VectorXd f_prop(N), f_trans(N), f_tau(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto& p = traces[static_cast<std::size_t>(i)];
      const StaticFeatures& x = p.trace->static_features;
      A.row(i) << p.x_norm[0], p.x_norm[1], p.x_norm[2], 1.0;
      f_prop(i) = logit(std::clamp(p.heuristic.d_prop / x.y_min, 0.02, 0.98));
      f_trans(i) = logit(std::clamp(p.heuristic.d_trans / x.y_min, 0.02, 0.98));
      f_tau(i) = logit(std::clamp(p.heuristic.tau / x.y_max, 0.02, 0.98));
    }
    const Mat AtA = A.transpose() * A + 1e-3 * Mat::Identity(4, 4);
    const auto solver = AtA.ldlt();
    auto fit = [&](int idx, const Eigen::VectorXd& target) {
      const Eigen::VectorXd w = solver.solve(A.transpose() * target);
      model.store[idx].value = w.transpose();
    };
    fit(model.g_prop, f_prop);
    fit(model.g_trans, f_trans);
    fit(model.g_tau, f_tau);
    if (model.config.multipath) fit(model.g_trans2, f_trans);
  }
}

TrainResult train_rbu(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("epochs and batch_size must be >= 1");
  if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  const auto prepared = prepare_traces(data, cfg);
  RbuConfig mc = cfg.model;
  mc.weight_decay = cfg.weight_decay;
  TrainResult res{RbuModel(mc, derive_seed(cfg.seed, "model")), {}};
  RbuModel& model = res.model;
  init_from_data(model, prepared, cfg);

  std::vector<std::size_t> order(prepared.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double sum_pkt = 0.0;
    double sum_win = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const PreparedTrace*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&prepared[order[k]]);
      Tape tape;
      const Objective obj = batch_objective(tape, model, batch, cfg);
      model.store.zero_grad();
      tape.backward(obj.total, model.store);
      sgd_step(model.store, cfg.lr);
      sum_pkt += obj.j_pkt.scalar() * static_cast<double>(batch.size());
      sum_win += obj.j_win.scalar() * static_cast<double>(batch.size());
    }
    EpochStats s;
    s.epoch = epoch;
    s.j_pkt = sum_pkt / static_cast<double>(prepared.size());
    s.j_win = sum_win / static_cast<double>(prepared.size());
    s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(s);
    if (on_epoch) on_epoch(s);
  }
  return res;
}

FitReport evaluate_fit(const RbuModel& model, const PreparedTrace& p) {
  const RbuConfig& mc = model.config;
  const Trace& t = *p.trace;
  const StaticFeatures& x = t.static_features;
  Rng unused(0);
  const WindowPlan plan = plan_windows(model, p.x_norm, p.grid.n_windows, BinMode::Expected, unused);
  const BufferParamsT<double> bp = buffer_values(model);
  const PathParamsT<double> path = path_params(bp, p.x_norm, x, mc.multipath);
  RbuStateT<double> st = initial_state(0.0);
  MultiStateT<double> ms = initial_multi_state(0.0);
  FitReport r;
  double err = 0.0;
  std::size_t delivered = 0, correct = 0, windows = 0;
  for (std::size_t w = 0; w < p.grid.n_windows; ++w) {
    const auto [first, last] = p.windows[w];
    if (first == last) continue;
    double wsum = 0.0;
    for (std::size_t i = first; i < last; ++i) {
      const PacketRecord& pk = t.packets[i];
      const PacketInput in = packet_input(pk, w, mc.window_len, x.y_max, mc.mtu);
      const bool dlv = pk.delay.delivered();
      double y_hat, prob, loss;
      if (mc.multipath) {
        const auto out = multipath_soft_step(path, bp.cell, plan.c_w[w], plan.q_w[w], in, mc.gamma, mc.kappa, dlv, ms);
        y_hat = out.y;
        prob = out.p;
        loss = mixture_packet_loss(out.y, out.p, pk.delay, x.y_max);
      } else {
        const auto out = rbu_forward(path, bp.cell, plan.c_w[w], in, mc.gamma, mc.kappa, st);
        y_hat = out.y;
        prob = out.p;
        loss = packet_loss(out.y, mc.kappa * (out.d - path.tau), pk.delay, x.y_max);
        rbu_commit(st, bp.cell, plan.c_w[w], in, out, dlv);
      }
      wsum += loss;
      if ((prob > 0.5) == !dlv) ++correct;
      if (dlv) {
        err += std::abs(y_hat - pk.delay.seconds()) / x.y_max;
        ++delivered;
      }
    }
    r.packet_loss += wsum / static_cast<double>(last - first);
    ++windows;
  }
  r.packet_loss /= static_cast<double>(std::max<std::size_t>(windows, 1));
  r.mean_norm_delay_error = delivered ? err / static_cast<double>(delivered) : 0.0;
  r.drop_accuracy = static_cast<double>(correct) / static_cast<double>(t.packets.size());
  return r;
}

nlohmann::json rbu_config_to_json(const RbuConfig& c) {
  return {{"hidden", c.hidden},       {"layers", c.layers},   {"n_bins", c.n_bins},
          {"gamma", c.gamma},         {"kappa", c.kappa},     {"rho", c.rho},
          {"multipath", c.multipath}, {"q_bins", c.q_bins},   {"mtu", c.mtu},
          {"window_len", c.window_len}, {"weight_decay", c.weight_decay}};
}

RbuConfig rbu_config_from_json(const nlohmann::json& j) {
  RbuConfig c;
  c.hidden = j.at("hidden").get<int>();
  c.layers = j.at("layers").get<int>();
  c.n_bins = j.at("n_bins").get<int>();
  c.gamma = j.at("gamma").get<double>();
  c.kappa = j.at("kappa").get<double>();
  c.rho = j.at("rho").get<double>();
  c.multipath = j.at("multipath").get<bool>();
  c.q_bins = j.at("q_bins").get<bool>();
  c.mtu = j.at("mtu").get<std::uint32_t>();
  c.window_len = j.at("window_len").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  return c;
}

Checkpoint make_rbu_checkpoint(const RbuModel& model, const Dataset& train) {
  Checkpoint c;
  c.kind = "rbu";
  c.config = rbu_config_to_json(model.config);
  c.store = model.store;
  c.ranges = train.ranges;
  for (const auto& t : train.traces) c.sources.push_back(t.static_features);
  c.disc = Discretizer(model.config.n_bins, 0.0, 1.0);
  return c;
}

RbuModel rbu_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "rbu") throw std::invalid_argument("checkpoint kind '" + ckpt.kind + "' is not rbu");
  RbuModel m;
  m.config = rbu_config_from_json(ckpt.config);
  m.store = ckpt.store;
  m.bind_indices();
  return m;
}

Dataset micro_batch_dataset(std::uint64_t seed) {
  std::vector<Trace> traces;
  for (int i = 0; i < 2; ++i) {
    Rng rng = make_rng(seed, "micro", static_cast<std::uint64_t>(i));
    ScenarioOptions so;
    so.bandwidth_override = {2e6, 3e6};
    so.buffer_scale = 0.3;
    PathConfig cfg = sample_path_config(1, rng, so);
    cfg.cross = sample_cross_schedule(cfg.bandwidth, 0.3, {0.1, 0.1, 0.8}, rng);
    cfg.seed = derive_seed(seed, "micro.trace", static_cast<std::uint64_t>(i));
    cfg.tag = "micro" + std::to_string(i);
    SenderParams sp;
    sp.constant_rate_pps = 200.0;
    auto sender = make_sender(SenderKind::ConstantRate, sp, 0);
    traces.push_back(run_ground_truth(cfg, *sender, 0.3, "constant"));
  }
  return make_dataset(std::move(traces), SplitTag::Train);
}

GradCheckResult objective_gradcheck(std::uint64_t seed, int n_window, bool multipath) {
  const Dataset data = micro_batch_dataset(seed);
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.model.multipath = multipath;
  const auto prepared = prepare_traces(data, cfg);
  RbuModel model(cfg.model, derive_seed(seed, "model"));
  init_from_data(model, prepared, cfg);
  std::vector<const PreparedTrace*> batch;
  for (const auto& p : prepared) batch.push_back(&p);
  std::vector<ScalarRef> which = group_scalars(model.store, ParamGroup::Packet);
  auto win = group_scalars(model.store, ParamGroup::Window);
  Rng rng = make_rng(seed, "gradcheck.sample");
  std::shuffle(win.begin(), win.end(), rng);
  win.resize(std::min(win.size(), static_cast<std::size_t>(std::max(0, n_window))));
  which.insert(which.end(), win.begin(), win.end());
  LossFn loss = [&](Tape& tape) { return batch_objective(tape, model, batch, cfg).total; };
  return check_gradients(model.store, loss, which, 1e-5, multipath ? "objective-multipath" : "objective");
}

}  // namespace ndnet
