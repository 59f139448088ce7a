#include "ndnet/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ndnet/parallel.hpp"

namespace ndnet {

std::string to_string(DropMode m) { return m == DropMode::Hard ? "hard" : "bernoulli"; }

DropMode drop_mode_from_string(const std::string& s) {
  if (s == "hard") return DropMode::Hard;
  if (s == "bernoulli") return DropMode::Bernoulli;
  throw std::invalid_argument("unknown drop mode '" + s + "'");
}

RbuEnvironment::RbuEnvironment(const RbuModel& model, const StaticFeatures& x, const XNorm& x_norm,
                               double duration, const RbuSimOptions& options, std::uint64_t seed)
    : model_(&model), x_(x), opt_(options), rng_(seed) {
  if (!(duration > 0.0)) throw std::invalid_argument("duration must be > 0");
  const RbuConfig& mc = model.config;
  const BufferParamsT<double> bp = buffer_values(model);
  path_ = path_params(bp, x_norm, x, mc.multipath);
  if (mc.multipath && opt_.tau2_scale) path_.tau2 = path_.tau * *opt_.tau2_scale;
  cell_ = bp.cell;
  plan_ = plan_windows(model, x_norm, windows_for_duration(duration, mc.window_len), opt_.bin_mode, rng_);
  st_ = initial_state(0.0);
  ms_ = initial_multi_state(0.0);
}

double RbuEnvironment::drop_timeout() const {
  return 4.0 * path_.d_prop + std::max(path_.tau, model_->config.multipath ? path_.tau2 : path_.tau);
}

Outcome RbuEnvironment::transmit(std::uint64_t, double send_time, double spacing, std::uint32_t size) {
  const RbuConfig& mc = model_->config;
  const std::size_t w = std::min(window_index(send_time, mc.window_len), plan_.c_w.size() - 1);
  PacketInput in;
  in.spacing = spacing;
  in.size_norm = static_cast<double>(size) / mc.mtu;
  in.window_elapsed = std::clamp((send_time - static_cast<double>(w) * mc.window_len) / mc.window_len, 0.0, 1.0);
  in.y_max = x_.y_max;
  const double cw = plan_.c_w[w];
  auto decide = [&](double d, double tau) {
    if (opt_.drop_mode == DropMode::Hard) return hard_drop(d, tau);
    return uniform(rng_, 0.0, 1.0) < drop_probability(d, tau, mc.kappa);
  };
  if (!mc.multipath) {
    const auto out = rbu_forward(path_, cell_, cw, in, mc.gamma, mc.kappa, st_);
    const bool dropped = decide(out.d, path_.tau);
    rbu_commit(st_, cell_, cw, in, out, !dropped);
    return dropped ? Outcome::drop() : Outcome::delivered(out.y);
  }
  const double q = opt_.q_override ? *opt_.q_override : plan_.q_w[w];
  const int k = uniform(rng_, 0.0, 1.0) < q ? 1 : 0;
  MultiStateT<double> trial = ms_;
  const auto out = multipath_step(path_, cell_, cw, in, mc.gamma, mc.kappa, k, true, trial);
  const bool dropped = decide(out.d, k == 0 ? path_.tau : path_.tau2);
  if (dropped) {
    multipath_step(path_, cell_, cw, in, mc.gamma, mc.kappa, k, false, ms_);
    return Outcome::drop();
  }
  ms_ = trial;
  return Outcome::delivered(out.y);
}

BaselineEnvironment::BaselineEnvironment(const BaselineModel& model, BaselineKind kind, const StaticFeatures& x,
                                         const XNorm& x_norm, double rho, std::uint64_t seed)
    : model_(&model),
      kind_(kind),
      x_(x),
      x_norm_(x_norm),
      d_prop_(rho * x.y_min),
      rng_(seed),
      runner_(model),
      disc_(model.config.n_bins, 0.0, 1.0) {}

void BaselineEnvironment::advance_to(std::size_t window) {
  while (!window_ || *window_ < window) {
    const bool first = !window_;
    window_ = first ? 0 : *window_ + 1;
    if (!first) {
      prev_ = std::move(cur_);
      cur_.clear();
    }
    out_ = runner_.step(baseline_window_input(x_norm_, x_, prev_, model_->config.window_len));
    if (kind_ == BaselineKind::LstmWin) {
      win_value_ = disc_.bin_center(select_bin(out_.y_probs, BinMode::ArgMax, rng_));
    }
  }
}

double BaselineEnvironment::draw_delay() {
  const double v = kind_ == BaselineKind::LstmWin
                       ? win_value_
                       : disc_.bin_to_value(select_bin(out_.y_probs, BinMode::Sample, rng_), rng_);
  return std::max(v * x_.y_max, 1e-6);
}

Outcome BaselineEnvironment::transmit(std::uint64_t, double send_time, double spacing, std::uint32_t size) {
  advance_to(window_index(send_time, model_->config.window_len));
  PacketRecord rec;
  rec.send_time = send_time;
  rec.size = size;
  rec.spacing = spacing;
  Outcome out;
  if (uniform(rng_, 0.0, 1.0) < out_.drop_prob) {
    out = Outcome::drop();
  } else {
    double y = draw_delay();
    if (kind_ == BaselineKind::LstmPktFifo) {
      for (int tries = 0; send_time + y <= last_arrival_ && tries < 20; ++tries) y = draw_delay();
      if (send_time + y <= last_arrival_) y = std::nextafter(last_arrival_ - send_time, 1e300) + 1e-9;
    }
    last_arrival_ = std::max(last_arrival_, send_time + y);
    out = Outcome::delivered(y);
    rec.delay = Delay::of(y);
  }
  cur_.push_back(rec);
  return out;
}

LoadedModel load_model(const Checkpoint& ckpt) {
  if (ckpt.sources.empty()) throw std::invalid_argument("checkpoint has no static-feature sources");
  LoadedModel m;
  m.kind = ckpt.kind;
  m.ranges = ckpt.ranges;
  m.sources = ckpt.sources;
  if (ckpt.kind == "rbu") {
    RbuModel r = rbu_from_checkpoint(ckpt);
    m.rho = r.config.rho;
    m.model = std::move(r);
  } else {
    m.model = baseline_from_checkpoint(ckpt);
  }
  return m;
}

Trace simulate(const LoadedModel& m, const SimRun& run) {
  if (!(run.duration > 0.0)) throw std::invalid_argument("duration must be > 0");
  if (m.sources.empty()) throw std::invalid_argument("no static-feature sources");
  Rng pick = make_rng(run.seed, "sim.x");
  const std::size_t src = std::uniform_int_distribution<std::size_t>(0, m.sources.size() - 1)(pick);
  const StaticFeatures x = m.sources[src];
  const XNorm xn = normalize_static(x, m.ranges);
  auto sender = make_sender(run.sender, run.sender_params, derive_seed(run.seed, "sim.sender"));
  DriveOptions opt;
  opt.duration = run.duration;
  opt.window_len = run.window_len;
  opt.protocol_tag = to_string(run.sender);
  opt.config_tag = "model:" + m.kind;
  opt.seed = run.seed;
  const std::uint64_t env_seed = derive_seed(run.seed, "sim.env");
  if (const auto* r = std::get_if<RbuModel>(&m.model)) {
    RbuEnvironment env(*r, x, xn, run.duration, run.rbu, env_seed);
    return drive(*sender, env, opt);
  }
  const auto& b = std::get<BaselineModel>(m.model);
  BaselineEnvironment env(b, baseline_kind_from_string(m.kind), x, xn, m.rho, env_seed);
  return drive(*sender, env, opt);
}

Dataset simulate_batch(const LoadedModel& m, const SimRun& tmpl, int n_runs, std::uint64_t seed, int jobs) {
  if (n_runs < 0) throw std::invalid_argument("n_runs must be >= 0");
  std::vector<Trace> traces(static_cast<std::size_t>(n_runs));
  parallel_for(traces.size(), jobs, [&](std::size_t i) {
    SimRun run = tmpl;
    run.seed = derive_seed(seed, "sim", i);
    traces[i] = simulate(m, run);
  });
  if (traces.empty()) {
    Dataset d;
    d.split = SplitTag::Test;
    return d;
  }
  return make_dataset(std::move(traces), SplitTag::Test);
}

double max_rate_ratio(const Trace& trace, double d_trans, std::uint32_t mtu, double window_len) {
  if (!(d_trans > 0.0)) throw std::invalid_argument("d_trans must be > 0");
  std::vector<std::pair<double, std::uint32_t>> arrivals;
  for (const auto& p : trace.packets) {
    if (p.delay.delivered()) arrivals.emplace_back(p.send_time + p.delay.seconds(), p.size);
  }
  std::sort(arrivals.begin(), arrivals.end());
  const double capacity = mtu * 8.0 / d_trans;
  double worst = 0.0;
  std::size_t i = 0;
  while (i < arrivals.size()) {
    const std::size_t w = window_index(arrivals[i].first, window_len);
    double bits = 0.0;
    std::size_t j = i + 1;
    for (; j < arrivals.size() && window_index(arrivals[j].first, window_len) == w; ++j) {
      bits += 8.0 * arrivals[j].second;
    }
    worst = std::max(worst, bits / window_len / capacity);
    i = j;
  }
  return worst;
}

}  // namespace ndnet
