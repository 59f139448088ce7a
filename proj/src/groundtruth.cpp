#include "ndnet/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ndnet/parallel.hpp"

namespace ndnet {

std::int64_t to_ns(double seconds) { return std::llround(seconds * 1e9); }

std::int64_t service_time_ns(std::uint32_t size, double bandwidth) {
  return std::llround(static_cast<double>(size) * 8.0 / bandwidth * 1e9);
}

CrossTrafficSchedule sample_cross_schedule(double bandwidth, double duration,
                                           const CrossTrafficParams& params, Rng& rng) {
  if (!(params.mean_on > 0.0 && params.mean_off > 0.0)) {
    throw std::invalid_argument("cross-traffic on/off means must be > 0");
  }
  CrossTrafficSchedule s;
  std::exponential_distribution<double> on(1.0 / params.mean_on);
  std::exponential_distribution<double> off(1.0 / params.mean_off);
  // Start in a random phase so patterns do not all begin idle.
  double t = std::bernoulli_distribution(0.5)(rng) ? 0.0 : off(rng);
  while (t < duration) {
    const double end = std::min(duration, t + on(rng));
    const double rate = uniform(rng, 0.0, params.max_rate_fraction * bandwidth);
    s.segments.push_back({t, end, rate});
    t = end + off(rng);
  }
  return s;
}

void validate_path_config(const PathConfig& c) {
  if (!(c.bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
  if (c.buffer_capacity < 1) throw std::invalid_argument("buffer_capacity must be >= 1");
  if (!(c.prop_delay >= 0.0)) throw std::invalid_argument("prop_delay must be >= 0");
  if (c.mtu == 0) throw std::invalid_argument("mtu must be > 0");
  double prev_end = 0.0;
  for (const auto& seg : c.cross.segments) {
    if (seg.rate < 0.0 || seg.end < seg.start || seg.start < prev_end) {
      throw std::invalid_argument("cross-traffic segments must be ordered, non-overlapping, rate >= 0");
    }
    prev_end = seg.end;
  }
}

PathConfig sample_path_config(int scenario, Rng& rng, const ScenarioOptions& options) {
  struct Row {
    double bw_lo, bw_hi, prop_lo, prop_hi;
    int buf_lo, buf_hi;
  };
  static constexpr Row rows[] = {
      {40e6, 50e6, 0.020, 0.050, 20, 50},
      {20e6, 30e6, 0.090, 0.120, 100, 150},
      {1e6, 10e6, 0.150, 0.200, 300, 500},
  };
  if (scenario < 1 || scenario > 3) {
    throw std::invalid_argument("scenario must be 1, 2 or 3 (got " + std::to_string(scenario) + ")");
  }
  const Row& r = rows[scenario - 1];
  PathConfig c;
  c.bandwidth = uniform(rng, r.bw_lo, r.bw_hi) * options.bandwidth_scale;
  c.prop_delay = uniform(rng, r.prop_lo, r.prop_hi);
  c.buffer_capacity = std::uniform_int_distribution<int>(r.buf_lo, r.buf_hi)(rng);
  if (options.bandwidth_override.max > 0.0) {
    c.bandwidth = uniform(rng, options.bandwidth_override.min, options.bandwidth_override.max);
  }
  if (options.buffer_scale != 1.0) {
    c.buffer_capacity = std::max(1, static_cast<int>(std::lround(c.buffer_capacity * options.buffer_scale)));
  }
  return c;
}

double default_drop_timeout(const PathConfig& c) {
  return 4.0 * c.prop_delay + c.buffer_capacity * (c.mtu * 8.0 / c.bandwidth);
}

GroundTruthPath::GroundTruthPath(const PathConfig& config)
    : config_(config), drop_timeout_(default_drop_timeout(config)) {
  validate_path_config(config);
}

bool GroundTruthPath::enqueue(std::int64_t t, std::uint32_t size, std::int64_t* dep) {
  while (head_ < queue_.size() && queue_[head_].dep <= t) ++head_;
  if (head_ > 4096 && head_ * 2 > queue_.size()) {
    queue_.erase(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
  const std::size_t present = queue_.size() - head_;
  const std::size_t waiting = present - (present > 0 && queue_[head_].start <= t ? 1 : 0);
  if (waiting >= static_cast<std::size_t>(config_.buffer_capacity)) return false;
  const std::int64_t start = std::max(t, last_dep_);
  last_dep_ = start + service_time_ns(size, config_.bandwidth);
  queue_.push_back({start, last_dep_});
  *dep = last_dep_;
  return true;
}

std::int64_t GroundTruthPath::next_cross_arrival() const {
  const auto& segs = config_.cross.segments;
  if (seg_ >= segs.size()) return INT64_MAX;
  const auto& s = segs[seg_];
  return to_ns(s.start) + static_cast<std::int64_t>(seg_k_) * service_time_ns(config_.mtu, s.rate);
}

void GroundTruthPath::advance_cross() {
  const auto& segs = config_.cross.segments;
  ++seg_k_;
  while (seg_ < segs.size()) {
    const auto& s = segs[seg_];
    if (s.rate > 0.0 && next_cross_arrival() < to_ns(s.end)) return;
    ++seg_;
    seg_k_ = 0;
  }
}

void GroundTruthPath::inject_cross_until(std::int64_t t) {
  const auto& segs = config_.cross.segments;
  // Position the cursor on the first arrival of a usable segment.
  while (seg_ < segs.size() && seg_k_ == 0 &&
         !(segs[seg_].rate > 0.0 && to_ns(segs[seg_].start) < to_ns(segs[seg_].end))) {
    ++seg_;
  }
  for (std::int64_t a = next_cross_arrival(); a <= t; a = next_cross_arrival()) {
    std::int64_t dep = 0;
    ++cross_sent_;
    if (!enqueue(a, config_.mtu, &dep)) ++cross_dropped_;
    advance_cross();
  }
}

Outcome GroundTruthPath::transmit(std::uint64_t, double send_time, double, std::uint32_t size) {
  const std::int64_t t = to_ns(send_time);
  if (t < last_arrival_) throw std::runtime_error("sender emitted a non-monotone send time");
  last_arrival_ = t;
  inject_cross_until(t);
  std::int64_t dep = 0;
  if (!enqueue(t, size, &dep)) return Outcome::drop();
  return Outcome::delivered(static_cast<double>(dep - t) * 1e-9 + config_.prop_delay);
}

Trace run_ground_truth(const PathConfig& config, Sender& sender, double duration,
                       const std::string& protocol_tag, double window_len) {
  GroundTruthPath path(config);
  DriveOptions opt;
  opt.duration = duration;
  opt.window_len = window_len;
  opt.protocol_tag = protocol_tag;
  opt.config_tag = config.tag;
  opt.seed = config.seed;
  return drive(sender, path, opt);
}

Dataset generate_dataset(const GenerateOptions& o, SplitTag split) {
  if (o.scenarios.empty() || o.configs_per_scenario < 1 || o.cross_patterns < 1) {
    throw std::invalid_argument("scenario, config and pattern counts must be >= 1");
  }
  if (!(o.duration > 0.0)) throw std::invalid_argument("duration must be > 0");
  const auto n_cfg = static_cast<std::size_t>(o.configs_per_scenario);
  const auto n_pat = static_cast<std::size_t>(o.cross_patterns);

  std::vector<PathConfig> configs;
  for (std::size_t si = 0; si < o.scenarios.size(); ++si) {
    for (std::size_t c = 0; c < n_cfg; ++c) {
      Rng rng = make_rng(o.seed, "config", si * n_cfg + c);
      PathConfig cfg = sample_path_config(o.scenarios[si], rng, o.scenario);
      cfg.tag = "s" + std::to_string(o.scenarios[si]) + "-c" + std::to_string(c);
      configs.push_back(cfg);
    }
  }

  std::vector<Trace> traces(configs.size() * n_pat);
  parallel_for(traces.size(), o.jobs, [&](std::size_t i) {
    PathConfig cfg = configs[i / n_pat];
    Rng rng = make_rng(o.seed, "cross", i);
    cfg.cross = sample_cross_schedule(cfg.bandwidth, o.duration, o.cross, rng);
    cfg.seed = derive_seed(o.seed, "trace", i);
    auto sender = make_sender(o.sender, o.sender_params, derive_seed(o.seed, "sender", i));
    traces[i] = run_ground_truth(cfg, *sender, o.duration, to_string(o.sender), o.window_len);
  });
  return make_dataset(std::move(traces), split);
}

}  // namespace ndnet
