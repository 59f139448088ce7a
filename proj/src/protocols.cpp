#include "ndnet/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace ndnet {

std::string to_string(SenderKind kind) {
  switch (kind) {
    case SenderKind::RenoAimd: return "reno";
    case SenderKind::CubicLike: return "cubic";
    case SenderKind::VegasLike: return "vegas";
    case SenderKind::LedbatLike: return "ledbat";
    case SenderKind::ConstantRate: return "constant";
  }
  return "unknown";
}

SenderKind sender_kind_from_string(const std::string& s) {
  if (s == "reno" || s == "newreno" || s == "RenoAimd") return SenderKind::RenoAimd;
  if (s == "cubic" || s == "CubicLike") return SenderKind::CubicLike;
  if (s == "vegas" || s == "VegasLike") return SenderKind::VegasLike;
  if (s == "ledbat" || s == "LedbatLike") return SenderKind::LedbatLike;
  if (s == "constant" || s == "ConstantRate") return SenderKind::ConstantRate;
  throw std::invalid_argument("unknown protocol '" + s + "'");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Bookkeeping shared by the window-based senders: outstanding packets, RTT
/// estimation and loss detection. A loss is declared on an explicit drop
/// notice, when `dupthresh` later-sent packets have been delivered, or when
/// the packet is older than the retransmission timeout. Losses of packets
/// sent before the last reduction count as the same congestion event.
class WindowSender : public Sender {
 public:
  explicit WindowSender(const SenderParams& p) : p_(p), cwnd_(p.init_cwnd) {}

  std::optional<SendRequest> next_send(double now) override {
    const double allowed = std::max(1.0, std::floor(cwnd_));
    if (static_cast<double>(outstanding_.size()) < allowed) return SendRequest{now, p_.mtu};
    return std::nullopt;
  }

  void on_sent(std::uint64_t id, double send_time, std::uint32_t) override {
    outstanding_[id] = Outstanding{send_time, 0};
    next_unsent_ = id + 1;
  }

  void on_feedback(std::uint64_t id, const Outcome& outcome, double now) override {
    auto it = outstanding_.find(id);
    if (it != outstanding_.end()) {
      const double sent_at = it->second.send_time;
      outstanding_.erase(it);
      if (outcome.dropped) {
        lose(id, now);
      } else {
        update_rtt(now - sent_at);
        on_ack(id, now - sent_at, outcome.delay, now);
        for (auto j = outstanding_.begin(); j != outstanding_.end() && j->first < id;) {
          if (++j->second.later_delivered >= p_.dupthresh) {
            const std::uint64_t lost = j->first;
            j = outstanding_.erase(j);
            lose(lost, now);
          } else {
            ++j;
          }
        }
      }
    }
    const double timeout = rto();
    while (!outstanding_.empty() && outstanding_.begin()->second.send_time + timeout < now) {
      const std::uint64_t lost = outstanding_.begin()->first;
      outstanding_.erase(outstanding_.begin());
      lose(lost, now);
    }
  }

  double congestion_window() const override { return cwnd_; }

 protected:
  virtual void on_ack(std::uint64_t id, double rtt, double one_way_delay, double now) = 0;
  virtual void on_congestion(double now) = 0;

  double rto() const {
    if (!have_rtt_) return std::max(1.0, p_.min_rto);
    return std::max(p_.min_rto, srtt_ + 4.0 * rttvar_);
  }

  SenderParams p_;
  double cwnd_;
  double ssthresh_ = kInf;
  double srtt_ = 0.0;
  double rttvar_ = 0.0;
  bool have_rtt_ = false;
  std::uint64_t next_unsent_ = 0;

 private:
  struct Outstanding {
    double send_time;
    int later_delivered;
  };

  void update_rtt(double sample) {
    if (!have_rtt_) {
      srtt_ = sample;
      rttvar_ = sample / 2.0;
      have_rtt_ = true;
      return;
    }
    rttvar_ = 0.75 * rttvar_ + 0.25 * std::abs(srtt_ - sample);
    srtt_ = 0.875 * srtt_ + 0.125 * sample;
  }

  void lose(std::uint64_t id, double now) {
    if (id < recovery_point_) return;
    on_congestion(now);
    recovery_point_ = next_unsent_;
  }

  std::map<std::uint64_t, Outstanding> outstanding_;
  std::uint64_t recovery_point_ = 0;
};

class RenoSender final : public WindowSender {
 public:
  using WindowSender::WindowSender;

 protected:
  void on_ack(std::uint64_t, double, double, double) override {
    if (cwnd_ < ssthresh_) {
      cwnd_ += 1.0;
      return;
    }
    // Byte counting: one full window of acks adds one packet.
    if (++acked_in_ca_ >= std::floor(cwnd_)) {
      cwnd_ += 1.0;
      acked_in_ca_ = 0;
    }
  }

  void on_congestion(double) override {
    cwnd_ = std::max(cwnd_ / 2.0, p_.min_cwnd);
    ssthresh_ = cwnd_;
    acked_in_ca_ = 0;
  }

 private:
  double acked_in_ca_ = 0;
};

class CubicSender final : public WindowSender {
 public:
  using WindowSender::WindowSender;

 protected:
  void on_ack(std::uint64_t, double, double, double now) override {
    if (cwnd_ < ssthresh_) {
      cwnd_ += 1.0;
      return;
    }
    const double t = now - epoch_start_;
    const double target = p_.cubic_c * std::pow(t - k_, 3.0) + w_max_;
    if (target > cwnd_) {
      cwnd_ += (target - cwnd_) / cwnd_;
    } else {
      cwnd_ += 0.01 / cwnd_;
    }
  }

  void on_congestion(double now) override {
    w_max_ = cwnd_;
    cwnd_ = std::max(cwnd_ * p_.cubic_beta, p_.min_cwnd);
    ssthresh_ = cwnd_;
    epoch_start_ = now;
    k_ = std::cbrt(w_max_ * (1.0 - p_.cubic_beta) / p_.cubic_c);
  }

 private:
  double w_max_ = 0.0;
  double k_ = 0.0;
  double epoch_start_ = 0.0;
};

/// Compares expected and actual throughput once per round trip and keeps
/// between alpha and beta packets queued.
class VegasSender final : public WindowSender {
 public:
  using WindowSender::WindowSender;

 protected:
  void on_ack(std::uint64_t id, double rtt, double, double) override {
    base_rtt_ = std::min(base_rtt_, rtt);
    round_min_rtt_ = std::min(round_min_rtt_, rtt);
    if (slow_start_) cwnd_ += 1.0;
    if (id < round_end_) return;
    const double diff = cwnd_ * (1.0 - base_rtt_ / round_min_rtt_);
    if (slow_start_) {
      if (diff > p_.vegas_gamma) {
        slow_start_ = false;
        cwnd_ = std::max(2.0, cwnd_ * base_rtt_ / round_min_rtt_ + p_.vegas_alpha);
      }
    } else if (diff < p_.vegas_alpha) {
      cwnd_ += 1.0;
    } else if (diff > p_.vegas_beta) {
      cwnd_ = std::max(2.0, cwnd_ - 1.0);
    }
    round_end_ = next_unsent_;
    round_min_rtt_ = kInf;
  }

  void on_congestion(double) override {
    slow_start_ = false;
    cwnd_ = std::max(cwnd_ / 2.0, std::max(2.0, p_.min_cwnd));
  }

 private:
  double base_rtt_ = kInf;
  double round_min_rtt_ = kInf;
  std::uint64_t round_end_ = 0;
  bool slow_start_ = true;
};

/// Holds queueing delay near a target using one-way delay samples.
class LedbatSender final : public WindowSender {
 public:
  using WindowSender::WindowSender;

 protected:
  void on_ack(std::uint64_t, double, double one_way_delay, double) override {
    base_delay_ = std::min(base_delay_, one_way_delay);
    const double queuing = one_way_delay - base_delay_;
    const double off_target = (p_.ledbat_target - queuing) / p_.ledbat_target;
    cwnd_ = std::max(p_.min_cwnd, cwnd_ + p_.ledbat_gain * off_target / cwnd_);
  }

  void on_congestion(double) override { cwnd_ = std::max(cwnd_ / 2.0, p_.min_cwnd); }

 private:
  double base_delay_ = kInf;
};

class ConstantRateSender final : public Sender {
 public:
  explicit ConstantRateSender(const SenderParams& p) : p_(p) {
    if (!(p.constant_rate_pps > 0.0)) throw std::invalid_argument("constant_rate_pps must be > 0");
  }

  std::optional<SendRequest> next_send(double now) override {
    return SendRequest{std::max(now, static_cast<double>(sent_) / p_.constant_rate_pps), p_.mtu};
  }
  void on_sent(std::uint64_t, double, std::uint32_t) override { ++sent_; }
  void on_feedback(std::uint64_t, const Outcome&, double) override {}

 private:
  SenderParams p_;
  std::uint64_t sent_ = 0;
};

class ReplaySender final : public Sender {
 public:
  explicit ReplaySender(std::vector<SendRequest> schedule) : schedule_(std::move(schedule)) {}

  std::optional<SendRequest> next_send(double now) override {
    if (next_ >= schedule_.size()) return std::nullopt;
    SendRequest r = schedule_[next_];
    r.time = std::max(r.time, now);
    return r;
  }
  void on_sent(std::uint64_t, double, std::uint32_t) override { ++next_; }
  void on_feedback(std::uint64_t, const Outcome&, double) override {}

 private:
  std::vector<SendRequest> schedule_;
  std::size_t next_ = 0;
};

void check_params(const SenderParams& p) {
  if (p.mtu == 0) throw std::invalid_argument("mtu must be > 0");
  if (!(p.init_cwnd > 0.0 && p.min_cwnd > 0.0 && p.min_rto > 0.0 && p.dupthresh > 0)) {
    throw std::invalid_argument("sender parameters must be positive");
  }
  if (!(p.cubic_c > 0.0 && p.cubic_beta > 0.0 && p.cubic_beta < 1.0)) {
    throw std::invalid_argument("cubic parameters out of range");
  }
  if (!(p.vegas_alpha > 0.0 && p.vegas_beta >= p.vegas_alpha && p.vegas_gamma > 0.0)) {
    throw std::invalid_argument("vegas parameters out of range");
  }
  if (!(p.ledbat_target > 0.0 && p.ledbat_gain > 0.0)) {
    throw std::invalid_argument("ledbat parameters out of range");
  }
}

}  // namespace

std::unique_ptr<Sender> make_sender(SenderKind kind, const SenderParams& params, std::uint64_t) {
  check_params(params);
  switch (kind) {
    case SenderKind::RenoAimd: return std::make_unique<RenoSender>(params);
    case SenderKind::CubicLike: return std::make_unique<CubicSender>(params);
    case SenderKind::VegasLike: return std::make_unique<VegasSender>(params);
    case SenderKind::LedbatLike: return std::make_unique<LedbatSender>(params);
    case SenderKind::ConstantRate: return std::make_unique<ConstantRateSender>(params);
  }
  throw std::invalid_argument("unknown sender kind");
}

std::unique_ptr<Sender> make_replay_sender(std::vector<SendRequest> schedule) {
  return std::make_unique<ReplaySender>(std::move(schedule));
}

Trace drive(Sender& sender, Environment& env, const DriveOptions& options) {
  if (!(options.duration > 0.0)) throw std::invalid_argument("duration must be > 0");
  struct Pending {
    double time;
    std::uint64_t id;
    Outcome outcome;
  };
  auto later = [](const Pending& a, const Pending& b) {
    return std::tie(a.time, a.id) > std::tie(b.time, b.id);
  };
  std::priority_queue<Pending, std::vector<Pending>, decltype(later)> pending(later);

  Trace trace;
  trace.protocol_tag = options.protocol_tag;
  trace.config_tag = options.config_tag;
  trace.seed = options.seed;
  double now = 0.0;
  std::uint64_t next_id = 0;

  while (true) {
    const auto req = sender.next_send(now);
    const bool can_send = req && req->time < options.duration;
    if (can_send && req->time < now) {
      throw std::runtime_error("sender emitted a non-monotone send time");
    }
    if (!pending.empty() && (!can_send || pending.top().time <= req->time)) {
      if (!can_send && pending.top().time >= options.duration) break;
      const Pending ev = pending.top();
      pending.pop();
      now = std::max(now, ev.time);
      sender.on_feedback(ev.id, ev.outcome, now);
      continue;
    }
    if (!can_send) break;
    if (trace.packets.size() >= options.max_packets) {
      throw std::runtime_error("packet limit exceeded");
    }
    if (req->size == 0) throw std::runtime_error("sender emitted an empty packet");

    const double t = req->time;
    const double spacing = trace.packets.empty() ? 0.0 : t - trace.packets.back().send_time;
    const Outcome out = env.transmit(next_id, t, spacing, req->size);
    sender.on_sent(next_id, t, req->size);

    PacketRecord rec;
    rec.send_time = t;
    rec.size = req->size;
    rec.spacing = spacing;
    rec.delay = out.dropped ? Delay::drop() : Delay::of(out.delay);
    trace.packets.push_back(rec);

    const double fb = out.dropped ? t + env.drop_timeout() : t + out.delay + env.feedback_latency();
    pending.push(Pending{fb, next_id, out});
    now = t;
    ++next_id;
  }
  if (trace.packets.empty()) throw std::runtime_error("sender emitted no packets");
  finalize_trace(trace, options.window_len);
  return trace;
}

}  // namespace ndnet
