#include <doctest.h>

#include <map>

#include "ndnet/groundtruth.hpp"
#include "ndnet/protocols.hpp"

using namespace ndnet;

namespace {

/// Fixed-delay path that drops a chosen set of packet ids.
class FixedPath final : public Environment {
 public:
  FixedPath(double delay, std::vector<std::uint64_t> drops = {}) : delay_(delay), drops_(std::move(drops)) {}
  Outcome transmit(std::uint64_t id, double, double, std::uint32_t) override {
    for (auto d : drops_) {
      if (d == id) return Outcome::drop();
    }
    return Outcome::delivered(delay_);
  }
  double feedback_latency() const override { return delay_; }
  double drop_timeout() const override { return 4 * delay_; }

 private:
  double delay_;
  std::vector<std::uint64_t> drops_;
};

/// Records every sender callback to check feedback ordering.
class Recorder final : public Sender {
 public:
  explicit Recorder(std::unique_ptr<Sender> inner) : inner_(std::move(inner)) {}
  std::optional<SendRequest> next_send(double now) override { return inner_->next_send(now); }
  void on_sent(std::uint64_t id, double t, std::uint32_t s) override {
    sent[id] = t;
    last_send = t;
    inner_->on_sent(id, t, s);
  }
  void on_feedback(std::uint64_t id, const Outcome& o, double now) override {
    CHECK(now >= last_feedback);
    last_feedback = now;
    feedback.emplace_back(id, now);
    inner_->on_feedback(id, o, now);
  }
  double congestion_window() const override { return inner_->congestion_window(); }

  std::map<std::uint64_t, double> sent;
  std::vector<std::pair<std::uint64_t, double>> feedback;
  double last_send = 0.0, last_feedback = 0.0;

 private:
  std::unique_ptr<Sender> inner_;
};

}  // namespace

TEST_CASE("protocol names") {
  CHECK(sender_kind_from_string("cubic") == SenderKind::CubicLike);
  CHECK(sender_kind_from_string("newreno") == SenderKind::RenoAimd);
  CHECK(to_string(SenderKind::VegasLike) == "vegas");
  CHECK_THROWS_AS(sender_kind_from_string("bbr"), std::invalid_argument);
}

TEST_CASE("invalid sender parameters") {
  SenderParams p;
  p.cubic_beta = 1.5;
  CHECK_THROWS_AS(make_sender(SenderKind::CubicLike, p, 0), std::invalid_argument);
  p = {};
  p.constant_rate_pps = 0;
  CHECK_THROWS_AS(make_sender(SenderKind::ConstantRate, p, 0), std::invalid_argument);
}

TEST_CASE("constant rate sender spacing") {
  SenderParams p;
  p.constant_rate_pps = 50;
  auto s = make_sender(SenderKind::ConstantRate, p, 0);
  FixedPath env(0.02);
  DriveOptions o;
  o.duration = 1.0;
  const Trace t = drive(*s, env, o);
  CHECK(t.packets.size() == 50);
  for (std::size_t i = 1; i < t.packets.size(); ++i) CHECK(t.packets[i].spacing == doctest::Approx(0.02));
}

TEST_CASE("window senders grow without loss and back off on loss") {
  for (auto kind : {SenderKind::RenoAimd, SenderKind::CubicLike, SenderKind::LedbatLike}) {
    CAPTURE(to_string(kind));
    auto s = make_sender(kind, {}, 0);
    FixedPath env(0.05);
    Recorder rec(std::move(s));
    DriveOptions o;
    o.duration = 1.0;
    drive(rec, env, o);
    if (kind != SenderKind::LedbatLike) CHECK(rec.congestion_window() > 10.0);

    auto s2 = make_sender(kind, {}, 0);
    FixedPath lossy(0.05, {30});
    Recorder rec2(std::move(s2));
    drive(rec2, lossy, o);
    CHECK(rec2.congestion_window() < rec.congestion_window());
  }
}

TEST_CASE("feedback arrives in time order and never before it is due") {
  auto s = make_sender(SenderKind::CubicLike, {}, 0);
  FixedPath env(0.03, {5, 6, 40});
  Recorder rec(std::move(s));
  DriveOptions o;
  o.duration = 2.0;
  const Trace t = drive(rec, env, o);
  for (const auto& [id, at] : rec.feedback) {
    const auto& p = t.packets[id];
    const double due = p.delay.dropped() ? p.send_time + 0.12 : p.send_time + 0.06;
    CHECK(at >= due - 1e-12);
  }
  CHECK(t.packets[5].delay.dropped());
  CHECK(t.packets.back().send_time < 2.0);
}

TEST_CASE("vegas keeps a small standing queue on a fifo path") {
  PathConfig c;
  c.bandwidth = 5e6;
  c.prop_delay = 0.02;
  c.buffer_capacity = 200;
  auto s = make_sender(SenderKind::VegasLike, {}, 0);
  const Trace t = run_ground_truth(c, *s, 10.0, "vegas");
  const double d_trans = 1500 * 8 / 5e6;
  double tail = 0.0;
  int n = 0;
  for (const auto& p : t.packets) {
    if (p.send_time > 5.0 && p.delay.delivered()) {
      tail += p.delay.seconds();
      ++n;
    }
  }
  tail /= n;
  // alpha..beta packets queued: a handful of transmission times above base.
  CHECK(tail - c.prop_delay < 12 * d_trans);
  CHECK(t.delivered_count() == t.packets.size());
}

TEST_CASE("replay sender follows its schedule") {
  auto s = make_replay_sender({{0.0, 1500}, {0.1, 500}, {0.1, 1500}, {0.3, 1500}});
  FixedPath env(0.01);
  DriveOptions o;
  o.duration = 1.0;
  const Trace t = drive(*s, env, o);
  REQUIRE(t.packets.size() == 4);
  CHECK(t.packets[1].size == 500);
  CHECK(t.packets[2].spacing == 0.0);
}
