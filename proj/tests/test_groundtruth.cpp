#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ndnet/groundtruth.hpp"
#include "oracles.hpp"

using namespace ndnet;

TEST_CASE("fifo queue matches a tick-stepped oracle") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const long k = 2 + static_cast<long>(rng() % 5);  // service time in us
    const int cap = 1 + static_cast<int>(rng() % 6);
    PathConfig c;
    c.bandwidth = 1.2e10 / static_cast<double>(k);
    c.prop_delay = 0.001;
    c.buffer_capacity = cap;

    std::vector<oracle::CrossSeg> segs;
    long t = static_cast<long>(rng() % 20);
    while (t < 2000) {
      const long len = 20 + static_cast<long>(rng() % 300);
      const long gap = 1 + static_cast<long>(rng() % (3 * k));
      segs.push_back({t, t + len, gap});
      c.cross.segments.push_back({t * 1e-6, (t + len) * 1e-6, 1.2e10 / static_cast<double>(gap)});
      t += len + static_cast<long>(rng() % 200);
    }
    std::vector<long> send;
    long s = 0;
    for (int i = 0; i < 400; ++i) {
      s += static_cast<long>(rng() % (2 * k + 1));
      send.push_back(s);
    }

    const auto expected = oracle::fifo_ticks(send, k, cap, segs);
    GroundTruthPath path(c);
    int drops = 0;
    for (std::size_t i = 0; i < send.size(); ++i) {
      const Outcome o = path.transmit(i, send[i] * 1e-6, 0.0, kDefaultMtu);
      REQUIRE(o.dropped == !expected[i].has_value());
      if (!o.dropped) {
        CHECK(std::llround((o.delay - c.prop_delay) * 1e6) == *expected[i] - send[i]);
      } else {
        ++drops;
      }
    }
    CHECK(drops > 0);
  }
}

TEST_CASE("service and timeout arithmetic") {
  CHECK(service_time_ns(1500, 12e6) == 1'000'000);
  CHECK(to_ns(0.1234567891) == 123456789);
  PathConfig c;
  c.bandwidth = 12e6;
  c.prop_delay = 0.05;
  c.buffer_capacity = 10;
  CHECK(default_drop_timeout(c) == doctest::Approx(0.2 + 0.01));
  GroundTruthPath p(c);
  CHECK(p.feedback_latency() == 0.05);
  p.transmit(0, 0.5, 0, 1500);
  CHECK_THROWS_AS(p.transmit(1, 0.4, 0, 1500), std::runtime_error);
}

TEST_CASE("invalid path configuration") {
  PathConfig c;
  c.bandwidth = 0;
  CHECK_THROWS_AS(GroundTruthPath{c}, std::invalid_argument);
  c = {};
  c.buffer_capacity = 0;
  CHECK_THROWS_AS(GroundTruthPath{c}, std::invalid_argument);
  c = {};
  c.cross.segments = {{0.0, 1.0, 1e6}, {0.5, 2.0, 1e6}};
  CHECK_THROWS_AS(GroundTruthPath{c}, std::invalid_argument);
  Rng rng(0);
  CHECK_THROWS_AS(sample_path_config(4, rng), std::invalid_argument);
}

TEST_CASE("scenario sampling stays within its row") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const PathConfig c = sample_path_config(2, rng);
    CHECK(c.bandwidth >= 20e6);
    CHECK(c.bandwidth <= 30e6);
    CHECK(c.prop_delay >= 0.09);
    CHECK(c.prop_delay <= 0.12);
    CHECK(c.buffer_capacity >= 100);
    CHECK(c.buffer_capacity <= 150);
  }
  ScenarioOptions o;
  o.bandwidth_override = {0.5e6, 2e6};
  o.buffer_scale = 0.5;
  const PathConfig c = sample_path_config(3, rng, o);
  CHECK(c.bandwidth <= 2e6);
  CHECK(c.buffer_capacity <= 250);
}

TEST_CASE("cross schedule segments are ordered and bounded") {
  Rng rng(9);
  const auto s = sample_cross_schedule(10e6, 60.0, {}, rng);
  REQUIRE(!s.segments.empty());
  double prev = 0.0;
  for (const auto& seg : s.segments) {
    CHECK(seg.start >= prev);
    CHECK(seg.end <= 60.0);
    CHECK(seg.rate <= 8e6);
    prev = seg.end;
  }
}

TEST_CASE("delays are bounded by a full buffer") {
  PathConfig c;
  c.bandwidth = 2e6;
  c.prop_delay = 0.03;
  c.buffer_capacity = 20;
  Rng rng(1);
  c.cross = sample_cross_schedule(c.bandwidth, 10.0, {1.0, 1.0, 0.9}, rng);
  auto s = make_sender(SenderKind::CubicLike, {}, 0);
  const Trace t = run_ground_truth(c, *s, 10.0, "cubic");
  const double svc = 1500 * 8 / c.bandwidth;
  std::size_t drops = 0;
  for (const auto& p : t.packets) {
    if (p.delay.dropped()) {
      ++drops;
      continue;
    }
    CHECK(p.delay.seconds() >= c.prop_delay + svc - 1e-9);
    CHECK(p.delay.seconds() <= c.prop_delay + (c.buffer_capacity + 1) * svc + 1e-9);
  }
  CHECK(drops > 0);
  CHECK(t.static_features.y_min >= c.prop_delay);
}

TEST_CASE("generate_dataset grid and worker independence") {
  GenerateOptions o;
  o.scenarios = {1, 3};
  o.configs_per_scenario = 2;
  o.cross_patterns = 3;
  o.duration = 2.0;
  o.seed = 5;
  o.scenario.bandwidth_scale = 0.1;
  const Dataset a = generate_dataset(o);
  CHECK(a.traces.size() == 12);
  CHECK(a.traces[0].config_tag == "s1-c0");
  CHECK(a.traces[11].config_tag == "s3-c1");
  CHECK(a.traces[0].protocol_tag == "cubic");
  o.jobs = 3;
  CHECK(generate_dataset(o) == a);
  o.seed = 6;
  CHECK_FALSE(generate_dataset(o) == a);
}
