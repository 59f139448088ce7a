#include <doctest.h>

#include "helpers.hpp"
#include "ndnet/groundtruth.hpp"
#include "ndnet/metrics.hpp"
#include "ndnet/simulate.hpp"

using namespace ndnet;

namespace {

const Dataset& train_data() {
  static const Dataset d = [] {
    GenerateOptions o;
    o.scenarios = {3};
    o.configs_per_scenario = 2;
    o.cross_patterns = 2;
    o.duration = 3.0;
    o.seed = 21;
    o.scenario.bandwidth_override = {1e6, 2e6};
    o.scenario.buffer_scale = 0.2;
    return generate_dataset(o);
  }();
  return d;
}

TrainConfig tiny(bool multipath) {
  TrainConfig c;
  c.model.hidden = 8;
  c.model.multipath = multipath;
  c.epochs = 1;
  c.batch_size = 4;
  return c;
}

const LoadedModel& rbu_model(bool multipath) {
  static const LoadedModel single = load_model(make_rbu_checkpoint(train_rbu(train_data(), tiny(false)).model, train_data()));
  static const LoadedModel multi = load_model(make_rbu_checkpoint(train_rbu(train_data(), tiny(true)).model, train_data()));
  return multipath ? multi : single;
}

LoadedModel baseline_model(BaselineKind kind) {
  BaselineConfig bc;
  bc.hidden = 8;
  static const BaselineModel m = train_baseline(train_data(), tiny(false), bc).model;
  return load_model(make_baseline_checkpoint(m, kind, train_data()));
}

SimRun short_run(SenderKind s = SenderKind::VegasLike) {
  SimRun r;
  r.sender = s;
  r.duration = 3.0;
  return r;
}

}  // namespace

TEST_CASE("simulation is reproducible from its seed") {
  const auto& m = rbu_model(false);
  SimRun r = short_run();
  r.seed = 7;
  const Trace a = simulate(m, r);
  CHECK(simulate(m, r) == a);
  CHECK(a.config_tag == "model:rbu");
  CHECK(a.protocol_tag == "vegas");
  CHECK(a.packets.size() > 10);
  const Dataset b1 = simulate_batch(m, short_run(), 4, 3, 1);
  const Dataset b2 = simulate_batch(m, short_run(), 4, 3, 3);
  CHECK(b1 == b2);
  CHECK_FALSE(b1.traces[0] == b1.traces[1]);
  const Dataset none = simulate_batch(m, short_run(), 0, 3);
  CHECK(none.traces.empty());
  CHECK(none.split == SplitTag::Test);
}

TEST_CASE("single-path model never reorders and respects its link rate") {
  const auto& m = rbu_model(false);
  SimRun r = short_run(SenderKind::CubicLike);
  r.rbu.drop_mode = DropMode::Hard;
  const Dataset d = simulate_batch(m, r, 20, 9);
  const auto& model = std::get<RbuModel>(m.model);
  for (const auto& t : d.traces) CHECK(reorder_fraction(t) == 0.0);
  for (std::size_t i = 0; i < d.traces.size(); ++i) {
    SimRun one = r;
    one.seed = derive_seed(9, "sim", i);
    Rng pick = make_rng(one.seed, "sim.x");
    const std::size_t src = std::uniform_int_distribution<std::size_t>(0, m.sources.size() - 1)(pick);
    const StaticFeatures x = m.sources[src];
    RbuEnvironment env(model, x, normalize_static(x, m.ranges), 3.0, r.rbu, 0);
    CHECK(max_rate_ratio(d.traces[i], env.path().d_trans) <= 1.0 + 1e-9);
  }
}

TEST_CASE("two-path model with a deeper second queue reorders") {
  const auto& m = rbu_model(true);
  SimRun r = short_run(SenderKind::CubicLike);
  r.rbu.q_override = 0.3;
  r.rbu.tau2_scale = 2.0;
  const Dataset d = simulate_batch(m, r, 10, 2);
  double total = 0.0;
  for (const auto& t : d.traces) total += reorder_fraction(t);
  CHECK(total > 0.0);
  r.rbu.q_override = 0.0;
  const Dataset none = simulate_batch(m, r, 5, 2);
  for (const auto& t : none.traces) CHECK(reorder_fraction(t) == 0.0);
}

TEST_CASE("baseline environments") {
  for (auto kind : {BaselineKind::LstmWin, BaselineKind::LstmPkt, BaselineKind::LstmPktFifo}) {
    CAPTURE(to_string(kind));
    const LoadedModel m = baseline_model(kind);
    const Dataset d = simulate_batch(m, short_run(SenderKind::CubicLike), 5, 4);
    REQUIRE(d.traces.size() == 5);
    for (const auto& t : d.traces) {
      CHECK(t.config_tag == "model:" + to_string(kind));
      for (const auto& p : t.packets) {
        if (p.delay.delivered()) CHECK(p.delay.seconds() <= t.static_features.y_max + 1e-12);
      }
      if (kind == BaselineKind::LstmPktFifo) CHECK(reorder_fraction(t) == 0.0);
    }
  }
}

TEST_CASE("rate audit on a fifo link") {
  PathConfig c;
  c.bandwidth = 3e6;
  c.prop_delay = 0.02;
  c.buffer_capacity = 30;
  auto s = make_sender(SenderKind::CubicLike, {}, 0);
  const Trace t = run_ground_truth(c, *s, 5.0);
  const double d_trans = 1500 * 8 / c.bandwidth;
  const double r = max_rate_ratio(t, d_trans);
  CHECK(r <= 1.0 + 1e-9);
  CHECK(r > 0.9);
  CHECK_THROWS_AS(max_rate_ratio(t, 0.0), std::invalid_argument);
}

TEST_CASE("simulation option validation") {
  CHECK(drop_mode_from_string("hard") == DropMode::Hard);
  CHECK_THROWS_AS(drop_mode_from_string("soft"), std::invalid_argument);
  SimRun r = short_run();
  r.duration = 0.0;
  CHECK_THROWS_AS(simulate(rbu_model(false), r), std::invalid_argument);
  CHECK_THROWS_AS(simulate_batch(rbu_model(false), short_run(), -1, 0), std::invalid_argument);
}
