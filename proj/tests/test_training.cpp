#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ndnet/groundtruth.hpp"
#include "ndnet/training.hpp"

using namespace ndnet;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.model.hidden = 8;
  c.model.layers = 2;
  c.epochs = 2;
  c.batch_size = 2;
  return c;
}

Dataset small_cubic(std::uint64_t seed, int patterns = 12, double duration = 3.0) {
  GenerateOptions o;
  o.scenarios = {3};
  o.configs_per_scenario = 1;
  o.cross_patterns = patterns;
  o.duration = duration;
  o.seed = seed;
  o.scenario.bandwidth_override = {1e6, 2e6};
  o.scenario.buffer_scale = 0.2;
  return generate_dataset(o);
}

}  // namespace

TEST_CASE("packet loss values") {
  CHECK(packet_loss(0.1, 0.0, Delay::drop(), 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(packet_loss(0.1, 0.0, Delay::of(0.1), 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(packet_loss(0.1, -40.0, Delay::of(0.1), 1.0) < 1e-12);
  CHECK(packet_loss(0.3, -40.0, Delay::of(0.1), 0.4) == doctest::Approx(0.25));
  Tape t;
  CHECK(packet_loss(t.constant(0.3), t.constant(0.0), Delay::of(0.1), 0.4).scalar() ==
        doctest::Approx(std::log(2.0) + 0.25));
}

TEST_CASE("window loss values") {
  const Eigen::VectorXd uniform = Eigen::VectorXd::Zero(100);
  Eigen::VectorXd one_hot = Eigen::VectorXd::Zero(100);
  one_hot(17) = 1.0;
  CHECK(window_loss(uniform, one_hot) == doctest::Approx(std::log(100.0)));
  CHECK(window_loss(uniform, Eigen::VectorXd::Constant(100, 0.01)) == doctest::Approx(std::log(100.0)));
  Eigen::VectorXd peaked = Eigen::VectorXd::Zero(100);
  peaked(17) = 30.0;
  CHECK(window_loss(peaked, one_hot) < 1e-10);
}

TEST_CASE("objective gradients match finite differences") {
  const auto single = objective_gradcheck(3, 20, false);
  CHECK(single.n_checked >= 40);
  CHECK(single.max_rel_err < 1e-4);
  const auto multi = objective_gradcheck(3, 20, true);
  CHECK(multi.max_rel_err < 1e-4);
}

TEST_CASE("lambda zero removes the window loss from the gradient") {
  const Dataset data = micro_batch_dataset(1);
  TrainConfig cfg = small_config();
  const auto prepared = prepare_traces(data, cfg);
  RbuModel model(cfg.model, 5);
  init_from_data(model, prepared, cfg);
  std::vector<const PreparedTrace*> batch;
  for (const auto& p : prepared) batch.push_back(&p);

  cfg.lambda = 0.0;
  Tape t0;
  const Objective a = batch_objective(t0, model, batch, cfg);
  auto g0 = model.store.zero_grads();
  t0.backward(a.total, g0);

  cfg.lambda = 1.0;
  Tape t1;
  const Objective b = batch_objective(t1, model, batch, cfg);
  auto g1 = model.store.zero_grads();
  t1.backward(b.j_pkt, g1);

  CHECK(a.j_win.scalar() > 0.0);
  CHECK(a.total.scalar() == doctest::Approx(a.j_pkt.scalar()));
  CHECK(b.total.scalar() == doctest::Approx(b.j_pkt.scalar() + b.j_win.scalar()));
  double window_grad = 0.0;
  for (int i = 0; i < model.store.size(); ++i) {
    CHECK((g0[static_cast<std::size_t>(i)] - g1[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff() == 0.0);
    if (model.store[i].group == ParamGroup::Window) window_grad += g0[static_cast<std::size_t>(i)].norm();
  }
  // packet loss still reaches the window model through c_w
  CHECK(window_grad > 0.0);
}

TEST_CASE("prepare rejects bad input") {
  CHECK_THROWS_AS(prepare_traces(Dataset{}, small_config()), std::invalid_argument);
  const Dataset tiny = make_dataset({test::make_trace({0.0, 0.01}, {0.05, 0.06})}, SplitTag::Train);
  CHECK_THROWS_WITH_AS(prepare_traces(tiny, small_config()), doctest::Contains("shorter than one window"),
                       std::invalid_argument);
}

TEST_CASE("rbu training is deterministic and checkpoints round trip") {
  const Dataset data = small_cubic(4, 4, 2.0);
  const TrainConfig cfg = small_config();
  std::vector<EpochStats> seen;
  const TrainResult a = train_rbu(data, cfg, [&](const EpochStats& s) { seen.push_back(s); });
  const TrainResult b = train_rbu(data, cfg);
  REQUIRE(a.history.size() == 2);
  CHECK(seen.size() == 2);
  CHECK(a.history[1].j_pkt == b.history[1].j_pkt);
  for (int i = 0; i < a.model.store.size(); ++i) CHECK(a.model.store[i].value == b.model.store[i].value);

  const auto dir = test::temp_dir("ckpt");
  save_checkpoint(make_rbu_checkpoint(a.model, data), dir / "c.json");
  const Checkpoint ck = load_checkpoint(dir / "c.json");
  CHECK(ck.kind == "rbu");
  CHECK(ck.ranges == data.ranges);
  CHECK(ck.sources.size() == data.traces.size());
  const RbuModel back = rbu_from_checkpoint(ck);
  CHECK(back.config.hidden == 8);
  for (int i = 0; i < a.model.store.size(); ++i) {
    CHECK(back.store[i].name == a.model.store[i].name);
    CHECK(back.store[i].value == a.model.store[i].value);
  }
}

TEST_CASE("baseline learns a constant delay") {
  std::vector<Trace> traces;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> send, delay;
    for (int i = 0; i < 200; ++i) {
      send.push_back(i * 0.01);
      delay.push_back(0.05 + 0.01 * k);
    }
    traces.push_back(test::make_trace(send, delay));
  }
  const Dataset data = make_dataset(traces, SplitTag::Train);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 3;
  cfg.lr = {1.0, 1.0};
  cfg.prior_bias_init = false;
  BaselineConfig bc;
  bc.hidden = 8;
  const auto res = train_baseline(data, cfg, bc);
  CHECK(res.history.back().j_win < 0.1 * res.history.front().j_win);

  BaselineRunner run(res.model);
  const auto& t = data.traces[0];
  const XNorm xn = normalize_static(t.static_features, data.ranges);
  const StaticFeatures& x = t.static_features;
  double ce = 0.0;
  const WindowGrid g = assign_windows(t);
  const auto r = g.ranges();
  for (std::size_t w = 0; w < g.n_windows; ++w) {
    std::span<const PacketRecord> prev;
    if (w > 0) prev = std::span<const PacketRecord>(t.packets).subspan(r[w - 1].first, r[w - 1].second - r[w - 1].first);
    const auto step = run.step(baseline_window_input(xn, x, prev, 0.1));
    Rng rng(0);
    CHECK(select_bin(step.y_probs, BinMode::ArgMax, rng) == 99);
    ce -= std::log(step.y_probs(99));
    CHECK(step.drop_prob < 0.1);
  }
  CHECK(ce / static_cast<double>(g.n_windows) < 0.1);
  CHECK_THROWS_AS(baseline_kind_from_string("gru"), std::invalid_argument);
  CHECK(to_string(baseline_kind_from_string("lstm-pkt-fifo")) == "lstm-pkt-fifo");
}

TEST_CASE("discriminative score") {
  const Dataset real = small_cubic(11);
  Dataset scaled = real;
  for (auto& t : scaled.traces) {
    for (auto& p : t.packets) {
      if (p.delay.delivered()) p.delay = Delay::of(p.delay.seconds() * 10.0);
    }
    finalize_trace(t);
  }
  const double same = discriminative_score(real, real, 1);
  CHECK(same <= 0.1);
  CHECK(discriminative_score(real, real, 1) == same);
  CHECK(discriminative_score(real, scaled, 1) >= 0.4);
  Dataset few = real;
  few.traces.resize(5);
  CHECK_THROWS_AS(discriminative_score(few, real, 1), std::invalid_argument);
}
