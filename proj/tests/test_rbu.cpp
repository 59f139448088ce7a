#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ndnet/rbu.hpp"

using namespace ndnet;

namespace {

PathParamsT<double> path_of(double d_prop, double d_trans, double tau) {
  return {d_prop, d_trans, tau, d_trans, tau};
}

PacketCellT<double> zero_cell() { return {{0, 0, 0, 0, 0}, 0, 0, 0, 0}; }

}  // namespace

TEST_CASE("bounded sigmoid head") {
  GHeadT<double> h{{0, 0, 0}, 0.0};
  CHECK(g_bounded({0.3, 0.1, 0.9}, h, 0.0, 0.2) == doctest::Approx(0.1));
  h.bias = 50;
  CHECK(g_bounded({0, 0, 0}, h, 1.0, 3.0) == doctest::Approx(3.0));
  h.bias = -50;
  CHECK(g_bounded({0, 0, 0}, h, 1.0, 3.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(g_bounded({0, 0, 0}, h, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("bottleneck step hand example") {
  const auto o = bottleneck_step(0.05, 0.02, 0.5, 0.01, 0.1);
  CHECK(o.a == doctest::Approx(0.04));
  CHECK(o.d == doctest::Approx(0.07));
  CHECK(drop_probability(0.1, 0.1, 200.0) == doctest::Approx(0.5));
  CHECK(hard_drop(0.1000001, 0.1));
  CHECK_FALSE(hard_drop(0.1, 0.1));
}

TEST_CASE("heuristic path parameters") {
  StaticFeatures x{0.05, 0.2, 12e6};
  const auto h = heuristic_path_params(x);
  CHECK(h.d_prop == doctest::Approx(0.045));
  CHECK(h.d_trans == doctest::Approx(0.001));
  CHECK(h.tau == doctest::Approx(0.155));
  x.y_max = 0.04;
  CHECK_THROWS_AS(heuristic_path_params(x), std::invalid_argument);
}

TEST_CASE("single-path hard-drop output never reorders") {
  Rng rng(2024);
  std::size_t violations = 0, delivered_total = 0;
  for (int run = 0; run < 1000; ++run) {
    const auto path = path_of(uniform(rng, 0, 0.1), uniform(rng, 1e-5, 0.02), uniform(rng, 1e-3, 0.5));
    PacketCellT<double> cell;
    for (auto& w : cell.wh) w = uniform(rng, -3, 3);
    cell.bh = uniform(rng, -3, 3);
    cell.uh = uniform(rng, -3, 3);
    cell.wc = uniform(rng, -3, 3);
    cell.bc = uniform(rng, -3, 3);
    const double gamma = uniform(rng, 0, 1);
    const int n = 1 + static_cast<int>(rng() % 500);
    auto st = initial_state(0.0);
    double t = 0.0, last_arrival = -1.0;
    for (int i = 0; i < n; ++i) {
      PacketInput in;
      in.spacing = i == 0 ? 0.0 : uniform(rng, 0, 0.03);
      in.y_max = 0.5;
      t += in.spacing;
      const double c_w = uniform(rng, 0, 1);
      const auto out = rbu_forward(path, cell, c_w, in, gamma, 200.0, st);
      const bool drop = hard_drop(out.d, path.tau);
      rbu_commit(st, cell, c_w, in, out, !drop);
      if (drop) continue;
      ++delivered_total;
      const double arrival = t + out.y;
      if (!(arrival > last_arrival)) ++violations;
      last_arrival = arrival;
    }
  }
  CHECK(delivered_total > 10000);
  CHECK(violations == 0);
}

TEST_CASE("inversion recovers the cross traffic of a gamma-zero unit") {
  const HeuristicParams hp{0.03, 0.002, 0.1};
  const auto path = path_of(hp.d_prop, hp.d_trans, hp.tau);
  const auto cell = zero_cell();
  Rng rng(5);
  std::vector<double> send, delay, truth;
  std::vector<double> c_w(10);
  for (auto& c : c_w) c = uniform(rng, 0, 0.6);
  auto st = initial_state(0.0);
  double t = 0.0;
  for (int i = 0; i < 300; ++i) {
    PacketInput in;
    in.spacing = i == 0 ? 0.0 : uniform(rng, 0, 0.006);
    in.y_max = 0.2;
    t += in.spacing;
    const double c = c_w[window_index(t, 0.1) % 10];
    const auto out = rbu_forward(path, cell, c, in, 0.0, 200.0, st);
    const bool drop = hard_drop(out.d, path.tau);
    rbu_commit(st, cell, c, in, out, !drop);
    send.push_back(t);
    delay.push_back(drop ? -1.0 : out.y);
    truth.push_back(c);
  }
  const Trace tr = test::make_trace(send, delay);
  const WindowGrid g = assign_windows(tr);
  const Discretizer disc(100, 0.0, 1.0);
  const auto inv = invert_cross_traffic(tr, hp, g, disc);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < send.size(); ++i) {
    if (!inv.c_tilde[i]) {
      CHECK(delay[i] < 0);
      continue;
    }
    CHECK(*inv.c_tilde[i] == doctest::Approx(truth[i]).epsilon(1e-6));
    ++checked;
  }
  CHECK(checked > 100);
  CHECK(inv.n_clamped == 0);
  for (const auto& h : inv.window_hist) {
    if (h.size() > 0) CHECK(h.sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("two-path unit with one queue matches the single-path unit") {
  Rng rng(8);
  const auto path = path_of(0.02, 0.004, 0.08);
  PacketCellT<double> cell{{0.3, -0.2, 0.1, 0.5, -0.4}, 0.1, 0.7, -1.0, 0.2};
  auto st = initial_state(0.0);
  auto ms = initial_multi_state(0.0);
  for (int i = 0; i < 2000; ++i) {
    PacketInput in;
    in.spacing = i == 0 ? 0.0 : uniform(rng, 0, 0.01);
    in.window_elapsed = uniform(rng, 0, 1);
    in.y_max = 0.1;
    const double c_w = uniform(rng, 0, 1);
    const auto a = rbu_forward(path, cell, c_w, in, 0.1, 200.0, st);
    const bool drop = hard_drop(a.d, path.tau);
    rbu_commit(st, cell, c_w, in, a, !drop);
    const auto b = multipath_step(path, cell, c_w, in, 0.1, 200.0, 0, !drop, ms);
    REQUIRE(a.y == b.y);
    REQUIRE(st.h == ms.h);
  }
  CHECK_THROWS_AS(multipath_step(path, cell, 0.5, {}, 0.1, 200.0, 2, true, ms), std::invalid_argument);
}

TEST_CASE("two queues of different depth can reorder") {
  PathParamsT<double> path{0.01, 0.001, 0.01, 0.001, 0.05};
  const auto cell = zero_cell();
  auto ms = initial_multi_state(0.0);
  PacketInput in;
  in.y_max = 0.1;
  // first packet goes to the deep, congested queue, second to the empty one
  const auto p0 = multipath_step(path, cell, 0.9, in, 0.0, 200.0, 1, true, ms);
  in.spacing = 0.001;
  const auto p1 = multipath_step(path, cell, 0.0, in, 0.0, 200.0, 0, true, ms);
  CHECK(0.001 + p1.y < p0.y);
}

TEST_CASE("soft two-path step with q at the extremes") {
  PathParamsT<double> path{0.01, 0.002, 0.03, 0.003, 0.06};
  const auto cell = zero_cell();
  PacketInput in;
  in.spacing = 0.001;
  in.y_max = 0.1;
  for (int k = 0; k < 2; ++k) {
    auto hard = initial_multi_state(0.0);
    auto soft = initial_multi_state(0.0);
    for (int i = 0; i < 20; ++i) {
      const auto a = multipath_step(path, cell, 0.4, in, 0.0, 200.0, k, true, hard);
      const auto b = multipath_soft_step(path, cell, 0.4, static_cast<double>(k), in, 0.0, 200.0, true, soft);
      CHECK(a.y == doctest::Approx(b.y));
    }
  }
}

TEST_CASE("bin selection") {
  Rng rng(0);
  CHECK(select_bin(Eigen::VectorXd::Constant(100, 0.01), BinMode::ArgMax, rng) == 0);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(5);
  p(3) = 1.0;
  CHECK(select_bin(p, BinMode::ArgMax, rng) == 3);
  CHECK(select_bin(p, BinMode::Sample, rng) == 3);
  CHECK_THROWS(select_bin(Eigen::VectorXd(), BinMode::ArgMax, rng));
}

TEST_CASE("window model unrolls over a full call") {
  RbuConfig cfg;
  cfg.hidden = 8;
  const RbuModel m(cfg, 1);
  CHECK(m.n_buffer_scalars() == 21);
  Tape tape;
  Mat x(3, 2);
  x << 0.1, 0.9, 0.5, 0.5, 0.3, 0.7;
  const auto fw = window_forward(tape, m, x, 600);
  REQUIRE(fw.c_logits.size() == 600);
  CHECK(fw.c_logits[599].rows() == 100);
  CHECK(fw.c_logits[599].cols() == 2);
  CHECK(fw.q_logits.empty());

  Rng rng(4);
  const auto plan = plan_windows(m, {0.1, 0.5, 0.3}, 600, BinMode::ArgMax, rng);
  CHECK(plan.c_w.size() == 600);
  for (double c : plan.c_w) {
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
  for (std::size_t w = 0; w < 600; ++w) {
    const int b = select_bin(plan.c_probs[w], BinMode::ArgMax, rng);
    CHECK(Discretizer(100).discretize(plan.c_w[w]) == b);
  }

  cfg.multipath = true;
  const RbuModel mm(cfg, 1);
  CHECK(mm.n_buffer_scalars() == 29);
  const auto pm = plan_windows(mm, {0.1, 0.5, 0.3}, 10, BinMode::Sample, rng);
  CHECK(pm.q_w.size() == 10);
  const auto bv = buffer_values(mm);
  const auto pp = path_params(bv, {0.1, 0.5, 0.3}, StaticFeatures{0.05, 0.2, 1e6}, true);
  CHECK(pp.tau2 == doctest::Approx(2.0 * pp.tau));
}

TEST_CASE("invalid model configuration") {
  RbuConfig cfg;
  cfg.n_bins = 1;
  CHECK_THROWS_AS(RbuModel(cfg, 0), std::invalid_argument);
  cfg = {};
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(RbuModel(cfg, 0), std::invalid_argument);
}
