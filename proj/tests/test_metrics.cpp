#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "ndnet/metrics.hpp"
#include "oracles.hpp"

using namespace ndnet;

namespace {

Trace rand_trace(Rng& rng, int n, double delay_scale, std::string tag) {
  std::vector<double> send, delay;
  double t = 0.0;
  for (int i = 0; i < n; ++i) {
    t += uniform(rng, 0.001, 0.01);
    send.push_back(t);
    delay.push_back(uniform(rng, 0, 1) < 0.05 ? -1.0 : delay_scale * uniform(rng, 0.02, 0.05));
  }
  Trace tr = test::make_trace(send, delay);
  tr.config_tag = std::move(tag);
  return tr;
}

}  // namespace

TEST_CASE("1d wasserstein") {
  CHECK(wasserstein_1d({0.0, 1.0}, {1.0, 2.0}) == doctest::Approx(1.0));
  CHECK(wasserstein_1d({0.3}, {0.3}) == 0.0);
  CHECK(wasserstein_1d({0.0}, {0.0, 1.0, 2.0}) == doctest::Approx(1.0));
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> a(1 + rng() % 40), b(1 + rng() % 40);
    for (auto& v : a) v = uniform(rng, -1, 1);
    for (auto& v : b) v = uniform(rng, 0, 3);
    CHECK(wasserstein_1d(a, b) == doctest::Approx(oracle::quantile_w1(a, b)).epsilon(1e-9));
    std::vector<double> shifted = a;
    for (auto& v : shifted) v += 0.25;
    CHECK(wasserstein_1d(a, shifted) == doctest::Approx(0.25));
  }
  CHECK_THROWS_AS(wasserstein_1d({}, {1.0}), std::invalid_argument);
}

TEST_CASE("2d wasserstein") {
  CHECK(wasserstein_2d({{0, 0}}, {{3, 4}}, {0, 1}, {0, 1}) == doctest::Approx(5.0));
  CHECK(wasserstein_2d({{0, 0}}, {{3, 4}}, {0, 3}, {0, 4}) == doctest::Approx(std::sqrt(2.0)));
  Rng rng(2);
  for (int k = 0; k < 30; ++k) {
    const std::size_t n = 1 + rng() % 4, m = 1 + rng() % 4;
    if (n * m / std::gcd(n, m) > 8) continue;
    std::vector<Point2> a(n), b(m);
    for (auto& p : a) p = {uniform(rng, 0, 1), uniform(rng, 0, 1)};
    for (auto& p : b) p = {uniform(rng, 0, 1), uniform(rng, 0, 1)};
    CHECK(wasserstein_2d(a, b) == doctest::Approx(oracle::assignment_w2(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("rbf mmd") {
  Eigen::VectorXd x(2), y(2);
  x << 0, 0;
  y << 1, 1;
  CHECK(mmd_rbf({x}, {y}, 0.5) == doctest::Approx(2.0 - 2.0 * std::exp(-1.0)));
  CHECK(mmd_rbf({x, y}, {x, y}, 1.0) == doctest::Approx(0.0));
  CHECK(mmd_rbf({x, x}, {y}, 1.0) == doctest::Approx(mmd_rbf({y}, {x, x}, 1.0)));
  CHECK(mmd_rbf({x, x, y}, {y}, 0.7) == doctest::Approx(oracle::mmd_triple_sum({x, x, y}, {y}, 0.7)));
  CHECK_THROWS_AS(mmd_rbf({x}, {Eigen::VectorXd::Zero(3)}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mmd_rbf({x}, {y}, 0.0), std::invalid_argument);
}

TEST_CASE("chunked mmd curve") {
  Rng rng(4);
  std::vector<Trace> real, other;
  for (int i = 0; i < 6; ++i) real.push_back(rand_trace(rng, 250, 1.0, i % 2 ? "a" : "b"));
  for (int i = 0; i < 6; ++i) other.push_back(rand_trace(rng, 250, 3.0, i % 2 ? "a" : "b"));
  other.push_back(rand_trace(rng, 40, 3.0, "a"));
  const Dataset r = make_dataset(real, SplitTag::Test);
  const Dataset s = make_dataset(other, SplitTag::Test);
  const auto self = mmd_chunk_curve(r, r);
  REQUIRE(self.size() == 3);
  CHECK(self[2].chunk_start == 200);
  for (const auto& p : self) CHECK(p.mmd2 == doctest::Approx(0.0).epsilon(1e-12));
  const auto diff = mmd_chunk_curve(r, s);
  REQUIRE(diff.size() == 3);
  for (const auto& p : diff) CHECK(p.mmd2 > 0.01);
  MmdOptions jobs;
  jobs.jobs = 3;
  const auto diff3 = mmd_chunk_curve(r, s, jobs);
  for (std::size_t i = 0; i < 3; ++i) CHECK(diff3[i].mmd2 == diff[i].mmd2);
}

TEST_CASE("reordering fraction and cdf") {
  const Trace t = test::make_trace({0.0, 0.01, 0.02}, {0.10, 0.05, -1});
  CHECK(reorder_fraction(t) == doctest::Approx(0.5));
  const Trace in_order = test::make_trace({0.0, 0.01}, {0.05, 0.05});
  const Dataset d = make_dataset({t, in_order, in_order}, SplitTag::Test);
  const auto cdf = reorder_cdf(d);
  REQUIRE(cdf.size() == 2);
  CHECK(cdf[0].value == 0.0);
  CHECK(cdf[0].prob == doctest::Approx(2.0 / 3.0));
  CHECK(cdf[1].value == 0.5);
  CHECK(cdf[1].prob == doctest::Approx(1.0));
}

TEST_CASE("per-trace summaries") {
  const Trace t = test::make_trace({0.0, 0.05, 0.1, 0.15}, {0.02, 0.04, -1, 0.06});
  CHECK(mean_delay(t) == doctest::Approx(0.04));
  CHECK(p95_delay(t) == doctest::Approx(0.04 + 0.9 * 0.02));
  CHECK(mean_throughput(t) == doctest::Approx(3 * 1500 * 8 / 0.2));
}

TEST_CASE("evaluate report") {
  Rng rng(6);
  std::vector<Trace> a, b;
  for (int i = 0; i < 12; ++i) a.push_back(rand_trace(rng, 300, 1.0, "x"));
  for (int i = 0; i < 12; ++i) b.push_back(rand_trace(rng, 300, 1.0, "x"));
  const Dataset ra = make_dataset(a, SplitTag::Test);
  const Dataset rb = make_dataset(b, SplitTag::Test);
  const MetricsReport self = evaluate(ra, ra);
  CHECK(self.wd1_mean_delay == 0.0);
  CHECK(self.wd2_tput_mean_delay == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_FALSE(self.disc_score.has_value());
  EvalOptions o;
  o.discriminator = true;
  const MetricsReport r = evaluate(ra, rb, o);
  CHECK(r.wd1_mean_delay > 0.0);
  REQUIRE(r.disc_score.has_value());
  CHECK(r.tput_range.max >= r.tput_range.min);
  const auto j = report_to_json(r);
  CHECK(j.contains("wd2_tput_mean_delay"));
  const std::string csv = report_to_csv(r);
  CHECK(csv.rfind("metric,key,value\n", 0) == 0);
  CHECK(csv.find("disc_score") != std::string::npos);
}
