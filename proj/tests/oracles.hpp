#pragma once

// Independent brute-force references shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "ndnet/metrics.hpp"

namespace ndnet::oracle {

struct CrossSeg {
  long start_us, end_us, gap_us;
};

/// Tick-by-tick FIFO on a 1 us clock with mtu-sized packets taking
/// `service_us` ticks. Per sender packet: departure tick, or nullopt when
/// dropped. Cross arrivals are processed before sender arrivals in a tick.
inline std::vector<std::optional<long>> fifo_ticks(const std::vector<long>& send_us, long service_us, int cap,
                                                   const std::vector<CrossSeg>& segs) {
  std::vector<std::pair<long, long>> arrivals;  // (tick, sender index or -1)
  for (const auto& s : segs) {
    for (long a = s.start_us; a < s.end_us; a += s.gap_us) arrivals.emplace_back(a, -1);
  }
  for (std::size_t i = 0; i < send_us.size(); ++i) arrivals.emplace_back(send_us[i], static_cast<long>(i));
  std::stable_sort(arrivals.begin(), arrivals.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < 0 && b.second >= 0;
  });

  std::vector<std::optional<long>> out(send_us.size());
  std::deque<long> waiting;
  std::optional<long> in_service;
  long remaining = 0;
  std::size_t next = 0;
  const long horizon = arrivals.empty() ? 0 : arrivals.back().first + (cap + 2) * service_us + 1;
  for (long tick = 0; tick <= horizon; ++tick) {
    if (in_service && remaining == 0) {
      if (*in_service >= 0) out[static_cast<std::size_t>(*in_service)] = tick;
      in_service.reset();
    }
    if (!in_service && !waiting.empty()) {
      in_service = waiting.front();
      waiting.pop_front();
      remaining = service_us;
    }
    for (; next < arrivals.size() && arrivals[next].first == tick; ++next) {
      const long p = arrivals[next].second;
      if (!in_service) {
        in_service = p;
        remaining = service_us;
      } else if (static_cast<int>(waiting.size()) < cap) {
        waiting.push_back(p);
      }
    }
    if (in_service) --remaining;
  }
  return out;
}

/// W1 as the integral of the absolute difference of the quantile functions.
inline double quantile_w1(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> cuts{0.0, 1.0};
  for (std::size_t i = 1; i < a.size(); ++i) cuts.push_back(static_cast<double>(i) / static_cast<double>(a.size()));
  for (std::size_t j = 1; j < b.size(); ++j) cuts.push_back(static_cast<double>(j) / static_cast<double>(b.size()));
  std::sort(cuts.begin(), cuts.end());
  double w = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
    const double qa = a[std::min(a.size() - 1, static_cast<std::size_t>(mid * static_cast<double>(a.size())))];
    const double qb = b[std::min(b.size() - 1, static_cast<std::size_t>(mid * static_cast<double>(b.size())))];
    w += std::abs(qa - qb) * (cuts[k + 1] - cuts[k]);
  }
  return w;
}

/// Equal-mass transport by exhaustive assignment over replicated points.
inline double assignment_w2(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  const std::size_t g = std::gcd(a.size(), b.size());
  std::vector<Point2> ra, rb;
  for (const auto& p : a) ra.insert(ra.end(), b.size() / g, p);
  for (const auto& p : b) rb.insert(rb.end(), a.size() / g, p);
  std::vector<std::size_t> perm(ra.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = 1e300;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) c += std::hypot(ra[i].x - rb[perm[i]].x, ra[i].y - rb[perm[i]].y);
    best = std::min(best, c / static_cast<double>(ra.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// MMD^2 written out as the three kernel sums.
inline double mmd_triple_sum(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b,
                             double zeta) {
  auto k = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return std::exp(-zeta * (x - y).squaredNorm()); };
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (const auto& x : a) {
    for (const auto& y : a) aa += k(x, y);
  }
  for (const auto& x : b) {
    for (const auto& y : b) bb += k(x, y);
  }
  for (const auto& x : a) {
    for (const auto& y : b) ab += k(x, y);
  }
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  return aa / (n * n) + bb / (m * m) - 2.0 * ab / (n * m);
}

}  // namespace ndnet::oracle
