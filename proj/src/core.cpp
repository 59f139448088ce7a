#include "ndnet/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ndnet {

Delay Delay::of(double seconds) {
  if (!std::isfinite(seconds)) {
    throw std::invalid_argument("delay must be finite; use Delay::drop()");
  }
  Delay d;
  d.seconds_ = seconds;
  return d;
}

double Delay::seconds() const {
  if (!seconds_) throw std::logic_error("seconds() on a dropped packet");
  return *seconds_;
}

std::size_t Trace::delivered_count() const {
  return static_cast<std::size_t>(std::count_if(
      packets.begin(), packets.end(), [](const PacketRecord& p) { return p.delay.delivered(); }));
}

std::vector<std::pair<std::size_t, std::size_t>> WindowGrid::ranges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out(n_windows, {0, 0});
  std::size_t i = 0;
  for (std::size_t w = 0; w < n_windows; ++w) {
    out[w].first = i;
    while (i < assignment.size() && assignment[i] == w) ++i;
    out[w].second = i;
  }
  return out;
}

std::size_t window_index(double t, double window_len) {
  if (t <= 0.0) return 0;
  return static_cast<std::size_t>(std::floor(t / window_len));
}

std::size_t windows_for_duration(double duration, double window_len) {
  if (!(window_len > 0.0)) throw std::invalid_argument("window_len must be > 0");
  // Tolerate representation error so 60 / 0.1 gives 600 rather than 601.
  const double n = std::ceil(duration / window_len - 1e-9);
  return std::max<std::size_t>(1, n > 0 ? static_cast<std::size_t>(n) : 0);
}

WindowGrid assign_windows(const Trace& trace, double window_len) {
  if (!(window_len > 0.0)) throw std::invalid_argument("window_len must be > 0");
  WindowGrid grid;
  grid.window_len = window_len;
  grid.assignment.reserve(trace.packets.size());
  std::size_t max_index = 0;
  for (const auto& p : trace.packets) {
    const std::size_t w = window_index(p.send_time, window_len);
    grid.assignment.push_back(w);
    max_index = std::max(max_index, w);
  }
  grid.n_windows = std::max(windows_for_duration(trace.duration(), window_len),
                            trace.packets.empty() ? std::size_t{1} : max_index + 1);
  return grid;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(p, 0.0, 100.0) / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> window_receive_rates(const Trace& trace, const WindowGrid& grid) {
  std::vector<double> bits(grid.n_windows, 0.0);
  for (std::size_t i = 0; i < trace.packets.size(); ++i) {
    const auto& p = trace.packets[i];
    if (p.delay.delivered()) bits[grid.assignment[i]] += 8.0 * p.size;
  }
  for (double& b : bits) b /= grid.window_len;
  return bits;
}

StaticFeatures compute_static_features(const Trace& trace, double window_len) {
  StaticFeatures x;
  bool any = false;
  for (const auto& p : trace.packets) {
    if (!p.delay.delivered()) continue;
    const double y = p.delay.seconds();
    x.y_min = any ? std::min(x.y_min, y) : y;
    x.y_max = any ? std::max(x.y_max, y) : y;
    any = true;
  }
  if (!any) throw std::invalid_argument("no delivered packets");
  const WindowGrid grid = assign_windows(trace, window_len);
  x.p95_throughput = percentile(window_receive_rates(trace, grid), 95.0);
  return x;
}

std::vector<std::optional<std::uint32_t>> compute_recv_ranks(std::span<const PacketRecord> packets) {
  std::vector<std::size_t> order;
  order.reserve(packets.size());
  for (std::size_t i = 0; i < packets.size(); ++i) {
    if (packets[i].delay.delivered()) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return packets[a].send_time + packets[a].delay.seconds() <
           packets[b].send_time + packets[b].delay.seconds();
  });
  std::vector<std::optional<std::uint32_t>> ranks(packets.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<std::uint32_t>(r);
  return ranks;
}

void finalize_trace(Trace& trace, double window_len) {
  auto& pk = trace.packets;
  for (std::size_t i = 0; i < pk.size(); ++i) {
    pk[i].spacing = i == 0 ? 0.0 : pk[i].send_time - pk[i - 1].send_time;
  }
  const auto ranks = compute_recv_ranks(pk);
  for (std::size_t i = 0; i < pk.size(); ++i) pk[i].recv_rank = ranks[i];
  trace.static_features = compute_static_features(trace, window_len);
}

std::vector<bool> overtaken_flags(const Trace& trace) {
  const auto& pk = trace.packets;
  std::vector<bool> out(pk.size(), false);
  std::optional<std::uint32_t> min_later;
  for (std::size_t i = pk.size(); i-- > 0;) {
    if (!pk[i].recv_rank) continue;
    const std::uint32_t r = *pk[i].recv_rank;
    if (min_later && *min_later < r) out[i] = true;
    if (!min_later || r < *min_later) min_later = r;
  }
  return out;
}

void validate_trace(const Trace& trace) {
  const auto& pk = trace.packets;
  if (pk.empty()) throw std::invalid_argument("trace has no packets");
  for (std::size_t i = 0; i < pk.size(); ++i) {
    const auto& p = pk[i];
    const std::string at = " at packet " + std::to_string(i);
    if (p.send_time < 0.0) throw std::invalid_argument("negative send_time" + at);
    if (p.spacing < 0.0) throw std::invalid_argument("negative spacing" + at);
    if (i > 0 && p.send_time < pk[i - 1].send_time) {
      throw std::invalid_argument("send_time decreases" + at);
    }
    if (i == 0 && p.spacing != 0.0) throw std::invalid_argument("first spacing must be 0");
    if (p.delay.delivered() && !(p.delay.seconds() > 0.0)) {
      throw std::invalid_argument("non-positive delay" + at);
    }
    if (p.delay.dropped() && p.recv_rank) {
      throw std::invalid_argument("dropped packet has a recv_rank" + at);
    }
  }
  const auto ranks = compute_recv_ranks(pk);
  for (std::size_t i = 0; i < pk.size(); ++i) {
    if (pk[i].recv_rank && pk[i].recv_rank != ranks[i]) {
      throw std::invalid_argument("recv_rank inconsistent with arrival order at packet " +
                                  std::to_string(i));
    }
  }
  const StaticFeatures& x = trace.static_features;
  if (!(x.y_min > 0.0 && x.y_min <= x.y_max && x.p95_throughput > 0.0)) {
    throw std::invalid_argument("static features out of range");
  }
}

}  // namespace ndnet
