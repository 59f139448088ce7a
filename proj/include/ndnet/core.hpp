#pragma once

// Domain types shared by every ndnet module: packet records, traces, static
// trace features and the fixed-length window grid used by the models.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ndnet {

/// Default window length of the window-level model, in seconds.
inline constexpr double kDefaultWindowLen = 0.1;

/// Default maximum transfer unit in bytes.
inline constexpr std::uint32_t kDefaultMtu = 1500;

/// One-way delay of a packet: finite seconds, or DROP when the packet never
/// reached the receiver. DROP is a tag, never an infinity.
class Delay {
 public:
  static Delay of(double seconds);
  static Delay drop() { return Delay{}; }

  bool dropped() const { return !seconds_.has_value(); }
  bool delivered() const { return seconds_.has_value(); }
  /// Throws std::logic_error on a dropped packet.
  double seconds() const;

  friend bool operator==(const Delay&, const Delay&) = default;

 private:
  Delay() = default;
  std::optional<double> seconds_;
};

struct PacketRecord {
  double send_time = 0.0;  // seconds since trace start
  std::uint32_t size = kDefaultMtu;
  double spacing = 0.0;  // send_time delta to the previous packet
  Delay delay = Delay::drop();
  std::optional<std::uint32_t> recv_rank;  // arrival order among delivered

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

/// Trace-level conditioning features: minimum and maximum delivered delay,
/// and the 95th percentile of the per-window receiving rate.
struct StaticFeatures {
  double y_min = 0.0;           // seconds
  double y_max = 0.0;           // seconds
  double p95_throughput = 0.0;  // bits/second

  friend bool operator==(const StaticFeatures&, const StaticFeatures&) = default;
};

struct Trace {
  std::vector<PacketRecord> packets;
  StaticFeatures static_features;
  std::string protocol_tag;
  std::string config_tag;
  std::uint64_t seed = 0;

  double duration() const { return packets.empty() ? 0.0 : packets.back().send_time; }
  std::size_t delivered_count() const;

  friend bool operator==(const Trace&, const Trace&) = default;
};

struct WindowGrid {
  double window_len = kDefaultWindowLen;
  std::size_t n_windows = 1;
  std::vector<std::size_t> assignment;  // per-packet window index

  /// Half-open packet index range [first, last) of each window. Packets are
  /// sorted by send time so every window is contiguous.
  std::vector<std::pair<std::size_t, std::size_t>> ranges() const;
};

/// Index of the window containing time `t`.
std::size_t window_index(double t, double window_len);

/// Number of windows covering a call of `duration` seconds, e.g. 600 for a
/// 60 s call with 100 ms windows.
std::size_t windows_for_duration(double duration, double window_len);

WindowGrid assign_windows(const Trace& trace, double window_len = kDefaultWindowLen);

/// Throws std::invalid_argument("no delivered packets") on an all-dropped trace.
StaticFeatures compute_static_features(const Trace& trace,
                                       double window_len = kDefaultWindowLen);

/// Arrival order of delivered packets, sorted by send_time + delay with ties
/// broken by send order. Dropped packets get std::nullopt.
std::vector<std::optional<std::uint32_t>> compute_recv_ranks(
    std::span<const PacketRecord> packets);

/// Recomputes spacing, recv_rank and static features from send times and
/// delays.
void finalize_trace(Trace& trace, double window_len = kDefaultWindowLen);

/// Per packet: true when the packet was delivered and at least one
/// later-sent packet arrived before it.
std::vector<bool> overtaken_flags(const Trace& trace);

/// Checks the PacketRecord/Trace invariants; throws std::invalid_argument
/// describing the first violation.
void validate_trace(const Trace& trace);

/// Percentile with linear interpolation between order statistics (p in
/// [0, 100]). Input need not be sorted. Throws on empty input.
double percentile(std::vector<double> values, double p);

/// Per-window receiving rate in bits/second over the send-time window grid.
std::vector<double> window_receive_rates(const Trace& trace, const WindowGrid& grid);

}  // namespace ndnet
