#pragma once

// Discrete-event single-bottleneck FIFO path with on/off cross traffic.
// Produces the ground-truth traces used for training and evaluation.

#include <cstdint>
#include <string>
#include <vector>

#include "ndnet/core.hpp"
#include "ndnet/protocols.hpp"
#include "ndnet/rng.hpp"
#include "ndnet/trace_io.hpp"

namespace ndnet {

struct CrossSegment {
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds
  double rate = 0.0;   // bits/second
  friend bool operator==(const CrossSegment&, const CrossSegment&) = default;
};

struct CrossTrafficParams {
  double mean_on = 2.0;            // seconds
  double mean_off = 2.0;           // seconds
  double max_rate_fraction = 0.8;  // of the bottleneck bandwidth
};

struct CrossTrafficSchedule {
  std::vector<CrossSegment> segments;  // ordered, non-overlapping
};

/// On/off constant-bit-rate segments: exponential on and off durations,
/// rate uniform in [0, max_rate_fraction * bandwidth].
CrossTrafficSchedule sample_cross_schedule(double bandwidth, double duration,
                                           const CrossTrafficParams& params, Rng& rng);

struct PathConfig {
  double bandwidth = 10e6;      // bits/second
  double prop_delay = 0.05;     // one-way, seconds
  int buffer_capacity = 100;    // packets waiting (excluding the one in service)
  std::uint32_t mtu = kDefaultMtu;
  CrossTrafficSchedule cross;
  std::uint64_t seed = 0;
  std::string tag;
};

void validate_path_config(const PathConfig& config);

/// Scenario sampling knobs for desk-scale runs.
struct ScenarioOptions {
  double bandwidth_scale = 1.0;
  /// When max > 0, bandwidth is drawn from this range instead of the row.
  Range bandwidth_override{0.0, 0.0};
  double buffer_scale = 1.0;
};

/// Uniform draw of bandwidth, propagation delay and buffer size within the
/// dumbbell scenario row (1, 2 or 3). No cross traffic is attached.
PathConfig sample_path_config(int scenario, Rng& rng, const ScenarioOptions& options = {});

/// 4 * prop_delay plus the time to drain a full buffer.
double default_drop_timeout(const PathConfig& config);

/// The bottleneck as seen by one sender. Sender packets must be transmitted
/// in non-decreasing time order; cross packets are injected lazily.
class GroundTruthPath final : public Environment {
 public:
  explicit GroundTruthPath(const PathConfig& config);

  Outcome transmit(std::uint64_t packet_id, double send_time, double spacing,
                   std::uint32_t size) override;
  double feedback_latency() const override { return config_.prop_delay; }
  double drop_timeout() const override { return drop_timeout_; }

  std::uint64_t cross_sent() const { return cross_sent_; }
  std::uint64_t cross_dropped() const { return cross_dropped_; }

 private:
  struct InQueue {
    std::int64_t start;  // service start, ns
    std::int64_t dep;    // departure, ns
  };

  bool enqueue(std::int64_t t, std::uint32_t size, std::int64_t* dep);
  std::int64_t next_cross_arrival() const;
  void advance_cross();
  void inject_cross_until(std::int64_t t);

  PathConfig config_;
  double drop_timeout_;
  std::vector<InQueue> queue_;  // accepted, not yet departed; front at head_
  std::size_t head_ = 0;
  std::int64_t last_dep_ = 0;
  std::int64_t last_arrival_ = -1;
  std::size_t seg_ = 0;
  std::uint64_t seg_k_ = 0;
  std::uint64_t cross_sent_ = 0;
  std::uint64_t cross_dropped_ = 0;
};

/// Runs a closed-loop sender against the path for `duration` seconds.
Trace run_ground_truth(const PathConfig& config, Sender& sender, double duration,
                       const std::string& protocol_tag = {},
                       double window_len = kDefaultWindowLen);

/// Serialization time of `size` bytes at `bandwidth`, rounded to whole ns.
std::int64_t service_time_ns(std::uint32_t size, double bandwidth);
std::int64_t to_ns(double seconds);

struct GenerateOptions {
  std::vector<int> scenarios{1, 2, 3};
  int configs_per_scenario = 4;
  int cross_patterns = 10;
  SenderKind sender = SenderKind::CubicLike;
  SenderParams sender_params;
  double duration = 60.0;
  std::uint64_t seed = 0;
  ScenarioOptions scenario;
  CrossTrafficParams cross;
  double window_len = kDefaultWindowLen;
  int jobs = 1;
};

/// Scenario x config x cross-pattern grid of ground-truth traces. Output is
/// independent of `jobs`.
Dataset generate_dataset(const GenerateOptions& options, SplitTag split = SplitTag::Train);

}  // namespace ndnet
