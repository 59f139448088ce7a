#pragma once

// Closed-loop congestion-control senders and the driver that connects a
// sender to a network environment (ground-truth queue or learned model).

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "ndnet/core.hpp"

namespace ndnet {

/// What the network did with one packet.
struct Outcome {
  bool dropped = false;
  double delay = 0.0;  // seconds, meaningful when !dropped

  static Outcome delivered(double delay) { return {false, delay}; }
  static Outcome drop() { return {true, 0.0}; }
};

struct SendRequest {
  double time = 0.0;
  std::uint32_t size = kDefaultMtu;
};

/// Congestion-control sender. The driver calls next_send() as a pure query,
/// on_sent() once a packet leaves, and on_feedback() when the outcome of a
/// packet reaches the sender.
class Sender {
 public:
  virtual ~Sender() = default;

  /// Earliest time >= now at which the sender wants to emit its next packet,
  /// or nullopt when it is blocked until more feedback arrives.
  virtual std::optional<SendRequest> next_send(double now) = 0;
  virtual void on_sent(std::uint64_t packet_id, double send_time, std::uint32_t size) = 0;
  virtual void on_feedback(std::uint64_t packet_id, const Outcome& outcome, double now) = 0;

  /// Congestion window in packets; 0 for senders that are not window based.
  virtual double congestion_window() const { return 0.0; }
};

enum class SenderKind { RenoAimd, CubicLike, VegasLike, LedbatLike, ConstantRate };

std::string to_string(SenderKind kind);
/// Accepts "reno", "cubic", "vegas", "ledbat", "constant" (and the enum
/// names). Throws std::invalid_argument otherwise.
SenderKind sender_kind_from_string(const std::string& s);

struct SenderParams {
  std::uint32_t mtu = kDefaultMtu;
  double init_cwnd = 10.0;    // packets
  double min_cwnd = 1.0;      // packets
  double min_rto = 0.2;       // seconds
  int dupthresh = 3;          // later deliveries that declare a packet lost
  double cubic_c = 0.4;
  double cubic_beta = 0.7;    // window kept on loss
  double vegas_alpha = 2.0;   // packets queued, lower target
  double vegas_beta = 4.0;    // packets queued, upper target
  double vegas_gamma = 1.0;   // slow-start exit threshold
  double ledbat_target = 0.1; // seconds of queueing delay
  double ledbat_gain = 1.0;
  double constant_rate_pps = 100.0;
};

std::unique_ptr<Sender> make_sender(SenderKind kind, const SenderParams& params,
                                    std::uint64_t seed);

/// The network seen by a sender: answers each packet at its send time.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Outcome transmit(std::uint64_t packet_id, double send_time, double spacing,
                           std::uint32_t size) = 0;
  /// Delay between receipt and the sender learning about it.
  virtual double feedback_latency() const = 0;
  /// Delay between sending a dropped packet and the sender learning about it.
  virtual double drop_timeout() const = 0;
};

struct DriveOptions {
  double duration = 60.0;
  double window_len = kDefaultWindowLen;
  std::string protocol_tag;
  std::string config_tag;
  std::uint64_t seed = 0;
  std::size_t max_packets = 5'000'000;
};

/// Runs `sender` against `env` until no packet can be sent before
/// `duration`. Feedback due at or before a send time is delivered first.
/// Returns a finalized trace (spacing, recv_rank and static features set).
Trace drive(Sender& sender, Environment& env, const DriveOptions& options);

/// Helper senders that replay a fixed schedule; used by tests and by the
/// open-loop queue checks.
std::unique_ptr<Sender> make_replay_sender(std::vector<SendRequest> schedule);

}  // namespace ndnet
