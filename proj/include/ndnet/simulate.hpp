#pragma once

// Closed-loop inference: a sender drives a trained model (RBU or one of the
// LSTM baselines) the same way it drives the ground-truth path.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "ndnet/checkpoint.hpp"
#include "ndnet/protocols.hpp"
#include "ndnet/rbu.hpp"
#include "ndnet/training.hpp"

namespace ndnet {

enum class DropMode { Bernoulli, Hard };

std::string to_string(DropMode m);
DropMode drop_mode_from_string(const std::string& s);

struct RbuSimOptions {
  DropMode drop_mode = DropMode::Bernoulli;  // Bernoulli(sigmoid(kappa (d - tau))) or d > tau
  BinMode bin_mode = BinMode::Sample;
  std::optional<double> q_override;      // fixed routing probability, two-path only
  std::optional<double> tau2_scale;      // tau2 = scale * tau, two-path only
};

/// The learned path seen by a sender. The window model is unrolled once up
/// front for the whole call.
class RbuEnvironment final : public Environment {
 public:
  RbuEnvironment(const RbuModel& model, const StaticFeatures& x, const XNorm& x_norm, double duration,
                 const RbuSimOptions& options, std::uint64_t seed);

  Outcome transmit(std::uint64_t packet_id, double send_time, double spacing, std::uint32_t size) override;
  double feedback_latency() const override { return path_.d_prop; }
  double drop_timeout() const override;

  const PathParamsT<double>& path() const { return path_; }
  const WindowPlan& plan() const { return plan_; }

 private:
  const RbuModel* model_;
  StaticFeatures x_;
  RbuSimOptions opt_;
  Rng rng_;
  PathParamsT<double> path_;
  PacketCellT<double> cell_;
  WindowPlan plan_;
  RbuStateT<double> st_;
  MultiStateT<double> ms_;
};

/// Autoregressive window LSTM answering packets from its per-window output
/// distribution. LstmWin uses the argmax bin for every packet of a window,
/// LstmPkt samples per packet, LstmPktFifo resamples (up to 20 times) until
/// the packet arrives after every earlier one and clamps otherwise.
class BaselineEnvironment final : public Environment {
 public:
  BaselineEnvironment(const BaselineModel& model, BaselineKind kind, const StaticFeatures& x,
                      const XNorm& x_norm, double rho, std::uint64_t seed);

  Outcome transmit(std::uint64_t packet_id, double send_time, double spacing, std::uint32_t size) override;
  double feedback_latency() const override { return d_prop_; }
  double drop_timeout() const override { return 4.0 * d_prop_ + (x_.y_max - d_prop_); }

 private:
  void advance_to(std::size_t window);
  double draw_delay();

  const BaselineModel* model_;
  BaselineKind kind_;
  StaticFeatures x_;
  XNorm x_norm_;
  double d_prop_;
  Rng rng_;
  BaselineRunner runner_;
  Discretizer disc_;
  std::optional<std::size_t> window_;
  BaselineStep out_;
  double win_value_ = 0.0;
  std::vector<PacketRecord> cur_, prev_;
  double last_arrival_ = 0.0;
};

/// A checkpoint turned into a runnable model plus its sampling sources.
struct LoadedModel {
  std::string kind;  // rbu, lstm-win, lstm-pkt, lstm-pkt-fifo
  std::variant<RbuModel, BaselineModel> model;
  GlobalRanges ranges;
  std::vector<StaticFeatures> sources;
  double rho = 0.9;
};

LoadedModel load_model(const Checkpoint& ckpt);

struct SimRun {
  SenderKind sender = SenderKind::VegasLike;
  SenderParams sender_params;
  double duration = 60.0;
  std::uint64_t seed = 0;
  RbuSimOptions rbu;
  double window_len = kDefaultWindowLen;
};

/// Samples one training trace's static features, then drives the sender
/// against the model. Same seed, same trace.
Trace simulate(const LoadedModel& model, const SimRun& run);

/// Run i uses seed derive_seed(seed, "sim", i). Output is independent of
/// `jobs`.
Dataset simulate_batch(const LoadedModel& model, const SimRun& tmpl, int n_runs, std::uint64_t seed,
                       int jobs = 1);

/// Largest ratio, over windows of the receive timeline, between the delivered
/// rate and mtu * 8 / d_trans. The first arrival of each window is not
/// counted, so a FIFO link of that bandwidth never exceeds 1.
double max_rate_ratio(const Trace& trace, double d_trans, std::uint32_t mtu = kDefaultMtu,
                      double window_len = kDefaultWindowLen);

}  // namespace ndnet
