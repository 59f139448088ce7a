#pragma once

// Joint training of the window model and the buffering unit, the LSTM
// baselines, and the discriminative-score classifier.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ndnet/autodiff.hpp"
#include "ndnet/checkpoint.hpp"
#include "ndnet/gradcheck.hpp"
#include "ndnet/rbu.hpp"
#include "ndnet/trace_io.hpp"

namespace ndnet {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  LearningRates lr;  // window 0.001, packet 0.01
  double lambda = 1.0;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  RbuConfig model;  // gamma, kappa, bins, hidden size, multipath
  /// Output bias of the c head starts at the log marginal target histogram.
  bool prior_bias_init = true;
  /// g heads start at a least-squares fit of the heuristic estimates.
  bool heuristic_head_init = true;
  int jobs = 1;
};

/// Per-trace quantities computed once before training.
struct PreparedTrace {
  const Trace* trace = nullptr;
  XNorm x_norm{};
  HeuristicParams heuristic;
  WindowGrid grid;
  std::vector<std::pair<std::size_t, std::size_t>> windows;  // packet ranges
  InversionResult inversion;
  std::vector<std::optional<double>> q_target;  // reordered fraction per window
};

/// Throws on an empty dataset or a trace shorter than one window.
std::vector<PreparedTrace> prepare_traces(const Dataset& data, const TrainConfig& config);

/// p CE(p_hat, 1) + (1 - p)(CE(p_hat, 0) + ((y_hat - y) / y_scale)^2), with
/// p_hat = sigmoid(logit).
double packet_loss(double y_hat, double logit, const Delay& y, double y_scale);
Var packet_loss(Var y_hat, Var logit, const Delay& y, double y_scale);

/// -sum_b target[b] log softmax(logits)[b]
double window_loss(const Eigen::VectorXd& logits, const Eigen::VectorXd& target);

struct Objective {
  Var total;  // j_pkt + lambda j_win
  Var j_pkt;
  Var j_win;
};

/// Full objective of a mini-batch: packet loss averaged over packets in a
/// window, then non-empty windows, then traces; window loss averaged over
/// non-empty windows, then traces.
Objective batch_objective(Tape& tape, const RbuModel& model,
                          const std::vector<const PreparedTrace*>& batch, const TrainConfig& config);

/// Sets g-head and output-bias initial values from the prepared data.
void init_from_data(RbuModel& model, const std::vector<PreparedTrace>& traces, const TrainConfig& config);

struct EpochStats {
  int epoch = 0;
  double j_pkt = 0.0;
  double j_win = 0.0;
  double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

struct TrainResult {
  RbuModel model;
  std::vector<EpochStats> history;
};

TrainResult train_rbu(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Teacher-forced fit of a model on one prepared trace: per-packet
/// predictions with the expected c_w of every window.
struct FitReport {
  double packet_loss = 0.0;            // same averaging as j_pkt
  double mean_norm_delay_error = 0.0;  // mean |y_hat - y| / y_max over delivered packets
  double drop_accuracy = 0.0;
};
FitReport evaluate_fit(const RbuModel& model, const PreparedTrace& trace);

/// Two short ground-truth traces (three windows each) for gradient checks.
Dataset micro_batch_dataset(std::uint64_t seed);

/// Full-objective gradient check on micro_batch_dataset(seed): every
/// packet-level scalar plus `n_window` sampled window-level scalars.
GradCheckResult objective_gradcheck(std::uint64_t seed, int n_window = 20, bool multipath = false);

Checkpoint make_rbu_checkpoint(const RbuModel& model, const Dataset& train);
RbuModel rbu_from_checkpoint(const Checkpoint& ckpt);
nlohmann::json rbu_config_to_json(const RbuConfig& c);
RbuConfig rbu_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// LSTM baselines

enum class BaselineKind { LstmWin, LstmPkt, LstmPktFifo };

std::string to_string(BaselineKind k);
BaselineKind baseline_kind_from_string(const std::string& s);

struct BaselineConfig {
  int hidden = 256;
  int layers = 2;
  int n_bins = 100;
  double window_len = kDefaultWindowLen;
  double weight_decay = 1e-5;
};

/// Window-level LSTM. Input per window: normalized static features, the
/// previous window's send rate over p95 throughput, its mean delay over
/// y_max and its drop fraction. Outputs a 100-bin distribution over
/// delay / y_max and a drop probability.
class BaselineModel {
 public:
  BaselineModel() = default;
  BaselineModel(const BaselineConfig& config, std::uint64_t seed);

  BaselineConfig config;
  ParamStore store;
  std::vector<LstmLayer> lstm;
  int out_y_w = -1, out_y_b = -1, out_drop_w = -1, out_drop_b = -1;

  void bind_indices();
};

inline constexpr int kBaselineInputs = 6;

/// Input features of window w given the packets of window w - 1.
Eigen::VectorXd baseline_window_input(const XNorm& x_norm, const StaticFeatures& x,
                                      std::span<const PacketRecord> prev_window, double window_len);

struct BaselineStep {
  Eigen::VectorXd y_probs;
  double drop_prob = 0.0;
};

/// Incremental inference state for one trace.
class BaselineRunner {
 public:
  explicit BaselineRunner(const BaselineModel& model);
  BaselineStep step(const Eigen::VectorXd& input);

 private:
  const BaselineModel* model_;
  std::vector<Eigen::MatrixXd> h_, c_;
};

struct BaselineTrainResult {
  BaselineModel model;
  std::vector<EpochStats> history;
};

/// Teacher-forced cross-entropy training. All three kinds share it; they
/// differ only at inference.
BaselineTrainResult train_baseline(const Dataset& data, const TrainConfig& config,
                                   const BaselineConfig& bconfig, const EpochCallback& on_epoch = {});

Checkpoint make_baseline_checkpoint(const BaselineModel& model, BaselineKind kind, const Dataset& train);
BaselineModel baseline_from_checkpoint(const Checkpoint& ckpt);

// ---------------------------------------------------------------------------
// Discriminative score

struct DiscriminatorConfig {
  int hidden = 2;
  int layers = 2;
  int iterations = 300;
  double lr = 0.5;
  double train_fraction = 0.8;
  double window_len = kDefaultWindowLen;
  int max_len = 600;  // windows per sequence
};

/// Per-window (throughput, mean delay, drop fraction) sequences, min-max
/// normalized over both datasets and padded or truncated to one length; a
/// two-layer GRU classifier trained on 80% of each side. Returns
/// |held-out accuracy - 0.5|. Throws when a side has fewer than 10 traces.
double discriminative_score(const Dataset& real, const Dataset& synth, std::uint64_t seed,
                            const DiscriminatorConfig& config = {});

}  // namespace ndnet
