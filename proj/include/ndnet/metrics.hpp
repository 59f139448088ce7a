#pragma once

// Distributional fidelity metrics between a generated dataset and ground
// truth: 1D and 2D Wasserstein distances, chunked RBF-kernel MMD, the
// reordering CDF and the discriminative score.

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ndnet/core.hpp"
#include "ndnet/trace_io.hpp"

namespace ndnet {

/// Exact W1 between two empirical distributions (area between the CDFs).
/// Sample counts may differ. Throws on empty input.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Exact earth mover's distance with Euclidean ground cost between
/// equal-weight point sets, each coordinate mapped to (v - min) / (max - min)
/// first. Solved as a min-cost transportation problem.
double wasserstein_2d(const std::vector<Point2>& a, const std::vector<Point2>& b, const Range& rx = {0.0, 1.0},
                      const Range& ry = {0.0, 1.0});

/// Biased (V-statistic) MMD^2 with kernel exp(-zeta |x - y|^2), diagonal
/// terms included.
double mmd_rbf(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b, double zeta);

struct MmdOptions {
  double zeta = 1.0;
  int chunk_len = 50;
  int chunk_stride = 100;
  int mini_len = 15;
  int jobs = 1;
};

struct MmdPoint {
  std::size_t chunk_start = 0;
  double mmd2 = 0.0;
};

/// Per-packet (loss flag, delay, spacing), min-max normalized over both
/// datasets, with dropped delays imputed as the trace y_max. Chunks start at
/// 0, stride, 2 stride, ... while the longest real trace covers them; each
/// chunk is cut into mini-chunks flattened to 3 * mini_len vectors. Traces
/// too short for a chunk sit that chunk out. MMD^2 is averaged over
/// config tags shared by both sides, or pooled when there are none.
std::vector<MmdPoint> mmd_chunk_curve(const Dataset& real, const Dataset& synth, const MmdOptions& options = {});

/// Fraction of delivered packets overtaken by at least one later-sent packet.
double reorder_fraction(const Trace& trace);

struct CdfPoint {
  double value = 0.0;
  double prob = 0.0;
};

/// Empirical CDF of per-trace reorder fractions, one point per distinct value.
std::vector<CdfPoint> reorder_cdf(const Dataset& data);

/// Mean receive rate over the call (bits/second).
double mean_throughput(const Trace& trace, double window_len = kDefaultWindowLen);
double mean_delay(const Trace& trace);
double p95_delay(const Trace& trace);

struct MetricsReport {
  double wd1_mean_delay = 0.0;
  double wd1_p95_delay = 0.0;
  double wd2_tput_mean_delay = 0.0;
  double wd2_tput_p95_delay = 0.0;
  Range tput_range, mean_delay_range, p95_delay_range;  // pooled normalization ranges
  std::vector<MmdPoint> mmd_curve;
  std::vector<CdfPoint> reorder_cdf_real, reorder_cdf_synth;
  double mean_reorder_real = 0.0;
  double mean_reorder_synth = 0.0;
  std::optional<double> disc_score;
};

struct EvalOptions {
  MmdOptions mmd;
  bool discriminator = false;
  std::uint64_t seed = 0;
};

MetricsReport evaluate(const Dataset& real, const Dataset& synth, const EvalOptions& options = {});

nlohmann::json report_to_json(const MetricsReport& r);
/// Long-form rows: metric,key,value.
std::string report_to_csv(const MetricsReport& r);

}  // namespace ndnet
