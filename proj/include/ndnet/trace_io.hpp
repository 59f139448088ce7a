#pragma once

// Dataset persistence (JSON Lines, one trace per line), static-feature
// normalization and equal-width discretization.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ndnet/core.hpp"
#include "ndnet/rng.hpp"

namespace ndnet {

inline constexpr int kTraceFormatVersion = 1;
inline constexpr const char* kTraceFileExtension = ".ndnet.jsonl";

enum class SplitTag { Train, Test };

std::string to_string(SplitTag tag);
SplitTag split_from_string(const std::string& s);

struct Range {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

/// Min/max of each static feature over a set of traces.
struct GlobalRanges {
  Range y_min;
  Range y_max;
  Range p95_throughput;
  friend bool operator==(const GlobalRanges&, const GlobalRanges&) = default;
};

GlobalRanges compute_ranges(const std::vector<Trace>& traces);

struct Dataset {
  std::vector<Trace> traces;
  SplitTag split = SplitTag::Train;
  GlobalRanges ranges;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Builds a dataset and records the ranges of its traces.
Dataset make_dataset(std::vector<Trace> traces, SplitTag split);

/// Writes the JSONL file at `path` and the `ranges.json` sidecar next to it.
/// Output bytes depend only on the dataset contents.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Reads a dataset written by write_dataset. Throws std::runtime_error naming
/// the line number on malformed input or a format version mismatch.
Dataset read_dataset(const std::filesystem::path& path);

std::filesystem::path ranges_sidecar_path(const std::filesystem::path& dataset_path);

/// Maps each feature to (v - min) / (max - min), clamped to [0, 1]. A
/// degenerate range maps to 0.5.
std::array<double, 3> normalize_static(const StaticFeatures& x, const GlobalRanges& ranges);

/// Equal-width bins over [lo, hi].
class Discretizer {
 public:
  explicit Discretizer(int n_bins = 100, double lo = 0.0, double hi = 1.0);

  int n_bins() const { return n_bins_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double width() const { return (hi_ - lo_) / n_bins_; }

  /// Clamps to [lo, hi] then floor-bins; hi maps to the last bin.
  int discretize(double value) const;
  double bin_center(int bin) const;
  /// Uniform draw within the bin's sub-range [lo + b*w, lo + (b+1)*w).
  double bin_to_value(int bin, Rng& rng) const;

  friend bool operator==(const Discretizer&, const Discretizer&) = default;

 private:
  int n_bins_;
  double lo_;
  double hi_;
};

}  // namespace ndnet
