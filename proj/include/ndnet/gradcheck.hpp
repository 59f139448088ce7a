#pragma once

// Central finite-difference verification of tape gradients.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ndnet/autodiff.hpp"

namespace ndnet {

/// |a - f| / max(|a|, |f|, 1e-6)
double relative_error(double analytic, double numeric);

struct GradCheckEntry {
  std::string param;
  Eigen::Index index = 0;  // column-major offset within the parameter
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckResult {
  std::string label;
  std::size_t n_checked = 0;
  double max_rel_err = 0.0;
  GradCheckEntry worst;
};

using LossFn = std::function<Var(Tape&)>;
using ScalarRef = std::pair<int, Eigen::Index>;  // (param index, offset)

/// Every scalar of the store, or of one group.
std::vector<ScalarRef> all_scalars(const ParamStore& store);
std::vector<ScalarRef> group_scalars(const ParamStore& store, ParamGroup group);

/// Compares tape gradients of `loss` with central differences using step
/// rel_step * max(1, |theta|). The store is restored afterwards.
GradCheckResult check_gradients(ParamStore& store, const LossFn& loss,
                                const std::vector<ScalarRef>& which, double rel_step = 1e-5,
                                const std::string& label = {});

/// Randomized checks of every primitive op and of both recurrent cells.
std::vector<GradCheckResult> autodiff_suite(std::uint64_t seed, int runs = 10);

}  // namespace ndnet
