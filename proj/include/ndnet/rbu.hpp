#pragma once

// Recurrent Buffering Unit: bounded-sigmoid path-parameter heads, the
// window-level LSTM over static features, and the packet-level buffering
// recurrences (single- and two-path). Packet-level math is templated so the
// same code runs on doubles (simulation) and tape variables (training).

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ndnet/autodiff.hpp"
#include "ndnet/core.hpp"
#include "ndnet/rng.hpp"
#include "ndnet/trace_io.hpp"

namespace ndnet {

using XNorm = std::array<double, 3>;

struct HeuristicParams {
  double d_prop = 0.0;
  double d_trans = 0.0;
  double tau = 0.0;
};

/// d_prop = rho * y_min, d_trans = mtu * 8 / p95, tau = y_max - d_prop.
/// Throws std::invalid_argument when tau <= 0.
HeuristicParams heuristic_path_params(const StaticFeatures& x, std::uint32_t mtu = kDefaultMtu,
                                      double rho = 0.9);

/// Bounds of the second-queue size relative to the first.
inline constexpr double kScaleLo = 0.5;
inline constexpr double kScaleHi = 4.0;

template <class T>
struct GHeadT {
  std::array<T, 3> w;
  T bias;
};

/// (b - a) * sigmoid(<w, x> + bias) + a. Throws when a >= b.
template <class T>
T g_bounded(const XNorm& x, const GHeadT<T>& head, double a, double b) {
  if (!(a < b)) throw std::invalid_argument("g_bounded needs a < b");
  T z = head.w[0] * x[0] + head.w[1] * x[1] + head.w[2] * x[2] + head.bias;
  return (b - a) * sigmoid(z) + a;
}

template <class T>
struct PacketCellT {
  std::array<T, 5> wh;  // W_h over input5
  T bh;
  T uh;  // U_h
  T wc;  // w_c
  T bc;
};

template <class T>
struct BufferParamsT {
  GHeadT<T> prop, trans, tau;
  GHeadT<T> scale, trans2;  // two-path only
  PacketCellT<T> cell;
};

template <class T>
struct PathParamsT {
  T d_prop;
  T d_trans;  // for an mtu-sized packet
  T tau;
  T d_trans2;
  T tau2;
};

template <class T>
PathParamsT<T> path_params(const BufferParamsT<T>& p, const XNorm& xn, const StaticFeatures& x,
                           bool multipath) {
  PathParamsT<T> out{g_bounded(xn, p.prop, 0.0, x.y_min), g_bounded(xn, p.trans, 0.0, x.y_min),
                     g_bounded(xn, p.tau, 0.0, x.y_max), T{}, T{}};
  if (multipath) {
    out.d_trans2 = g_bounded(xn, p.trans2, 0.0, x.y_min);
    out.tau2 = out.tau * g_bounded(xn, p.scale, kScaleLo, kScaleHi);
  } else {
    out.d_trans2 = out.d_trans;
    out.tau2 = out.tau;
  }
  return out;
}

/// Per-packet features other than the window state.
struct PacketInput {
  double spacing = 0.0;         // s_t
  double size_norm = 1.0;       // size / mtu
  double window_elapsed = 0.0;  // fraction of the current window elapsed
  double y_max = 1.0;           // trace scale for normalization
};

/// c_t = (1 - gamma) c_w + gamma sigmoid(w_c h_{t-1} + b_c)
template <class T>
T cross_traffic_c(const PacketCellT<T>& cell, const T& c_w, const T& h_prev, double gamma) {
  return (1.0 - gamma) * c_w + gamma * sigmoid(cell.wc * h_prev + cell.bc);
}

/// h_t = sigmoid(<W_h, input5> + b_h + U_h h_{t-1}) with
/// input5 = [c_w, min(s_t/y_max, 1), size/mtu, d_prev/y_max, window fraction]
/// where s_t is the raw spacing of the packet.
template <class T>
T hidden_update(const PacketCellT<T>& cell, const T& c_w, const PacketInput& in, const T& d_prev,
                const T& h_prev) {
  const double s_norm = std::min(in.spacing / in.y_max, 1.0);
  T z = cell.wh[0] * c_w + cell.wh[1] * s_norm + cell.wh[2] * in.size_norm +
        cell.wh[3] * (d_prev / in.y_max) + cell.wh[4] * in.window_elapsed + cell.bh + cell.uh * h_prev;
  return sigmoid(z);
}

template <class T>
struct BottleneckOut {
  T a;
  T d;
};

/// a_t = d_trans + ReLU(d_{t-1} - s_t), d_t = a_t + c_t (tau - a_t)
template <class T, class S>
BottleneckOut<T> bottleneck_step(const T& d_prev, const S& s, const T& c, const T& d_trans, const T& tau) {
  T a = d_trans + relu(d_prev - s);
  T d = a + c * (tau - a);
  return {a, d};
}

/// sigmoid(kappa (d - tau))
template <class T>
T drop_probability(const T& d, const T& tau, double kappa) {
  return sigmoid(kappa * (d - tau));
}

/// Hard rule: a packet is dropped iff d > tau.
inline bool hard_drop(double d, double tau) { return d > tau; }

template <class T>
struct PacketOut {
  T c;
  T a;
  T d;
  T y;
  T p;
};

/// Single-path state. A dropped packet never enters the buffer, so it leaves
/// d_prev untouched and its spacing carries over in `elapsed`.
template <class T>
struct RbuStateT {
  T d_prev;
  T h;
  double elapsed = 0.0;
};

template <class T>
RbuStateT<T> initial_state(const T& zero) {
  return {zero, zero, 0.0};
}

/// Outputs of one packet through the single-path unit, without touching
/// the state. The spacing seen by the buffer includes the spacing of
/// preceding dropped packets.
template <class T>
PacketOut<T> rbu_forward(const PathParamsT<T>& path, const PacketCellT<T>& cell, const T& c_w,
                         const PacketInput& in, double gamma, double kappa, const RbuStateT<T>& st) {
  const double s = st.elapsed + in.spacing;
  T c = cross_traffic_c(cell, c_w, st.h, gamma);
  T d_trans = path.d_trans * in.size_norm;
  auto bn = bottleneck_step(st.d_prev, s, c, d_trans, path.tau);
  T y = bn.d + path.d_prop;
  T p = drop_probability(bn.d, path.tau, kappa);
  return {c, bn.a, bn.d, y, p};
}

/// Advances the state past a packet; `accepted` is false when the packet
/// was dropped.
template <class T>
void rbu_commit(RbuStateT<T>& st, const PacketCellT<T>& cell, const T& c_w, const PacketInput& in,
                const PacketOut<T>& out, bool accepted) {
  st.h = hidden_update(cell, c_w, in, st.d_prev, st.h);
  if (accepted) {
    st.d_prev = out.d;
    st.elapsed = 0.0;
  } else {
    st.elapsed += in.spacing;
  }
}

/// Two-path state: per-queue last delay and time elapsed since the queue
/// last accepted a packet.
template <class T>
struct MultiStateT {
  std::array<T, 2> d_prev;
  std::array<T, 2> s;
  T h;
};

template <class T>
MultiStateT<T> initial_multi_state(const T& zero) {
  return {{zero, zero}, {zero, zero}, zero};
}

/// Packet t through queue k (0 or 1). Other queues keep their state apart
/// from their elapsed counters. Set accepted=false for a dropped packet.
template <class T>
PacketOut<T> multipath_step(const PathParamsT<T>& path, const PacketCellT<T>& cell, const T& c_w,
                            const PacketInput& in, double gamma, double kappa, int k,
                            bool accepted, MultiStateT<T>& st) {
  if (k != 0 && k != 1) throw std::invalid_argument("queue index must be 0 or 1");
  st.s[0] = st.s[0] + in.spacing;
  st.s[1] = st.s[1] + in.spacing;
  T c = cross_traffic_c(cell, c_w, st.h, gamma);
  const T& tau = k == 0 ? path.tau : path.tau2;
  T d_trans = (k == 0 ? path.d_trans : path.d_trans2) * in.size_norm;
  auto bn = bottleneck_step(st.d_prev[k], st.s[k], c, d_trans, tau);
  st.h = hidden_update(cell, c_w, in, st.d_prev[k], st.h);
  if (accepted) {
    st.d_prev[k] = bn.d;
    st.s[k] = st.s[k] * 0.0;
  }
  return {c, bn.a, bn.d, bn.d + path.d_prop, drop_probability(bn.d, tau, kappa)};
}

/// Training relaxation: queue 1 is taken with probability q, and outputs
/// and state updates are the q-weighted mix over both queues.
template <class T>
PacketOut<T> multipath_soft_step(const PathParamsT<T>& path, const PacketCellT<T>& cell,
                                 const T& c_w, const T& q, const PacketInput& in, double gamma,
                                 double kappa, bool accepted, MultiStateT<T>& st) {
  st.s[0] = st.s[0] + in.spacing;
  st.s[1] = st.s[1] + in.spacing;
  T c = cross_traffic_c(cell, c_w, st.h, gamma);
  auto b0 = bottleneck_step(st.d_prev[0], st.s[0], c, path.d_trans * in.size_norm, path.tau);
  auto b1 = bottleneck_step(st.d_prev[1], st.s[1], c, path.d_trans2 * in.size_norm, path.tau2);
  T w1 = q;
  T w0 = 1.0 - q;
  T a = w0 * b0.a + w1 * b1.a;
  T d = w0 * b0.d + w1 * b1.d;
  T p = w0 * drop_probability(b0.d, path.tau, kappa) + w1 * drop_probability(b1.d, path.tau2, kappa);
  st.h = hidden_update(cell, c_w, in, w0 * st.d_prev[0] + w1 * st.d_prev[1], st.h);
  if (accepted) {
    st.d_prev[0] = w0 * b0.d + w1 * st.d_prev[0];
    st.d_prev[1] = w1 * b1.d + w0 * st.d_prev[1];
    st.s[0] = w1 * st.s[0];
    st.s[1] = w0 * st.s[1];
  }
  return {c, a, d, d + path.d_prop, p};
}

enum class BinMode { ArgMax, Sample, Expected };

/// Argmax picks the lowest index among ties.
int select_bin(const Eigen::VectorXd& probs, BinMode mode, Rng& rng);

struct RbuConfig {
  int hidden = 256;
  int layers = 2;
  int n_bins = 100;
  double gamma = 0.1;
  double kappa = 200.0;
  double rho = 0.9;
  bool multipath = false;
  bool q_bins = false;  // 100-bin q head instead of a scalar Bernoulli head
  std::uint32_t mtu = kDefaultMtu;
  double window_len = kDefaultWindowLen;
  double weight_decay = 1e-5;
};

/// Parameter layout and initialization of the full model.
class RbuModel {
 public:
  RbuModel() = default;
  RbuModel(const RbuConfig& config, std::uint64_t seed);

  RbuConfig config;
  ParamStore store;
  std::vector<LstmLayer> lstm;
  int out_c_w = -1, out_c_b = -1;
  int out_q_w = -1, out_q_b = -1;
  int g_prop = -1, g_trans = -1, g_tau = -1, g_scale = -1, g_trans2 = -1;
  int cell_wh = -1, cell_bh = -1, cell_uh = -1, cell_wc = -1, cell_bc = -1;

  /// Number of scalars in the packet-level group.
  std::size_t n_buffer_scalars() const;

  /// Rebuilds the index fields after the store was loaded by name.
  void bind_indices();
};

BufferParamsT<double> buffer_values(const RbuModel& m);
BufferParamsT<Var> buffer_vars(Tape& tape, const RbuModel& m);

struct WindowForward {
  std::vector<Var> c_logits;  // n_bins x B per window
  std::vector<Var> q_logits;  // 1 x B (or n_bins x B) per window, two-path only
};

/// Unrolls the window LSTM for n_windows steps with constant input x_norm
/// (3 x B, one column per trace).
WindowForward window_forward(Tape& tape, const RbuModel& m, const Mat& x_norm, std::size_t n_windows);

/// Per-window c_w and q_w for one trace, chosen by `mode`. ArgMax and Sample
/// map the chosen bin back to a value with a uniform draw inside the bin.
struct WindowPlan {
  std::vector<double> c_w;
  std::vector<double> q_w;
  std::vector<Eigen::VectorXd> c_probs;
};

WindowPlan plan_windows(const RbuModel& m, const XNorm& x_norm, std::size_t n_windows, BinMode mode,
                        Rng& rng);

/// Inverts the single-path recurrences with gamma = 0 to recover per-packet
/// cross-traffic estimates from observed delays.
struct InversionResult {
  std::vector<std::optional<double>> c_tilde;  // nullopt for dropped packets
  std::vector<Eigen::VectorXd> window_hist;    // empty vector for windows without deliveries
  std::size_t n_clamped = 0;
  std::size_t n_degenerate = 0;
};

InversionResult invert_cross_traffic(const Trace& trace, const HeuristicParams& params,
                                     const WindowGrid& grid, const Discretizer& disc,
                                     std::uint32_t mtu = kDefaultMtu);

}  // namespace ndnet
