#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ndnet/training.hpp"

namespace ndnet {

namespace {

using Seq = std::vector<std::array<double, 3>>;

Seq window_features(const Trace& t, double L) {
  const WindowGrid grid = assign_windows(t, L);
  const auto ranges = grid.ranges();
  Seq out(grid.n_windows, {0.0, 0.0, 0.0});
  for (std::size_t w = 0; w < grid.n_windows; ++w) {
    const auto [first, last] = ranges[w];
    double bits = 0.0, delay = 0.0;
    std::size_t delivered = 0;
    for (std::size_t k = first; k < last; ++k) {
      const auto& p = t.packets[k];
      if (!p.delay.delivered()) continue;
      bits += 8.0 * p.size;
      delay += p.delay.seconds();
      ++delivered;
    }
    out[w][0] = bits / L;
    out[w][1] = delivered ? delay / static_cast<double>(delivered) : 0.0;
    out[w][2] = last > first ? 1.0 - static_cast<double>(delivered) / static_cast<double>(last - first) : 0.0;
  }
  return out;
}

}  // namespace

double discriminative_score(const Dataset& real, const Dataset& synth, std::uint64_t seed,
                            const DiscriminatorConfig& cfg) {
  if (real.traces.size() < 10 || synth.traces.size() < 10) {
    throw std::invalid_argument("discriminative score needs at least 10 traces per side");
  }
  if (cfg.hidden < 1 || cfg.layers < 1 || cfg.iterations < 1 || cfg.max_len < 1) {
    throw std::invalid_argument("invalid discriminator config");
  }
  std::vector<Seq> seqs;
  std::vector<int> labels;
  for (const auto& t : real.traces) {
    seqs.push_back(window_features(t, cfg.window_len));
    labels.push_back(0);
  }
  for (const auto& t : synth.traces) {
    seqs.push_back(window_features(t, cfg.window_len));
    labels.push_back(1);
  }
  std::array<double, 3> lo{}, hi{};
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  std::size_t T = 0;
  for (const auto& s : seqs) {
    T = std::max(T, s.size());
    for (const auto& v : s) {
      for (int d = 0; d < 3; ++d) {
        lo[d] = std::min(lo[d], v[d]);
        hi[d] = std::max(hi[d], v[d]);
      }
    }
  }
  T = std::min(T, static_cast<std::size_t>(cfg.max_len));

  // Same split rule on each side keeps the classes balanced.
  Rng rng = make_rng(seed, "disc.split");
  std::vector<std::size_t> train_idx, test_idx;
  auto split_side = [&](std::size_t offset, std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), offset);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) (i < n_train ? train_idx : test_idx).push_back(perm[i]);
  };
  split_side(0, real.traces.size());
  split_side(real.traces.size(), synth.traces.size());

  auto inputs = [&](const std::vector<std::size_t>& idx) {
    std::vector<Mat> xs(T, Mat::Zero(3, static_cast<Eigen::Index>(idx.size())));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const Seq& s = seqs[idx[j]];
      for (std::size_t t = 0; t < std::min(T, s.size()); ++t) {
        for (int d = 0; d < 3; ++d) {
          const double span = hi[d] - lo[d];
          xs[t](d, static_cast<Eigen::Index>(j)) = span > 0.0 ? (s[t][d] - lo[d]) / span : 0.5;
        }
      }
    }
    return xs;
  };
  const auto x_train = inputs(train_idx);
  const auto x_test = inputs(test_idx);

  ParamStore store;
  Rng init = make_rng(seed, "disc.init");
  std::vector<GruLayer> gru;
  for (int l = 0; l < cfg.layers; ++l) {
    gru.push_back(make_gru_layer(store, "disc.gru" + std::to_string(l), l == 0 ? 3 : cfg.hidden, cfg.hidden,
                                 ParamGroup::Window, 0.0, init));
  }
  const double a = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  const int out_w = store.add("disc.out.w", uniform_matrix(1, cfg.hidden, a, init), ParamGroup::Window);
  const int out_b = store.add("disc.out.b", Mat::Zero(1, 1), ParamGroup::Window);

  auto forward = [&](Tape& tape, const std::vector<Mat>& xs) {
    const Eigen::Index B = xs.empty() ? 0 : xs[0].cols();
    std::vector<Var> h(gru.size());
    for (auto& v : h) v = tape.constant(Mat::Zero(cfg.hidden, B));
    for (const Mat& x : xs) {
      Var in = tape.constant(x);
      for (std::size_t l = 0; l < gru.size(); ++l) {
        h[l] = gru_cell(tape, store, gru[l], in, h[l]);
        in = h[l];
      }
    }
    return add_bias(matmul(tape.param(store, out_w), h.back()), tape.param(store, out_b));
  };

  Mat y1(1, static_cast<Eigen::Index>(train_idx.size())), y0(1, static_cast<Eigen::Index>(train_idx.size()));
  for (std::size_t j = 0; j < train_idx.size(); ++j) {
    const double lab = labels[train_idx[j]];
    y1(0, static_cast<Eigen::Index>(j)) = lab / static_cast<double>(train_idx.size());
    y0(0, static_cast<Eigen::Index>(j)) = (1.0 - lab) / static_cast<double>(train_idx.size());
  }
  const LearningRates lr{cfg.lr, cfg.lr};
  for (int it = 0; it < cfg.iterations; ++it) {
    Tape tape;
    Var logit = forward(tape, x_train);
    Var loss = sum(mul(softplus(-logit), tape.constant(y1))) + sum(mul(softplus(logit), tape.constant(y0)));
    store.zero_grad();
    tape.backward(loss, store);
    sgd_step(store, lr);
  }
  Tape tape;
  const Mat logits = forward(tape, x_test).value();
  std::size_t correct = 0;
  for (std::size_t j = 0; j < test_idx.size(); ++j) {
    const int pred = logits(0, static_cast<Eigen::Index>(j)) > 0.0 ? 1 : 0;
    correct += pred == labels[test_idx[j]];
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(test_idx.size());
  return std::abs(acc - 0.5);
}

}  // namespace ndnet
