#include "ndnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ndnet/parallel.hpp"
#include "ndnet/training.hpp"

namespace ndnet {

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein_1d on empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double x = std::min(a[0], b[0]);
  double area = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = j >= b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    area += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - x);
    x = next;
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
  }
  return area;
}

namespace {

// Successive shortest paths on the dense bipartite transportation graph.
// Supplies m/g per source point and demands n/g per sink point make every
// unit of flow carry equal mass.
double transport(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  const auto m = static_cast<std::size_t>(cost.cols());
  const long long g = std::gcd(static_cast<long long>(n), static_cast<long long>(m));
  std::vector<long long> sup(n, static_cast<long long>(m) / g), dem(m, static_cast<long long>(n) / g);
  const long long total = static_cast<long long>(n) * static_cast<long long>(m) / g;
  std::vector<long long> flow(n * m, 0);
  const std::size_t N = n + m + 2, S = n + m, T = n + m + 1;
  std::vector<double> pot(N, 0.0), dist(N);
  std::vector<std::size_t> prev(N);
  std::vector<char> done(N);
  constexpr double inf = std::numeric_limits<double>::infinity();
  long long sent = 0;
  while (sent < total) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(done.begin(), done.end(), 0);
    dist[S] = 0.0;
    for (;;) {
      std::size_t u = N;
      for (std::size_t v = 0; v < N; ++v) {
        if (!done[v] && dist[v] < inf && (u == N || dist[v] < dist[u])) u = v;
      }
      if (u == N) break;
      done[u] = 1;
      auto relax = [&](std::size_t v, double c) {
        const double nd = dist[u] + std::max(0.0, c + pot[u] - pot[v]);
        if (nd < dist[v]) {
          dist[v] = nd;
          prev[v] = u;
        }
      };
      if (u == S) {
        for (std::size_t i = 0; i < n; ++i) {
          if (sup[i] > 0) relax(i, 0.0);
        }
      } else if (u < n) {
        for (std::size_t j = 0; j < m; ++j) relax(n + j, cost(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j)));
      } else if (u < n + m) {
        const std::size_t j = u - n;
        for (std::size_t i = 0; i < n; ++i) {
          if (flow[i * m + j] > 0) relax(i, -cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        }
        if (dem[j] > 0) relax(T, 0.0);
      }
    }
    if (!(dist[T] < inf)) throw std::logic_error("transport: no augmenting path");
    for (std::size_t v = 0; v < N; ++v) pot[v] += std::min(dist[v], dist[T]);
    long long push = total - sent;
    for (std::size_t v = T; v != S; v = prev[v]) {
      const std::size_t u = prev[v];
      if (u == S) push = std::min(push, sup[v]);
      else if (v == T) push = std::min(push, dem[u - n]);
      else if (u >= n) push = std::min(push, flow[v * m + (u - n)]);
    }
    for (std::size_t v = T; v != S; v = prev[v]) {
      const std::size_t u = prev[v];
      if (u == S) sup[v] -= push;
      else if (v == T) dem[u - n] -= push;
      else if (u < n) flow[u * m + (v - n)] += push;
      else flow[v * m + (u - n)] -= push;
    }
    sent += push;
  }
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (flow[i * m + j] > 0) c += static_cast<double>(flow[i * m + j]) * cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return c / static_cast<double>(total);
}

double unit(double v, const Range& r) {
  const double span = r.max - r.min;
  return span > 0.0 ? (v - r.min) / span : 0.0;
}

}  // namespace

double wasserstein_2d(const std::vector<Point2>& a, const std::vector<Point2>& b, const Range& rx, const Range& ry) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein_2d on empty sample");
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::hypot(unit(a[i].x, rx) - unit(b[j].x, rx), unit(a[i].y, ry) - unit(b[j].y, ry));
    }
  }
  return transport(cost);
}

double mmd_rbf(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b, double zeta) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mmd_rbf on empty sample");
  if (!(zeta > 0.0)) throw std::invalid_argument("zeta must be > 0");
  const Eigen::Index dim = a[0].size();
  for (const auto* s : {&a, &b}) {
    for (const auto& v : *s) {
      if (v.size() != dim) throw std::invalid_argument("mmd_rbf dimension mismatch");
    }
  }
  auto mean_k = [&](const std::vector<Eigen::VectorXd>& p, const std::vector<Eigen::VectorXd>& q) {
    double s = 0.0;
    for (const auto& x : p) {
      for (const auto& y : q) s += std::exp(-zeta * (x - y).squaredNorm());
    }
    return s / (static_cast<double>(p.size()) * static_cast<double>(q.size()));
  };
  return mean_k(a, a) + mean_k(b, b) - 2.0 * mean_k(a, b);
}

namespace {

struct PacketFeat {
  std::vector<std::array<double, 3>> rows;
  std::string tag;
};

PacketFeat packet_features(const Trace& t) {
  PacketFeat f;
  f.tag = t.config_tag;
  for (const auto& p : t.packets) {
    f.rows.push_back({p.delay.dropped() ? 1.0 : 0.0,
                      p.delay.dropped() ? t.static_features.y_max : p.delay.seconds(), p.spacing});
  }
  return f;
}

}  // namespace

std::vector<MmdPoint> mmd_chunk_curve(const Dataset& real, const Dataset& synth, const MmdOptions& o) {
  if (o.chunk_len < o.mini_len || o.mini_len < 1 || o.chunk_stride < 1) {
    throw std::invalid_argument("invalid chunk lengths");
  }
  std::vector<PacketFeat> r, s;
  for (const auto& t : real.traces) r.push_back(packet_features(t));
  for (const auto& t : synth.traces) s.push_back(packet_features(t));
  std::array<double, 3> lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  std::size_t max_len = 0;
  for (const auto* side : {&r, &s}) {
    for (const auto& f : *side) {
      for (const auto& row : f.rows) {
        for (int d = 0; d < 3; ++d) {
          lo[d] = std::min(lo[d], row[d]);
          hi[d] = std::max(hi[d], row[d]);
        }
      }
    }
  }
  for (const auto& f : r) max_len = std::max(max_len, f.rows.size());

  std::set<std::string> tags_r, tags_s;
  for (const auto& f : r) tags_r.insert(f.tag);
  for (const auto& f : s) tags_s.insert(f.tag);
  std::vector<std::string> shared;
  std::set_intersection(tags_r.begin(), tags_r.end(), tags_s.begin(), tags_s.end(), std::back_inserter(shared));
  const bool pooled = shared.empty();
  if (pooled) shared.push_back({});

  const auto L = static_cast<std::size_t>(o.chunk_len);
  const auto n = static_cast<std::size_t>(o.mini_len);
  std::vector<std::size_t> starts;
  for (std::size_t c = 0; c + L <= max_len; c += static_cast<std::size_t>(o.chunk_stride)) starts.push_back(c);

  auto vectors = [&](const std::vector<PacketFeat>& side, std::size_t start, const std::string& tag) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& f : side) {
      if (!pooled && f.tag != tag) continue;
      if (f.rows.size() < start + L) continue;
      for (std::size_t m = 0; m + n <= L; m += n) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(3 * n));
        for (std::size_t k = 0; k < n; ++k) {
          const auto& row = f.rows[start + m + k];
          for (int d = 0; d < 3; ++d) {
            const double span = hi[d] - lo[d];
            v(static_cast<Eigen::Index>(3 * k + static_cast<std::size_t>(d))) = span > 0.0 ? (row[d] - lo[d]) / span : 0.0;
          }
        }
        out.push_back(std::move(v));
      }
    }
    return out;
  };

  std::vector<std::optional<MmdPoint>> pts(starts.size());
  parallel_for(starts.size(), o.jobs, [&](std::size_t ci) {
    double sum = 0.0;
    int groups = 0;
    for (const auto& tag : shared) {
      const auto va = vectors(r, starts[ci], tag);
      const auto vb = vectors(s, starts[ci], tag);
      if (va.empty() || vb.empty()) continue;
      sum += mmd_rbf(va, vb, o.zeta);
      ++groups;
    }
    if (groups > 0) pts[ci] = MmdPoint{starts[ci], sum / groups};
  });
  std::vector<MmdPoint> curve;
  for (const auto& p : pts) {
    if (p) curve.push_back(*p);
  }
  return curve;
}

double reorder_fraction(const Trace& trace) {
  const auto flags = overtaken_flags(trace);
  const std::size_t delivered = trace.delivered_count();
  if (delivered == 0) return 0.0;
  return static_cast<double>(std::count(flags.begin(), flags.end(), true)) / static_cast<double>(delivered);
}

std::vector<CdfPoint> reorder_cdf(const Dataset& data) {
  std::vector<double> f;
  for (const auto& t : data.traces) f.push_back(reorder_fraction(t));
  std::sort(f.begin(), f.end());
  std::vector<CdfPoint> out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double p = static_cast<double>(i + 1) / static_cast<double>(f.size());
    if (!out.empty() && out.back().value == f[i]) out.back().prob = p;
    else out.push_back({f[i], p});
  }
  return out;
}

double mean_throughput(const Trace& trace, double window_len) {
  const WindowGrid grid = assign_windows(trace, window_len);
  double bits = 0.0;
  for (const auto& p : trace.packets) {
    if (p.delay.delivered()) bits += 8.0 * p.size;
  }
  return bits / (static_cast<double>(grid.n_windows) * window_len);
}

double mean_delay(const Trace& trace) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& p : trace.packets) {
    if (!p.delay.delivered()) continue;
    s += p.delay.seconds();
    ++n;
  }
  if (n == 0) throw std::invalid_argument("no delivered packets");
  return s / static_cast<double>(n);
}

double p95_delay(const Trace& trace) {
  std::vector<double> d;
  for (const auto& p : trace.packets) {
    if (p.delay.delivered()) d.push_back(p.delay.seconds());
  }
  return percentile(std::move(d), 95.0);
}

namespace {

Range pooled(const std::vector<double>& a, const std::vector<double>& b) {
  Range r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto* v : {&a, &b}) {
    for (double x : *v) {
      r.min = std::min(r.min, x);
      r.max = std::max(r.max, x);
    }
  }
  return r;
}

double mean_reorder(const Dataset& d) {
  if (d.traces.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : d.traces) s += reorder_fraction(t);
  return s / static_cast<double>(d.traces.size());
}

}  // namespace

MetricsReport evaluate(const Dataset& real, const Dataset& synth, const EvalOptions& o) {
  if (real.traces.empty() || synth.traces.empty()) throw std::invalid_argument("evaluate needs two non-empty datasets");
  std::vector<double> tr, ts, mr, ms, pr, ps;
  for (const auto& t : real.traces) {
    tr.push_back(mean_throughput(t));
    mr.push_back(mean_delay(t));
    pr.push_back(p95_delay(t));
  }
  for (const auto& t : synth.traces) {
    ts.push_back(mean_throughput(t));
    ms.push_back(mean_delay(t));
    ps.push_back(p95_delay(t));
  }
  MetricsReport rep;
  rep.wd1_mean_delay = wasserstein_1d(mr, ms);
  rep.wd1_p95_delay = wasserstein_1d(pr, ps);
  rep.tput_range = pooled(tr, ts);
  rep.mean_delay_range = pooled(mr, ms);
  rep.p95_delay_range = pooled(pr, ps);
  auto points = [](const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<Point2> p;
    for (std::size_t i = 0; i < x.size(); ++i) p.push_back({x[i], y[i]});
    return p;
  };
  rep.wd2_tput_mean_delay = wasserstein_2d(points(tr, mr), points(ts, ms), rep.tput_range, rep.mean_delay_range);
  rep.wd2_tput_p95_delay = wasserstein_2d(points(tr, pr), points(ts, ps), rep.tput_range, rep.p95_delay_range);
  rep.mmd_curve = mmd_chunk_curve(real, synth, o.mmd);
  rep.reorder_cdf_real = reorder_cdf(real);
  rep.reorder_cdf_synth = reorder_cdf(synth);
  rep.mean_reorder_real = mean_reorder(real);
  rep.mean_reorder_synth = mean_reorder(synth);
  if (o.discriminator) rep.disc_score = discriminative_score(real, synth, o.seed);
  return rep;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  using nlohmann::json;
  auto range = [](const Range& x) { return json::array({x.min, x.max}); };
  json curve = json::array();
  for (const auto& p : r.mmd_curve) curve.push_back({{"chunk_start", p.chunk_start}, {"mmd2", p.mmd2}});
  auto cdf = [](const std::vector<CdfPoint>& c) {
    json a = json::array();
    for (const auto& p : c) a.push_back({{"fraction", p.value}, {"prob", p.prob}});
    return a;
  };
  json j = {{"wd1_mean_delay", r.wd1_mean_delay},
            {"wd1_p95_delay", r.wd1_p95_delay},
            {"wd2_tput_mean_delay", r.wd2_tput_mean_delay},
            {"wd2_tput_p95_delay", r.wd2_tput_p95_delay},
            {"normalization",
             {{"throughput", range(r.tput_range)},
              {"mean_delay", range(r.mean_delay_range)},
              {"p95_delay", range(r.p95_delay_range)}}},
            {"mmd_curve", curve},
            {"reorder_cdf", {{"real", cdf(r.reorder_cdf_real)}, {"synth", cdf(r.reorder_cdf_synth)}}},
            {"mean_reorder", {{"real", r.mean_reorder_real}, {"synth", r.mean_reorder_synth}}}};
  j["disc_score"] = r.disc_score ? json(*r.disc_score) : json(nullptr);
  return j;
}

std::string report_to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "metric,key,value\n";
  os << "wd1_mean_delay,," << r.wd1_mean_delay << '\n';
  os << "wd1_p95_delay,," << r.wd1_p95_delay << '\n';
  os << "wd2_tput_mean_delay,," << r.wd2_tput_mean_delay << '\n';
  os << "wd2_tput_p95_delay,," << r.wd2_tput_p95_delay << '\n';
  os << "mean_reorder_real,," << r.mean_reorder_real << '\n';
  os << "mean_reorder_synth,," << r.mean_reorder_synth << '\n';
  if (r.disc_score) os << "disc_score,," << *r.disc_score << '\n';
  for (const auto& p : r.mmd_curve) os << "mmd2," << p.chunk_start << ',' << p.mmd2 << '\n';
  for (const auto& p : r.reorder_cdf_real) os << "reorder_cdf_real," << p.value << ',' << p.prob << '\n';
  for (const auto& p : r.reorder_cdf_synth) os << "reorder_cdf_synth," << p.value << ',' << p.prob << '\n';
  return os.str();
}

}  // namespace ndnet
