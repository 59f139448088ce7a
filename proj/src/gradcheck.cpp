#include "ndnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ndnet {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

std::vector<ScalarRef> all_scalars(const ParamStore& store) {
  std::vector<ScalarRef> out;
  for (int p = 0; p < store.size(); ++p) {
    for (Eigen::Index i = 0; i < store[p].value.size(); ++i) out.emplace_back(p, i);
  }
  return out;
}

std::vector<ScalarRef> group_scalars(const ParamStore& store, ParamGroup group) {
  std::vector<ScalarRef> out;
  for (const auto& r : all_scalars(store)) {
    if (store[r.first].group == group) out.push_back(r);
  }
  return out;
}

GradCheckResult check_gradients(ParamStore& store, const LossFn& loss,
                                const std::vector<ScalarRef>& which, double rel_step,
                                const std::string& label) {
  std::vector<Mat> grads = store.zero_grads();
  {
    Tape tape;
    tape.backward(loss(tape), grads);
  }
  auto eval = [&] {
    Tape tape;
    return loss(tape).scalar();
  };
  GradCheckResult res;
  res.label = label;
  for (const auto& [p, i] : which) {
    double& theta = store[p].value.data()[i];
    const double saved = theta;
    const double h = rel_step * std::max(1.0, std::abs(saved));
    theta = saved + h;
    const double up = eval();
    theta = saved - h;
    const double down = eval();
    theta = saved;
    GradCheckEntry e;
    e.param = store[p].name;
    e.index = i;
    e.analytic = grads[static_cast<std::size_t>(p)].data()[i];
    e.numeric = (up - down) / (2.0 * h);
    e.rel_err = relative_error(e.analytic, e.numeric);
    if (res.n_checked == 0 || e.rel_err > res.max_rel_err) {
      res.max_rel_err = e.rel_err;
      res.worst = e;
    }
    ++res.n_checked;
  }
  return res;
}

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
  return m;
}

// Values bounded away from zero so relu stays off its kink.
Mat away_from_zero(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat m = random_mat(r, c, rng, 0.05, 1.0);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (std::bernoulli_distribution(0.5)(rng)) m.data()[i] = -m.data()[i];
  }
  return m;
}

struct OpCase {
  std::string name;
  std::function<void(ParamStore&, Rng&)> setup;
  std::function<Var(Tape&, const ParamStore&)> apply;
};

// Weighted sum so every output entry gets a distinct adjoint.
Var reduce(Tape& tape, Var y, std::uint64_t salt) {
  Rng rng(salt);
  return sum(y * tape.constant(random_mat(y.rows(), y.cols(), rng)));
}

std::vector<OpCase> op_cases() {
  auto two = [](Eigen::Index r, Eigen::Index c) {
    return [r, c](ParamStore& s, Rng& rng) {
      s.add("a", random_mat(r, c, rng), ParamGroup::Window);
      s.add("b", random_mat(r, c, rng), ParamGroup::Window);
    };
  };
  auto one = [](Eigen::Index r, Eigen::Index c) {
    return [r, c](ParamStore& s, Rng& rng) { s.add("a", random_mat(r, c, rng), ParamGroup::Window); };
  };
  auto A = [](Tape& t, const ParamStore& s) { return t.param(s, "a"); };
  auto B = [](Tape& t, const ParamStore& s) { return t.param(s, "b"); };
  std::vector<OpCase> cases;
  cases.push_back({"add", two(3, 2), [=](Tape& t, const ParamStore& s) { return add(A(t, s), B(t, s)); }});
  cases.push_back({"sub", two(3, 2), [=](Tape& t, const ParamStore& s) { return sub(A(t, s), B(t, s)); }});
  cases.push_back({"mul", two(3, 2), [=](Tape& t, const ParamStore& s) { return mul(A(t, s), B(t, s)); }});
  cases.push_back({"scale", one(3, 2), [=](Tape& t, const ParamStore& s) { return scale(A(t, s), -1.7); }});
  cases.push_back({"add_scalar", one(3, 2), [=](Tape& t, const ParamStore& s) { return add_scalar(A(t, s), 0.3); }});
  cases.push_back({"matmul",
                   [](ParamStore& s, Rng& rng) {
                     s.add("a", random_mat(4, 3, rng), ParamGroup::Window);
                     s.add("b", random_mat(3, 2, rng), ParamGroup::Window);
                   },
                   [=](Tape& t, const ParamStore& s) { return matmul(A(t, s), B(t, s)); }});
  cases.push_back({"add_bias",
                   [](ParamStore& s, Rng& rng) {
                     s.add("a", random_mat(4, 3, rng), ParamGroup::Window);
                     s.add("b", random_mat(4, 1, rng), ParamGroup::Window);
                   },
                   [=](Tape& t, const ParamStore& s) { return add_bias(A(t, s), B(t, s)); }});
  cases.push_back({"concat_rows",
                   [](ParamStore& s, Rng& rng) {
                     s.add("a", random_mat(2, 3, rng), ParamGroup::Window);
                     s.add("b", random_mat(4, 3, rng), ParamGroup::Window);
                   },
                   [=](Tape& t, const ParamStore& s) { return concat_rows({A(t, s), B(t, s), A(t, s)}); }});
  cases.push_back({"slice_rows", one(5, 2), [=](Tape& t, const ParamStore& s) { return slice_rows(A(t, s), 1, 3); }});
  cases.push_back({"col", one(3, 4), [=](Tape& t, const ParamStore& s) { return col(A(t, s), 2); }});
  cases.push_back({"select", one(3, 4), [=](Tape& t, const ParamStore& s) { return select(A(t, s), 1, 3); }});
  cases.push_back({"sigmoid", one(3, 2), [=](Tape& t, const ParamStore& s) { return sigmoid(A(t, s)); }});
  cases.push_back({"tanh", one(3, 2), [=](Tape& t, const ParamStore& s) { return tanh(A(t, s)); }});
  cases.push_back({"relu",
                   [](ParamStore& s, Rng& rng) { s.add("a", away_from_zero(3, 2, rng), ParamGroup::Window); },
                   [=](Tape& t, const ParamStore& s) { return relu(A(t, s)); }});
  cases.push_back({"softmax", one(5, 2), [=](Tape& t, const ParamStore& s) { return softmax(A(t, s)); }});
  cases.push_back({"log_softmax", one(5, 2), [=](Tape& t, const ParamStore& s) { return log_softmax(A(t, s)); }});
  cases.push_back({"log",
                   [](ParamStore& s, Rng& rng) { s.add("a", random_mat(3, 2, rng, 0.2, 2.0), ParamGroup::Window); },
                   [=](Tape& t, const ParamStore& s) { return log(A(t, s)); }});
  cases.push_back({"exp", one(3, 2), [=](Tape& t, const ParamStore& s) { return exp(A(t, s)); }});
  cases.push_back({"softplus", one(3, 2), [=](Tape& t, const ParamStore& s) { return softplus(A(t, s)); }});
  cases.push_back({"sum", one(3, 2), [=](Tape& t, const ParamStore& s) { return sum(A(t, s)); }});
  cases.push_back({"mean", one(3, 2), [=](Tape& t, const ParamStore& s) { return mean(A(t, s)); }});
  cases.push_back({"square", one(3, 2), [=](Tape& t, const ParamStore& s) { return square(A(t, s)); }});
  return cases;
}

void merge(GradCheckResult& into, const GradCheckResult& r) {
  if (into.n_checked == 0 || r.max_rel_err > into.max_rel_err) {
    into.max_rel_err = r.max_rel_err;
    into.worst = r.worst;
  }
  into.n_checked += r.n_checked;
}

}  // namespace

std::vector<GradCheckResult> autodiff_suite(std::uint64_t seed, int runs) {
  std::vector<GradCheckResult> out;
  const auto cases = op_cases();
  for (std::size_t k = 0; k < cases.size(); ++k) {
    GradCheckResult total;
    total.label = cases[k].name;
    for (int run = 0; run < runs; ++run) {
      Rng rng = make_rng(seed, "gradcheck." + cases[k].name, static_cast<std::uint64_t>(run));
      ParamStore store;
      cases[k].setup(store, rng);
      const std::uint64_t salt = rng();
      const auto& apply = cases[k].apply;
      LossFn loss = [&](Tape& t) { return reduce(t, apply(t, store), salt); };
      merge(total, check_gradients(store, loss, all_scalars(store)));
    }
    out.push_back(total);
  }

  GradCheckResult lstm;
  lstm.label = "lstm_cell";
  GradCheckResult gru;
  gru.label = "gru_cell";
  for (int run = 0; run < runs; ++run) {
    Rng rng = make_rng(seed, "gradcheck.cells", static_cast<std::uint64_t>(run));
    {
      ParamStore store;
      const LstmLayer layer = make_lstm_layer(store, "lstm", 3, 4, ParamGroup::Window, 0.0, rng);
      store.add("x", random_mat(3, 2, rng), ParamGroup::Window);
      store.add("h", random_mat(4, 2, rng), ParamGroup::Window);
      store.add("c", random_mat(4, 2, rng), ParamGroup::Window);
      const std::uint64_t salt = rng();
      LossFn loss = [&](Tape& t) {
        auto [h2, c2] = lstm_cell(t, store, layer, t.param(store, "x"), t.param(store, "h"), t.param(store, "c"));
        return sum(h2) + reduce(t, c2, salt);
      };
      merge(lstm, check_gradients(store, loss, all_scalars(store)));
    }
    {
      ParamStore store;
      const GruLayer layer = make_gru_layer(store, "gru", 3, 4, ParamGroup::Window, 0.0, rng);
      store.add("x", random_mat(3, 2, rng), ParamGroup::Window);
      store.add("h", random_mat(4, 2, rng), ParamGroup::Window);
      LossFn loss = [&](Tape& t) {
        return sum(gru_cell(t, store, layer, t.param(store, "x"), t.param(store, "h")));
      };
      merge(gru, check_gradients(store, loss, all_scalars(store)));
    }
  }
  out.push_back(lstm);
  out.push_back(gru);
  return out;
}

}  // namespace ndnet
