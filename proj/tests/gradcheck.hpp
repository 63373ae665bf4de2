#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fse/common.hpp"
#include "fse/esrm.hpp"
#include "fse/ranking.hpp"

namespace fse::testing {

inline std::string fmt_g(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", x);
  return buf;
}

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Relative error with a floor on the denominator so entries whose true
// gradient is ~0 are judged on absolute error instead.
inline double rel_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Fourth-order central difference. Its truncation error is O(h^4), so at
// the default step of 1e-4 rounding dominates and stays near 1e-12.
template <typename F>
double five_point(F&& at, double h) {
  return (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
}

// Central differences over every parameter entry of a for_each-visitable
// parameter struct. loss(params, grad*) must add its gradient into grad.
// Rounding in the difference quotient grows with |loss|, so the floor does too.
template <typename P, typename LossFn>
GradCheck check_param_gradients(const P& params, LossFn loss, double step = 1e-4) {
  P grad = params.zeros_like();
  const double floor = 1e-7 * std::max(1.0, std::abs(loss(params, &grad)));
  std::vector<std::pair<std::string, const double*>> analytic;
  grad.for_each([&](const char* name, const double* x, Eigen::Index, Eigen::Index) { analytic.emplace_back(name, x); });
  GradCheck out;
  P probe = params;
  std::size_t t = 0;
  probe.for_each([&](const char* name, double* x, Eigen::Index r, Eigen::Index c) {
    const double* g = analytic[t++].second;
    for (Eigen::Index i = 0; i < r * c; ++i) {
      const double keep = x[i];
      auto at = [&](double h) {
        x[i] = keep + h;
        const double v = loss(probe, nullptr);
        x[i] = keep;
        return v;
      };
      const double numeric = five_point(at, step);
      const double err = rel_error(g[i], numeric, floor);
      ++out.checked;
      if (err > out.max_rel) {
        out.max_rel = err;
        out.worst = std::string(name) + "[" + std::to_string(i) + "] analytic=" + fmt_g(g[i]) +
                    " numeric=" + fmt_g(numeric);
      }
    }
  });
  return out;
}

// Central differences of a scalar function of a list of vectors.
template <typename LossFn>
GradCheck check_vector_gradients(std::vector<Vec> xs, const std::vector<Vec>& grads, LossFn loss,
                                 double step = 1e-4) {
  GradCheck out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (Eigen::Index i = 0; i < xs[k].size(); ++i) {
      const double keep = xs[k][i];
      auto at = [&](double h) {
        xs[k][i] = keep + h;
        const double v = loss(xs);
        xs[k][i] = keep;
        return v;
      };
      const double err = rel_error(grads[k][i], five_point(at, step));
      ++out.checked;
      if (err > out.max_rel) {
        out.max_rel = err;
        out.worst = "input " + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

// Small random configuration: vocab <= 50, d <= 8.
struct ToyEsrm {
  MetadataSchema schema;
  EsrmParams params;
  std::vector<PreparedExercise> data;
};

inline ToyEsrm make_toy_esrm(std::uint64_t seed, int n_items = 5) {
  Rng rng(seed);
  ToyEsrm toy;
  const int vocab = 10 + static_cast<int>(rng.below(40));
  const int d = 2 + static_cast<int>(rng.below(7));
  toy.schema.n_concepts = 2 + static_cast<int>(rng.below(5));
  toy.schema.d_img = 2 + static_cast<int>(rng.below(5));
  toy.params = EsrmParams::init(vocab, d, toy.schema, seed);
  // larger weights than the default init so tanh leaves its linear regime
  toy.params.for_each([&](const char*, double* x, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c; ++i) x[i] = rng.uniform(-0.8, 0.8);
  });
  for (int k = 0; k < n_items; ++k) {
    PreparedExercise e;
    const auto len = 1 + rng.below(6);
    for (std::size_t i = 0; i < len; ++i) e.stem.push_back(static_cast<int>(rng.below(vocab)));
    const auto alen = rng.below(5);
    for (std::size_t i = 0; i < alen; ++i) e.analysis.push_back(static_cast<int>(rng.below(vocab)));
    e.targets.type = static_cast<int>(rng.below(toy.schema.types.size()));
    e.targets.difficulty = static_cast<int>(rng.below(toy.schema.difficulty_levels));
    e.targets.concepts = Vec::Zero(toy.schema.n_concepts);
    const auto nc = 1 + rng.below(static_cast<std::size_t>(toy.schema.n_concepts));
    for (auto c : rng.sample(static_cast<std::size_t>(toy.schema.n_concepts), nc))
      e.targets.concepts[static_cast<Eigen::Index>(c)] = 1.0 / static_cast<double>(nc);
    if (rng.bernoulli(0.8)) {
      Vec img(toy.schema.d_img);
      for (auto& v : img) v = rng.normal();
      e.image = img;
    }
    toy.data.push_back(std::move(e));
  }
  return toy;
}

// Random ranker with d <= 8, weights large enough to leave tanh's linear
// regime, plus a batch touching the requested tasks.
struct ToyRanker {
  RankerParams params;
  std::vector<TaskInstance> batch;
};

inline ToyRanker make_toy_ranker(std::uint64_t seed, std::array<bool, kTasks> tasks = {true, true, true}) {
  Rng rng(seed);
  const int vocab = 8 + static_cast<int>(rng.below(30));
  const int d = 2 + static_cast<int>(rng.below(7));
  ToyRanker toy;
  toy.params = RankerParams::init(TextEncoder::random(vocab, d, rng), seed);
  toy.params.for_each([&](const char*, double* x, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c; ++i) x[i] = rng.uniform(-0.8, 0.8);
  });
  auto tokens = [&] {
    std::vector<int> t(1 + rng.below(5));
    for (auto& id : t) id = static_cast<int>(rng.below(static_cast<std::size_t>(vocab)));
    return t;
  };
  for (int t = 0; t < kTasks; ++t) {
    if (!tasks[t]) continue;
    const auto n = 1 + rng.below(3);
    for (std::size_t k = 0; k < n; ++k)
      toy.batch.push_back({static_cast<Task>(t), tokens(), tokens(), static_cast<int>(rng.below(2))});
  }
  return toy;
}

}  // namespace fse::testing
