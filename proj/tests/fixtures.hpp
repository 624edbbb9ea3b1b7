// Shared fixtures and independent oracles for the test suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "xeval/xeval.hpp"

namespace xeval::testing {

// Random dense network with the given widths (input first, classes last).
inline Model RandomModel(Rng& rng, const std::vector<std::size_t>& widths,
                         Activation act = Activation::LeakyRelu(0.01), double scale = 1.0) {
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    DenseLayer l;
    l.cols = widths[k];
    l.rows = widths[k + 1];
    for (std::size_t j = 0; j < l.rows * l.cols; ++j) l.weights.push_back(scale * rng.Normal());
    for (std::size_t j = 0; j < l.rows; ++j) l.bias.push_back(0.5 * scale * rng.Normal());
    layers.push_back(std::move(l));
  }
  return Model(std::move(layers), act);
}

// Single identity layer: logits = W x + b.
inline Model LinearModel(std::size_t rows, std::size_t cols, Vector weights, Vector bias) {
  DenseLayer l{rows, cols, std::move(weights), std::move(bias)};
  return Model({l}, Activation::Identity());
}

// Dense network with Glorot-scaled weights, the trainer's init distribution.
inline Model GlorotModel(Rng& rng, const std::vector<std::size_t>& widths,
                         Activation act = Activation::LeakyRelu(0.01)) {
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    DenseLayer l;
    l.cols = widths[k];
    l.rows = widths[k + 1];
    const double s = std::sqrt(2.0 / static_cast<double>(l.cols + l.rows));
    for (std::size_t j = 0; j < l.rows * l.cols; ++j) l.weights.push_back(s * rng.Normal());
    for (std::size_t j = 0; j < l.rows; ++j) l.bias.push_back(0.1 * rng.Normal());
    layers.push_back(std::move(l));
  }
  return Model(std::move(layers), act);
}

// One-logit linear model f(x) = w.x.
inline Model LinearScore(const Vector& w) {
  return LinearModel(1, w.size(), w, Vector{0.0});
}

inline Vector RandomVector(Rng& rng, std::size_t d, double scale = 1.0) {
  Vector v(d);
  for (double& x : v) x = scale * rng.Normal();
  return v;
}

// Straight re-implementation of the layer recurrence, kept separate from
// Model::Forward on purpose.
inline Vector HandForward(const Model& m, ConstSpan x) {
  std::vector<double> a(x.begin(), x.end());
  const auto& layers = m.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    std::vector<double> z(layers[k].rows);
    for (std::size_t r = 0; r < layers[k].rows; ++r) {
      long double acc = layers[k].bias[r];
      for (std::size_t c = 0; c < layers[k].cols; ++c) {
        acc += static_cast<long double>(layers[k].weights[r * layers[k].cols + c]) * a[c];
      }
      z[r] = static_cast<double>(acc);
      if (k + 1 < layers.size()) {
        const double s = m.activation().kind == ActivationKind::kLeakyRelu ? m.activation().slope
                         : m.activation().kind == ActivationKind::kRelu    ? 0.0
                                                                           : 1.0;
        if (m.activation().kind != ActivationKind::kIdentity && z[r] <= 0.0) z[r] *= s;
      }
    }
    a = std::move(z);
  }
  return a;
}

inline Vector FiniteDifferenceGradient(const Model& m, ConstSpan x, const Target& t, double h = 1e-4) {
  Vector g(x.size());
  Vector p(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = p[i];
    p[i] = xi + h;
    const double up = m.Evaluate(p, t);
    p[i] = xi - h;
    const double down = m.Evaluate(p, t);
    p[i] = xi;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Shapley value as the average marginal contribution over all d! orderings.
inline Vector PermutationShapley(const SetFunction& v, std::size_t d) {
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  Vector phi(d, 0.0);
  double count = 0.0;
  do {
    Coalition s = 0;
    double prev = v(0);
    for (std::size_t i : order) {
      s |= Coalition{1} << i;
      const double cur = v(s);
      phi[i] += cur - prev;
      prev = cur;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& p : phi) p /= count;
  return phi;
}

// Arbitrary game given by a random table.
inline std::vector<double> RandomGameTable(Rng& rng, std::size_t d) {
  std::vector<double> t(std::size_t{1} << d);
  for (double& v : t) v = rng.Normal();
  return t;
}

inline double MaxAbsDiff(ConstSpan a, ConstSpan b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Gaussian blobs, one per class, centred at the given points.
inline Dataset Blobs(Rng& rng, const std::vector<Vector>& centres, std::size_t per_class, double spread) {
  const std::size_t d = centres.front().size();
  Vector f;
  std::vector<int> labels;
  for (std::size_t c = 0; c < centres.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < d; ++j) f.push_back(centres[c][j] + spread * rng.Normal());
      labels.push_back(static_cast<int>(c));
    }
  }
  return Dataset(d, std::move(f), std::move(labels));
}

inline Dataset LoadIris() {
  return LoadCsv(std::string(XEVAL_DATA_DIR) + "/iris.csv", "species", true);
}

}  // namespace xeval::testing
