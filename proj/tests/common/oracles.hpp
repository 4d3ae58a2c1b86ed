#pragma once

// Independent reference computations used as test oracles. Nothing here
// calls the library's backward pass or solvers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <variant>
#include <vector>

#include "roar/model.hpp"
#include "roar/tensor.hpp"

namespace roar::oracle {

/// Plain forward pass for one sample, written against the layer list.
inline std::vector<double> forward(const Model& model, const std::vector<double>& x) {
  std::vector<double> cur = x;
  for (const Layer& layer : model.layers()) {
    if (const auto* a = std::get_if<Affine>(&layer)) {
      std::vector<double> next(a->out_dim());
      for (std::size_t o = 0; o < a->out_dim(); ++o) {
        long double s = a->bias[o];
        for (std::size_t i = 0; i < a->in_dim(); ++i) s += static_cast<long double>(a->weight.at(o, i)) * cur[i];
        next[o] = static_cast<double>(s);
      }
      cur = std::move(next);
    } else {
      for (double& v : cur) v = std::max(v, 0.0);
    }
  }
  return cur;
}

/// Smallest |pre-activation| over every rectifier input for sample x.
inline double kink_distance(const Model& model, const std::vector<double>& x) {
  std::vector<double> cur = x;
  double closest = INFINITY;
  for (const Layer& layer : model.layers()) {
    if (const auto* a = std::get_if<Affine>(&layer)) {
      std::vector<double> next(a->out_dim());
      for (std::size_t o = 0; o < a->out_dim(); ++o) {
        double s = a->bias[o];
        for (std::size_t i = 0; i < a->in_dim(); ++i) s += a->weight.at(o, i) * cur[i];
        next[o] = s;
      }
      cur = std::move(next);
    } else {
      for (double& v : cur) {
        closest = std::min(closest, std::abs(v));
        v = std::max(v, 0.0);
      }
    }
  }
  return closest;
}

/// Central finite differences of output unit `unit`.
inline std::vector<double> fd_gradient(const Model& model, const std::vector<double>& x, std::size_t unit,
                                       double h) {
  std::vector<double> g(x.size());
  std::vector<double> xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double up = forward(model, xp)[unit];
    xp[i] = x[i] - h;
    const double down = forward(model, xp)[unit];
    xp[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Solves A x = b (A square, row-major) by Gaussian elimination with
/// partial pivoting.
inline std::vector<double> gauss_solve(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    }
    if (a[pivot * n + col] == 0.0) throw std::runtime_error("gauss_solve: singular");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t c = r + 1; c < n; ++c) s -= a[r * n + c] * x[c];
    x[r] = s / a[r * n + r];
  }
  return x;
}

/// Ridge least squares via the normal equations on [X | 1].
inline std::vector<double> ridge_fit(const std::vector<std::vector<double>>& rows, const std::vector<double>& y,
                                     double ridge) {
  const std::size_t p = rows.front().size() + 1;
  std::vector<double> ata(p * p, 0.0), aty(p, 0.0);
  for (std::size_t s = 0; s < rows.size(); ++s) {
    std::vector<double> r = rows[s];
    r.push_back(1.0);
    for (std::size_t i = 0; i < p; ++i) {
      aty[i] += r[i] * y[s];
      for (std::size_t j = 0; j < p; ++j) ata[i * p + j] += r[i] * r[j];
    }
  }
  for (std::size_t i = 0; i < p; ++i) ata[i * p + i] += ridge;
  return gauss_solve(ata, aty);
}

}  // namespace roar::oracle
