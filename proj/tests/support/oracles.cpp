#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace pathtemper::testing {

namespace {
// sqrt(-log(0.01 / 2) / 2)
const double kKs01 = std::sqrt(-std::log(0.005) / 2.0);
}  // namespace

double ks_statistic(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

double ks_critical_01(std::size_t n, std::size_t m) {
  const double a = static_cast<double>(n), b = static_cast<double>(m);
  return kKs01 * std::sqrt((a + b) / (a * b));
}

double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_critical_01(std::size_t n) { return kKs01 / std::sqrt(static_cast<double>(n)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> fd_gradient(const ModelSpec& model, std::span<const double> x, double lambda,
                                double h) {
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> g(x.size()), scratch(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double step = h * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + step;
    const double up = eval_into(model, xp, lambda, scratch);
    xp[i] = x[i] - step;
    const double down = eval_into(model, xp, lambda, scratch);
    xp[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double max_relative_gradient_error(const ModelSpec& model, std::span<const double> x,
                                   double lambda) {
  const Evaluation ev = eval_model(model, x, lambda);
  const std::vector<double> fd = fd_gradient(model, x, lambda);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, std::abs(ev.gradient[i] - fd[i]) / std::max(1.0, std::abs(fd[i])));
  return worst;
}

std::vector<double> gpd_sample(double k, double sigma, std::size_t n, Philox& rng) {
  std::vector<double> out(n);
  for (double& v : out) {
    const double u = rng.uniform_open();
    v = k == 0.0 ? -sigma * std::log(u) : sigma * (std::pow(u, -k) - 1.0) / k;
  }
  return out;
}

BridgeInstance random_bridge_instance(std::size_t states, std::size_t support, Philox& rng) {
  BridgeInstance inst;
  inst.q.assign(states, std::vector<double>(support));
  for (auto& row : inst.q)
    for (double& v : row) v = 0.1 + 2.0 * rng.uniform();
  inst.draws.resize(states);
  for (std::size_t j = 0; j < states; ++j) {
    const std::size_t n = 3 + rng.below(8);
    for (std::size_t s = 0; s < n; ++s) inst.draws[j].push_back(rng.below(support));
  }
  return inst;
}

namespace {

double denominator(const BridgeInstance& inst, std::span<const double> z, std::size_t point) {
  double s = 0.0;
  for (std::size_t m = 0; m < inst.q.size(); ++m)
    s += static_cast<double>(inst.draws[m].size()) / z[m] * inst.q[m][point];
  return s;
}

}  // namespace

std::vector<double> self_consistent_z(const BridgeInstance& inst) {
  const std::size_t k = inst.q.size();
  std::vector<double> z(k, 1.0), next(k);
  for (int it = 0; it < 100000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (const auto& state : inst.draws)
      for (std::size_t point : state) {
        const double s = denominator(inst, z, point);
        for (std::size_t i = 0; i < k; ++i) next[i] += inst.q[i][point] / s;
      }
    double change = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      next[i] /= next[0];
      change = std::max(change, std::abs(next[i] / z[i] - 1.0));
    }
    z = next;
    if (change < 1e-15) return z;
  }
  throw std::runtime_error("self-consistent iteration did not converge");
}

std::vector<double> bridge_solve(const BridgeInstance& inst, std::span<const double> z_hat) {
  const std::size_t k = inst.q.size();
  auto n = [&](std::size_t j) { return static_cast<double>(inst.draws[j].size()); };
  auto alpha = [&](std::size_t j, std::size_t point) {
    return n(j) / z_hat[j] / denominator(inst, z_hat, point);
  };
  // b_ij = E_j[alpha_ij q_i]
  auto b = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t point : inst.draws[j]) s += alpha(j, point) * inst.q[i][point];
    return s / n(j);
  };
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k - 1, k - 1);
  Eigen::VectorXd rhs(k - 1);
  for (std::size_t i = 1; i < k; ++i) {
    double diag = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t point : inst.draws[i]) s += alpha(j, point) * inst.q[j][point];
      diag += s / n(i);
      if (j > 0) a(i - 1, j - 1) = -b(i, j);
    }
    a(i - 1, i - 1) = diag;
    rhs(i - 1) = b(i, 0);
  }
  const Eigen::VectorXd sol = a.fullPivLu().solve(rhs);
  std::vector<double> z(k, 1.0);
  for (std::size_t i = 1; i < k; ++i) z[i] = sol(static_cast<Eigen::Index>(i - 1));
  return z;
}

}  // namespace pathtemper::testing
