#include "otfuse/otcore.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "otfuse/errors.hpp"

namespace otfuse::ot {

namespace {

constexpr double kMassTol = 1e-12;
constexpr double kFeasibilityTol = 1e-9;
constexpr double kReducedCostTol = 1e-11;

bool is_uniform(const DiscreteDistribution& d) {
  const double w = 1.0 / static_cast<double>(d.masses.size());
  for (double m : d.masses) {
    if (std::abs(m - w) > kMassTol) return false;
  }
  return true;
}

}  // namespace

DiscreteDistribution DiscreteDistribution::uniform(std::size_t n) {
  if (n == 0) throw ValidationError("distribution support must be non-empty");
  return DiscreteDistribution{std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

void DiscreteDistribution::validate() const {
  if (masses.empty()) throw ValidationError("distribution support must be non-empty");
  double sum = 0.0;
  for (double m : masses) {
    if (!std::isfinite(m) || m < 0.0) {
      throw ValidationError("distribution masses must be finite and non-negative");
    }
    sum += m;
  }
  if (std::abs(sum - 1.0) > kMassTol) {
    throw ValidationError("distribution masses must sum to 1 (got " + std::to_string(sum) + ")");
  }
}

void CostMatrix::validate() const {
  for (double e : entries.data) {
    if (!std::isfinite(e) || e < 0.0) {
      throw ValidationError("cost entries must be finite and non-negative");
    }
  }
}

double Coupling::total_mass() const {
  return std::accumulate(plan.data.begin(), plan.data.end(), 0.0);
}

double Coupling::marginal_residual() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < plan.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plan.cols; ++j) s += plan(i, j);
    worst = std::max(worst, std::abs(s - row_marginal[i]));
  }
  for (std::size_t j = 0; j < plan.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < plan.rows; ++i) s += plan(i, j);
    worst = std::max(worst, std::abs(s - col_marginal[j]));
  }
  return worst;
}

Permutation Permutation::identity(std::size_t n) {
  Permutation p;
  p.mapping.resize(n);
  std::iota(p.mapping.begin(), p.mapping.end(), 0);
  return p;
}

Permutation Permutation::inverse() const {
  Permutation inv;
  inv.mapping.assign(mapping.size(), -1);
  for (std::size_t j = 0; j < mapping.size(); ++j) {
    inv.mapping[static_cast<std::size_t>(mapping[j])] = static_cast<int>(j);
  }
  return inv;
}

Permutation Permutation::compose(const Permutation& other) const {
  if (other.size() != size()) throw ValidationError("cannot compose permutations of unequal size");
  Permutation out;
  out.mapping.resize(size());
  for (std::size_t j = 0; j < size(); ++j) {
    out.mapping[j] = other.mapping[static_cast<std::size_t>(mapping[j])];
  }
  return out;
}

void Permutation::validate() const {
  std::vector<char> seen(mapping.size(), 0);
  for (int v : mapping) {
    if (v < 0 || static_cast<std::size_t>(v) >= mapping.size() || seen[static_cast<std::size_t>(v)]) {
      throw ValidationError("permutation mapping is not a bijection");
    }
    seen[static_cast<std::size_t>(v)] = 1;
  }
}

CostMatrix cost_matrix(const Matrix& source_vectors, const Matrix& target_vectors, Metric metric,
                       kernels::Exec exec) {
  if (source_vectors.rows == 0 || target_vectors.rows == 0) {
    throw ValidationError("cost_matrix needs at least one source and one target vector");
  }
  if (source_vectors.cols != target_vectors.cols) {
    throw ValidationError("cost_matrix dimension mismatch: source vectors have dimension " +
                          std::to_string(source_vectors.cols) + ", target vectors " +
                          std::to_string(target_vectors.cols));
  }
  for (double v : source_vectors.data) {
    if (!std::isfinite(v)) throw ValidationError("cost_matrix: non-finite source component");
  }
  for (double v : target_vectors.data) {
    if (!std::isfinite(v)) throw ValidationError("cost_matrix: non-finite target component");
  }
  CostMatrix out;
  out.metric = metric;
  out.entries = kernels::pairwise_cost(source_vectors, target_vectors, metric, exec);
  // Guard against negative zeros from cancellation in the cosine branch.
  for (double& e : out.entries.data) {
    if (e < 0.0 && e > -1e-15) e = 0.0;
  }
  return out;
}

AssignmentResult solve_assignment(const Matrix& cost) {
  if (cost.rows != cost.cols || cost.rows == 0) {
    throw ValidationError("assignment solver needs a non-empty square cost matrix");
  }
  const int n = static_cast<int>(cost.rows);
  const double inf = std::numeric_limits<double>::infinity();

  // Shortest augmenting path with dual potentials; rows are introduced in
  // index order, which makes tie-breaking deterministic (lowest source row
  // wins a contested column).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult res;
  res.row_for_col.assign(n, -1);
  for (int j = 1; j <= n; ++j) res.row_for_col[j - 1] = p[j] - 1;
  for (int j = 0; j < n; ++j) {
    res.total_cost += cost(static_cast<std::size_t>(res.row_for_col[j]), static_cast<std::size_t>(j));
  }
  return res;
}

namespace {

// Transportation simplex (MODI). Handles unequal support sizes and
// non-uniform marginals; the fusion pipeline itself only ever produces the
// uniform square case, which solve_exact routes to the assignment solver.
Coupling transportation_simplex(const CostMatrix& cost, const DiscreteDistribution& mu_s,
                                const DiscreteDistribution& mu_t) {
  const std::size_t m = mu_s.support_size();
  const std::size_t n = mu_t.support_size();
  const Matrix& c = cost.entries;

  Matrix flow(m, n, 0.0);
  std::vector<char> basic(m * n, 0);
  auto bidx = [n](std::size_t i, std::size_t j) { return i * n + j; };

  // Northwest-corner start: exactly m+n-1 basic cells, zeros included on
  // degenerate exhaustion.
  {
    std::vector<double> rem_a = mu_s.masses;
    std::vector<double> rem_b = mu_t.masses;
    std::size_t i = 0, j = 0;
    while (true) {
      const double f = std::min(rem_a[i], rem_b[j]);
      flow(i, j) = f;
      basic[bidx(i, j)] = 1;
      rem_a[i] -= f;
      rem_b[j] -= f;
      if (i == m - 1 && j == n - 1) break;
      if (i == m - 1) {
        ++j;
      } else if (j == n - 1) {
        ++i;
      } else if (rem_a[i] <= rem_b[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  const std::size_t node_count = m + n;
  const long max_pivots = 100L * static_cast<long>(node_count) * static_cast<long>(node_count);
  const long bland_after = max_pivots / 10;
  std::vector<double> u(m), v(n);
  std::vector<char> u_set(m), v_set(n);
  std::vector<int> parent(node_count);
  std::vector<int> bfs_order;
  bfs_order.reserve(node_count);

  for (long pivot = 0;; ++pivot) {
    if (pivot >= max_pivots) {
      throw NumericError("transportation simplex exceeded its pivot budget");
    }

    // Dual potentials from the basis tree: u[i] + v[j] = c(i,j) on basic cells.
    std::fill(u_set.begin(), u_set.end(), 0);
    std::fill(v_set.begin(), v_set.end(), 0);
    u[0] = 0.0;
    u_set[0] = 1;
    bfs_order.assign(1, 0);  // node k: rows are [0,m), columns are [m, m+n)
    for (std::size_t head = 0; head < bfs_order.size(); ++head) {
      const int node = bfs_order[head];
      if (node < static_cast<int>(m)) {
        const std::size_t i = static_cast<std::size_t>(node);
        for (std::size_t j = 0; j < n; ++j) {
          if (basic[bidx(i, j)] && !v_set[j]) {
            v[j] = c(i, j) - u[i];
            v_set[j] = 1;
            bfs_order.push_back(static_cast<int>(m + j));
          }
        }
      } else {
        const std::size_t j = static_cast<std::size_t>(node) - m;
        for (std::size_t i = 0; i < m; ++i) {
          if (basic[bidx(i, j)] && !u_set[i]) {
            u[i] = c(i, j) - v[j];
            u_set[i] = 1;
            bfs_order.push_back(static_cast<int>(i));
          }
        }
      }
    }

    // Entering cell: most negative reduced cost (Dantzig), falling back to
    // Bland's rule if the pivot count suggests degeneracy trouble.
    std::size_t ei = 0, ej = 0;
    bool found = false;
    if (pivot < bland_after) {
      double best = -kReducedCostTol;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (basic[bidx(i, j)]) continue;
          const double rc = c(i, j) - u[i] - v[j];
          if (rc < best) {
            best = rc;
            ei = i;
            ej = j;
            found = true;
          }
        }
      }
    } else {
      for (std::size_t i = 0; i < m && !found; ++i) {
        for (std::size_t j = 0; j < n && !found; ++j) {
          if (basic[bidx(i, j)]) continue;
          if (c(i, j) - u[i] - v[j] < -kReducedCostTol) {
            ei = i;
            ej = j;
            found = true;
          }
        }
      }
    }
    if (!found) break;  // optimal

    // Unique path row(ei) -> col(ej) through the basis tree.
    std::fill(parent.begin(), parent.end(), -2);
    parent[ei] = -1;
    std::deque<int> queue{static_cast<int>(ei)};
    const int target = static_cast<int>(m + ej);
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      if (node == target) break;
      if (node < static_cast<int>(m)) {
        const std::size_t i = static_cast<std::size_t>(node);
        for (std::size_t j = 0; j < n; ++j) {
          const int next = static_cast<int>(m + j);
          if (basic[bidx(i, j)] && parent[next] == -2) {
            parent[next] = node;
            queue.push_back(next);
          }
        }
      } else {
        const std::size_t j = static_cast<std::size_t>(node) - m;
        for (std::size_t i = 0; i < m; ++i) {
          if (basic[bidx(i, j)] && parent[i] == -2) {
            parent[static_cast<int>(i)] = node;
            queue.push_back(static_cast<int>(i));
          }
        }
      }
    }
    if (parent[target] == -2) {
      throw NumericError("transportation simplex basis lost its tree structure");
    }

    // Walk back from col(ej) to row(ei); edges alternate -θ, +θ starting with
    // the basic cell sharing column ej.
    std::vector<std::pair<std::size_t, std::size_t>> minus_cells, plus_cells;
    int node = target;
    bool minus = true;
    while (parent[node] != -1) {
      const int par = parent[node];
      const std::size_t i = static_cast<std::size_t>(node < static_cast<int>(m) ? node : par);
      const std::size_t j = static_cast<std::size_t>((node < static_cast<int>(m) ? par : node)) - m;
      (minus ? minus_cells : plus_cells).emplace_back(i, j);
      minus = !minus;
      node = par;
    }

    double theta = std::numeric_limits<double>::infinity();
    std::pair<std::size_t, std::size_t> leaving{0, 0};
    for (const auto& cell : minus_cells) {
      const double f = flow(cell.first, cell.second);
      if (f < theta || (f == theta && cell < leaving)) {
        theta = f;
        leaving = cell;
      }
    }

    flow(ei, ej) += theta;
    basic[bidx(ei, ej)] = 1;
    for (const auto& cell : plus_cells) flow(cell.first, cell.second) += theta;
    for (const auto& cell : minus_cells) flow(cell.first, cell.second) -= theta;
    flow(leaving.first, leaving.second) = 0.0;
    basic[bidx(leaving.first, leaving.second)] = 0;
  }

  for (double& f : flow.data) {
    if (f < 0.0) f = 0.0;  // clip -1e-17 style residue from pivot arithmetic
  }

  Coupling out;
  out.plan = std::move(flow);
  out.row_marginal = mu_s.masses;
  out.col_marginal = mu_t.masses;
  out.solver = SolverTag::Exact;
  return out;
}

void check_problem(const CostMatrix& cost, const DiscreteDistribution& mu_s,
                   const DiscreteDistribution& mu_t) {
  cost.validate();
  mu_s.validate();
  mu_t.validate();
  if (cost.entries.rows != mu_s.support_size() || cost.entries.cols != mu_t.support_size()) {
    throw ValidationError("cost matrix is " + std::to_string(cost.entries.rows) + "x" +
                          std::to_string(cost.entries.cols) + " but marginals have supports " +
                          std::to_string(mu_s.support_size()) + " and " +
                          std::to_string(mu_t.support_size()));
  }
  const double sum_s = std::accumulate(mu_s.masses.begin(), mu_s.masses.end(), 0.0);
  const double sum_t = std::accumulate(mu_t.masses.begin(), mu_t.masses.end(), 0.0);
  if (std::abs(sum_s - sum_t) > kFeasibilityTol) {
    throw ValidationError("infeasible marginals: mass " + std::to_string(sum_s) + " vs " +
                          std::to_string(sum_t));
  }
}

}  // namespace

Coupling solve_exact(const CostMatrix& cost, const DiscreteDistribution& mu_s,
                     const DiscreteDistribution& mu_t) {
  check_problem(cost, mu_s, mu_t);
  const std::size_t m = mu_s.support_size();
  const std::size_t n = mu_t.support_size();

  if (m == 1 && n == 1) {
    Coupling out;
    out.plan = Matrix(1, 1, 1.0);
    out.row_marginal = mu_s.masses;
    out.col_marginal = mu_t.masses;
    out.solver = SolverTag::Exact;
    return out;
  }

  if (m == n && is_uniform(mu_s) && is_uniform(mu_t)) {
    const AssignmentResult assignment = solve_assignment(cost.entries);
    Coupling out;
    out.plan = Matrix(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      out.plan(static_cast<std::size_t>(assignment.row_for_col[j]), j) = mu_t.masses[j];
    }
    out.row_marginal = mu_s.masses;
    out.col_marginal = mu_t.masses;
    out.solver = SolverTag::Exact;
    return out;
  }

  return transportation_simplex(cost, mu_s, mu_t);
}

Coupling solve_transportation(const CostMatrix& cost, const DiscreteDistribution& mu_s,
                              const DiscreteDistribution& mu_t) {
  check_problem(cost, mu_s, mu_t);
  return transportation_simplex(cost, mu_s, mu_t);
}

SinkhornResult solve_sinkhorn(const CostMatrix& cost, const DiscreteDistribution& mu_s,
                              const DiscreteDistribution& mu_t, const SinkhornOptions& opts) {
  check_problem(cost, mu_s, mu_t);
  if (opts.epsilon <= 0.0) throw ValidationError("sinkhorn epsilon must be positive");
  if (opts.max_iter < 1) throw ValidationError("sinkhorn max_iter must be at least 1");
  if (opts.tol <= 0.0) throw ValidationError("sinkhorn tol must be positive");

  const std::size_t m = mu_s.support_size();
  const std::size_t n = mu_t.support_size();
  const Matrix& c = cost.entries;

  SinkhornResult res;
  res.coupling.row_marginal = mu_s.masses;
  res.coupling.col_marginal = mu_t.masses;
  res.coupling.solver = SolverTag::Sinkhorn;

  auto residual_of = [&](const Matrix& plan) {
    Coupling probe;
    probe.plan = plan;
    probe.row_marginal = mu_s.masses;
    probe.col_marginal = mu_t.masses;
    return probe.marginal_residual();
  };

  if (!opts.log_domain) {
    Matrix k(m, n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) k(i, j) = std::exp(-c(i, j) / opts.epsilon);
    }
    std::vector<double> u(m, 1.0), v(n, 1.0), kv(m), ktu(n);
    auto build_plan = [&]() {
      Matrix plan(m, n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) plan(i, j) = u[i] * k(i, j) * v[j];
      }
      return plan;
    };
    for (int it = 1; it <= opts.max_iter; ++it) {
      kernels::matvec(k, v, kv);
      for (std::size_t i = 0; i < m; ++i) {
        if (!(kv[i] > 0.0) || !std::isfinite(kv[i])) {
          throw SinkhornUnderflowError(
              "sinkhorn scaling underflowed at epsilon=" + std::to_string(opts.epsilon) +
              "; retry with the log-domain path (log_domain=true)");
        }
        u[i] = mu_s.masses[i] / kv[i];
      }
      kernels::matvec_t(k, u, ktu);
      for (std::size_t j = 0; j < n; ++j) {
        if (!(ktu[j] > 0.0) || !std::isfinite(ktu[j])) {
          throw SinkhornUnderflowError(
              "sinkhorn scaling underflowed at epsilon=" + std::to_string(opts.epsilon) +
              "; retry with the log-domain path (log_domain=true)");
        }
        v[j] = mu_t.masses[j] / ktu[j];
      }
      if (it % 10 == 0 || it == opts.max_iter) {
        Matrix plan = build_plan();
        const double r = residual_of(plan);
        if (r <= opts.tol || it == opts.max_iter) {
          res.coupling.plan = std::move(plan);
          res.iterations = it;
          res.residual = r;
          res.converged = r <= opts.tol;
          return res;
        }
      }
    }
  } else {
    Matrix log_k(m, n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) log_k(i, j) = -c(i, j) / opts.epsilon;
    }
    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> log_mu(m), log_nu(n), f(m, 0.0), g(n, 0.0), lse(std::max(m, n));
    for (std::size_t i = 0; i < m; ++i) {
      log_mu[i] = mu_s.masses[i] > 0.0 ? std::log(mu_s.masses[i]) : neg_inf;
    }
    for (std::size_t j = 0; j < n; ++j) {
      log_nu[j] = mu_t.masses[j] > 0.0 ? std::log(mu_t.masses[j]) : neg_inf;
    }
    auto build_plan = [&]() {
      Matrix plan(m, n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) plan(i, j) = std::exp(log_k(i, j) + f[i] + g[j]);
      }
      return plan;
    };
    for (int it = 1; it <= opts.max_iter; ++it) {
      kernels::logsumexp_rows(log_k, g, {lse.data(), m});
      for (std::size_t i = 0; i < m; ++i) f[i] = log_mu[i] - lse[i];
      kernels::logsumexp_cols(log_k, f, {lse.data(), n});
      for (std::size_t j = 0; j < n; ++j) g[j] = log_nu[j] - lse[j];
      if (it % 10 == 0 || it == opts.max_iter) {
        Matrix plan = build_plan();
        const double r = residual_of(plan);
        if (r <= opts.tol || it == opts.max_iter) {
          res.coupling.plan = std::move(plan);
          res.iterations = it;
          res.residual = r;
          res.converged = r <= opts.tol;
          return res;
        }
      }
    }
  }
  throw NumericError("sinkhorn loop exited unexpectedly");  // unreachable
}

double emd(const Coupling& coupling, const CostMatrix& cost) {
  if (!coupling.plan.same_shape(cost.entries)) {
    throw ValidationError("emd: coupling is " + std::to_string(coupling.plan.rows) + "x" +
                          std::to_string(coupling.plan.cols) + " but cost is " +
                          std::to_string(cost.entries.rows) + "x" +
                          std::to_string(cost.entries.cols));
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < coupling.plan.rows; ++i) {
    for (std::size_t j = 0; j < coupling.plan.cols; ++j) {
      num += coupling.plan(i, j) * cost.entries(i, j);
      den += coupling.plan(i, j);
    }
  }
  if (den <= 0.0) throw ValidationError("emd: total plan mass is zero");
  return num / den;
}

Permutation coupling_to_permutation(const Coupling& coupling) {
  const Matrix& plan = coupling.plan;
  if (plan.rows != plan.cols || plan.rows == 0) {
    throw ValidationError("permutation extraction needs a non-empty square plan");
  }
  const std::size_t n = plan.rows;

  Permutation perm;
  perm.mapping.assign(n, -1);
  std::vector<int> col_of_row(n, -1);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (plan(i, j) > plan(best, j)) best = i;
    }
    if (col_of_row[best] >= 0) {
      throw PermutationExtractionError(static_cast<int>(best), col_of_row[best],
                                       static_cast<int>(j));
    }
    col_of_row[best] = static_cast<int>(j);
    perm.mapping[j] = static_cast<int>(best);
  }
  perm.validate();

  if (coupling.solver == SolverTag::Exact) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double want = perm.mapping[j] == static_cast<int>(i) ? 1.0 : 0.0;
        worst = std::max(worst, std::abs(plan(i, j) * static_cast<double>(n) - want));
      }
    }
    if (worst > 1e-6) {
      throw NumericError("exact coupling is not a permutation vertex (deviation " +
                         std::to_string(worst) + ")");
    }
  }
  return perm;
}

}  // namespace otfuse::ot
