#pragma once

#include <string>
#include <vector>

#include "otfuse/kernels.hpp"
#include "otfuse/matrix.hpp"

namespace otfuse::ot {

using kernels::Metric;

// Finite discrete distribution; the weights mu of one side of the transport
// problem. Neurons carry uniform mass unless a caller says otherwise.
struct DiscreteDistribution {
  std::vector<double> masses;

  static DiscreteDistribution uniform(std::size_t n);

  std::size_t support_size() const { return masses.size(); }
  void validate() const;  // non-negative, sums to 1 within 1e-12, non-empty
};

// Pairwise ground distances d(i,j) between source row i and target row j.
struct CostMatrix {
  Matrix entries;
  Metric metric = Metric::Euclidean;

  void validate() const;  // all entries finite and >= 0
};

enum class SolverTag { Exact, Sinkhorn };

// Transport plan with the marginals it was asked to satisfy.
struct Coupling {
  Matrix plan;
  std::vector<double> row_marginal;
  std::vector<double> col_marginal;
  SolverTag solver = SolverTag::Exact;

  double total_mass() const;
  // max_i |sum_j plan(i,j) - row_marginal[i]| vs the column counterpart,
  // whichever is larger.
  double marginal_residual() const;
};

// mapping[j] = index of the source item placed at target position j.
struct Permutation {
  std::vector<int> mapping;

  static Permutation identity(std::size_t n);
  std::size_t size() const { return mapping.size(); }
  Permutation inverse() const;
  // (this ∘ other): apply `other` first, then this.
  Permutation compose(const Permutation& other) const;
  void validate() const;  // bijection on {0..n-1}

  friend bool operator==(const Permutation& a, const Permutation& b) {
    return a.mapping == b.mapping;
  }
};

CostMatrix cost_matrix(const Matrix& source_vectors, const Matrix& target_vectors, Metric metric,
                       kernels::Exec exec = kernels::default_exec());

// Globally optimal coupling. Equal supports with uniform marginals go through
// the assignment solver (the only case the fusion pipeline produces); general
// marginals fall back to the transportation simplex.
Coupling solve_exact(const CostMatrix& cost, const DiscreteDistribution& mu_s,
                     const DiscreteDistribution& mu_t);

struct SinkhornOptions {
  double epsilon = 0.01;
  int max_iter = 10000;
  double tol = 1e-8;
  bool log_domain = false;
};

struct SinkhornResult {
  Coupling coupling;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

SinkhornResult solve_sinkhorn(const CostMatrix& cost, const DiscreteDistribution& mu_s,
                              const DiscreteDistribution& mu_t, const SinkhornOptions& opts = {});

// Transport objective (sum plan*cost) / (sum plan); the Earth Mover's
// Distance when the plan is optimal.
double emd(const Coupling& coupling, const CostMatrix& cost);

// Column-wise argmax of a square plan, validated as a bijection. For
// exact-solver couplings N*plan must sit within 1e-6 of the induced
// permutation matrix. Collisions throw PermutationExtractionError.
Permutation coupling_to_permutation(const Coupling& coupling);

// Minimum-cost assignment (shortest augmenting path, O(n^3)).
// Returns mapping[j] = row assigned to column j, plus the total cost.
struct AssignmentResult {
  std::vector<int> row_for_col;
  double total_cost = 0.0;
};
AssignmentResult solve_assignment(const Matrix& cost);

// Exposed for testing against the assignment route on uniform instances.
Coupling solve_transportation(const CostMatrix& cost, const DiscreteDistribution& mu_s,
                              const DiscreteDistribution& mu_t);

}  // namespace otfuse::ot
