#pragma once

#include <vector>

#include "otfuse/model.hpp"
#include "otfuse/otcore.hpp"

namespace otfuse::fusion {

enum class Solver { Exact, Sinkhorn };

struct FusionConfig {
  ot::Metric metric = ot::Metric::Euclidean;
  Solver solver = Solver::Exact;
  ot::SinkhornOptions sinkhorn;     // used when solver == Sinkhorn
  bool include_bias_in_cost = true; // bias appended as one extra coordinate
  double average_weight = 0.5;      // fraction assigned to the target model
  bool soft_alignment = false;      // barycentric N*P^T*S instead of a hard permutation
};

struct AlignmentResult {
  nn::MlpModel aligned_source;            // source re-expressed in the target's neuron order
  std::vector<ot::Permutation> permutations;  // one per hidden layer (hard alignment only)
  std::vector<double> layer_emds;         // optimal transport cost per hidden layer
};

// Algorithm: walk the hidden layers in order; at each one build the cost
// matrix between the (already column-rearranged) source incoming-weight rows
// and the target's rows, solve the transport problem, extract the
// permutation and apply it function-preservingly. Output neurons are never
// permuted; their incoming columns follow the last hidden permutation.
AlignmentResult align_neurons(const nn::MlpModel& target, const nn::MlpModel& source,
                              const FusionConfig& config = {});

// align_neurons followed by the per-parameter convex combination
// average_weight*target + (1-average_weight)*aligned_source.
nn::MlpModel fuse_ot(const nn::MlpModel& target, const nn::MlpModel& source,
                     const FusionConfig& config = {});

// Elementwise averaging with no alignment; the baseline.
nn::MlpModel fuse_naive(const nn::MlpModel& a, const nn::MlpModel& b, double average_weight = 0.5);

// Left fold of fuse_ot; step k uses average_weight k/(k+1) so every parent
// contributes equally.
nn::MlpModel fuse_many(const std::vector<nn::MlpModel>& models, const FusionConfig& config = {});

}  // namespace otfuse::fusion
