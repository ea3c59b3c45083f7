#include "otfuse/fusion.hpp"

#include <cmath>
#include <string>

#include "otfuse/errors.hpp"

namespace otfuse::fusion {

namespace {

// Incoming-weight rows of one layer, with the bias appended as an extra
// coordinate when configured.
Matrix layer_rows(const nn::MlpModel& m, std::size_t layer, bool include_bias) {
  const Matrix& w = m.weights[layer];
  Matrix rows(w.rows, w.cols + (include_bias ? 1 : 0));
  for (std::size_t r = 0; r < w.rows; ++r) {
    auto src = w.row(r);
    auto dst = rows.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
    if (include_bias) dst[w.cols] = m.biases[layer][r];
  }
  return rows;
}

ot::Coupling solve(const ot::CostMatrix& cost, const FusionConfig& config, std::size_t n) {
  const auto marginal = ot::DiscreteDistribution::uniform(n);
  if (config.solver == Solver::Exact) {
    return ot::solve_exact(cost, marginal, marginal);
  }
  return ot::solve_sinkhorn(cost, marginal, marginal, config.sinkhorn).coupling;
}

// Greedy argmax with Hungarian repair on -log(plan): sinkhorn plans are not
// vertices, so collisions are expected there rather than exceptional.
ot::Permutation extract_permutation(const ot::Coupling& coupling, const FusionConfig& config,
                                    std::size_t layer) {
  try {
    return ot::coupling_to_permutation(coupling);
  } catch (const PermutationExtractionError& e) {
    if (config.solver != Solver::Sinkhorn) {
      throw NumericError("alignment of hidden layer " + std::to_string(layer) +
                         " failed: " + e.what());
    }
  } catch (const NumericError& e) {
    throw NumericError("alignment of hidden layer " + std::to_string(layer) +
                       " failed: " + e.what());
  }
  const Matrix& plan = coupling.plan;
  Matrix neg_log(plan.rows, plan.cols);
  for (std::size_t i = 0; i < plan.data.size(); ++i) {
    neg_log.data[i] = -std::log(std::max(plan.data[i], 1e-300));
  }
  const ot::AssignmentResult repair = ot::solve_assignment(neg_log);
  ot::Permutation perm;
  perm.mapping = repair.row_for_col;
  perm.validate();
  return perm;
}

// Barycentric rearrangement: rows of layer l become N*P^T*rows, columns of
// layer l+1 mix with N*P. Coincides with the hard path when the plan is a
// permutation vertex; in general it is not function-preserving.
void apply_soft_alignment(nn::MlpModel& m, std::size_t layer, const ot::Coupling& coupling) {
  const Matrix& plan = coupling.plan;
  const std::size_t n = plan.rows;
  const double scale = static_cast<double>(n);

  const Matrix old_w = m.weights[layer];
  const std::vector<double> old_b = m.biases[layer];
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < old_w.cols; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += plan(i, j) * old_w(i, c);
      m.weights[layer](j, c) = scale * s;
    }
    double sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) sb += plan(i, j) * old_b[i];
    m.biases[layer][j] = scale * sb;
  }

  const Matrix old_next = m.weights[layer + 1];
  for (std::size_t r = 0; r < old_next.rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += old_next(r, i) * plan(i, j);
      m.weights[layer + 1](r, j) = scale * s;
    }
  }
}

nn::MlpModel average(const nn::MlpModel& target, const nn::MlpModel& source, double w) {
  nn::MlpModel out = target;
  const double ws = 1.0 - w;
  for (std::size_t l = 0; l < out.weights.size(); ++l) {
    for (std::size_t i = 0; i < out.weights[l].data.size(); ++i) {
      out.weights[l].data[i] = w * target.weights[l].data[i] + ws * source.weights[l].data[i];
    }
    for (std::size_t i = 0; i < out.biases[l].size(); ++i) {
      out.biases[l][i] = w * target.biases[l][i] + ws * source.biases[l][i];
    }
  }
  return out;
}

void check_pair(const nn::MlpModel& a, const nn::MlpModel& b, const char* op) {
  a.validate();
  b.validate();
  if (!a.same_architecture(b)) {
    throw ValidationError(std::string(op) +
                          ": models must share layer sizes and activation tags");
  }
}

}  // namespace

AlignmentResult align_neurons(const nn::MlpModel& target, const nn::MlpModel& source,
                              const FusionConfig& config) {
  check_pair(target, source, "align_neurons");
  if (config.average_weight < 0.0 || config.average_weight > 1.0) {
    throw ValidationError("average_weight must lie in [0,1]");
  }

  AlignmentResult result;
  result.aligned_source = source;

  for (std::size_t l = 0; l < target.num_hidden_layers(); ++l) {
    // Columns of layer l in aligned_source already follow the previous
    // layer's rearrangement, so its rows are comparable to the target's.
    const Matrix source_rows = layer_rows(result.aligned_source, l, config.include_bias_in_cost);
    const Matrix target_rows = layer_rows(target, l, config.include_bias_in_cost);
    const ot::CostMatrix cost = ot::cost_matrix(source_rows, target_rows, config.metric);
    const ot::Coupling coupling = solve(cost, config, source_rows.rows);
    result.layer_emds.push_back(ot::emd(coupling, cost));

    if (config.soft_alignment) {
      apply_soft_alignment(result.aligned_source, l, coupling);
    } else {
      ot::Permutation perm;
      try {
        perm = extract_permutation(coupling, config, l);
      } catch (const PermutationExtractionError& e) {
        throw NumericError("alignment of hidden layer " + std::to_string(l) +
                           " failed: " + e.what());
      }
      result.aligned_source =
          nn::apply_hidden_permutation(result.aligned_source, l, perm);
      result.permutations.push_back(std::move(perm));
    }
  }
  return result;
}

nn::MlpModel fuse_ot(const nn::MlpModel& target, const nn::MlpModel& source,
                     const FusionConfig& config) {
  const AlignmentResult alignment = align_neurons(target, source, config);
  return average(target, alignment.aligned_source, config.average_weight);
}

nn::MlpModel fuse_naive(const nn::MlpModel& a, const nn::MlpModel& b, double average_weight) {
  check_pair(a, b, "fuse_naive");
  if (average_weight < 0.0 || average_weight > 1.0) {
    throw ValidationError("average_weight must lie in [0,1]");
  }
  return average(a, b, average_weight);
}

nn::MlpModel fuse_many(const std::vector<nn::MlpModel>& models, const FusionConfig& config) {
  if (models.size() < 2) throw ValidationError("fuse_many needs at least 2 models");
  nn::MlpModel acc = models.front();
  for (std::size_t k = 1; k < models.size(); ++k) {
    FusionConfig step = config;
    step.average_weight = static_cast<double>(k) / static_cast<double>(k + 1);
    acc = fuse_ot(acc, models[k], step);
  }
  return acc;
}

}  // namespace otfuse::fusion
