#pragma once

#include <span>
#include <string>
#include <vector>

#include "otfuse/matrix.hpp"

namespace otfuse::kernels {

// Every kernel has a serial reference path and an OpenMP path. Both produce
// bitwise-identical output for any thread count: each output element is
// written by exactly one thread and its inner reduction runs in a fixed
// order. The serial path is kept as the test oracle and for builds without
// OpenMP; bench_kernels compares the two.
enum class Exec { Serial, Parallel };

Exec default_exec();
void set_default_exec(Exec e);
int max_threads();

enum class Metric { Euclidean, SquaredEuclidean, Cosine };

Metric metric_from_string(const std::string& name);
std::string to_string(Metric m);

double ground_distance(std::span<const double> a, std::span<const double> b, Metric m);

// C(i,j) = d(a_i, b_j) for row vectors a_i of `a` and b_j of `b`.
Matrix pairwise_cost(const Matrix& a, const Matrix& b, Metric m, Exec exec = default_exec());

// y = W x + b  (W rows are output neurons).
void affine(const Matrix& w, std::span<const double> x, std::span<const double> b,
            std::span<double> y, Exec exec = default_exec());

// Y = X W^T + b  (rows of X are examples).
Matrix affine_batch(const Matrix& x, const Matrix& w, std::span<const double> b,
                    Exec exec = default_exec());

// G = D^T A  (D: batch x out, A: batch x in). The weight-gradient
// accumulation of backprop; parallel over entries of G, each summing the
// batch in index order.
Matrix grad_weights(const Matrix& d, const Matrix& a, Exec exec = default_exec());

// y = A x   and   y = A^T x.
void matvec(const Matrix& a, std::span<const double> x, std::span<double> y,
            Exec exec = default_exec());
void matvec_t(const Matrix& a, std::span<const double> x, std::span<double> y,
              Exec exec = default_exec());

// out[i] = log sum_j exp(m(i,j) + add[j]); the column version transposes the
// roles. Used by the log-domain Sinkhorn sweeps.
void logsumexp_rows(const Matrix& m, std::span<const double> add, std::span<double> out,
                    Exec exec = default_exec());
void logsumexp_cols(const Matrix& m, std::span<const double> add, std::span<double> out,
                    Exec exec = default_exec());

}  // namespace otfuse::kernels
