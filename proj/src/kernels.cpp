#include "otfuse/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>

#include "otfuse/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otfuse::kernels {

namespace {

std::atomic<Exec> g_default_exec{
#ifdef _OPENMP
    Exec::Parallel
#else
    Exec::Serial
#endif
};

[[maybe_unused]] inline bool parallel(Exec e) {
#ifdef _OPENMP
  return e == Exec::Parallel;
#else
  (void)e;
  return false;
#endif
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Exec default_exec() { return g_default_exec.load(); }
void set_default_exec(Exec e) { g_default_exec.store(e); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Metric metric_from_string(const std::string& name) {
  if (name == "euclidean") return Metric::Euclidean;
  if (name == "squared-euclidean" || name == "sqeuclidean") return Metric::SquaredEuclidean;
  if (name == "cosine") return Metric::Cosine;
  throw ValidationError("unknown metric '" + name +
                        "' (expected euclidean, squared-euclidean or cosine)");
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::Euclidean: return "euclidean";
    case Metric::SquaredEuclidean: return "squared-euclidean";
    case Metric::Cosine: return "cosine";
  }
  return "?";
}

double ground_distance(std::span<const double> a, std::span<const double> b, Metric m) {
  switch (m) {
    case Metric::Euclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
      }
      return std::sqrt(s);
    }
    case Metric::SquaredEuclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
      }
      return s;
    }
    case Metric::Cosine: {
      double ab = 0.0, aa = 0.0, bb = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
      }
      // A zero vector has no direction: distance 0 to another zero vector,
      // 1 (orthogonal-equivalent) to anything else.
      const double tiny = 1e-300;
      if (aa < tiny || bb < tiny) return (aa < tiny && bb < tiny) ? 0.0 : 1.0;
      double c = ab / (std::sqrt(aa) * std::sqrt(bb));
      if (c > 1.0) c = 1.0;
      if (c < -1.0) c = -1.0;
      return 1.0 - c;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Matrix pairwise_cost(const Matrix& a, const Matrix& b, Metric m, Exec exec) {
  Matrix c(a.rows, b.rows);
  const std::int64_t n = static_cast<std::int64_t>(a.rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel(exec))
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    auto ai = a.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < b.rows; ++j) {
      c(static_cast<std::size_t>(i), j) = ground_distance(ai, b.row(j), m);
    }
  }
  (void)exec;
  return c;
}

void affine(const Matrix& w, std::span<const double> x, std::span<const double> b,
            std::span<double> y, Exec exec) {
  const std::int64_t n = static_cast<std::int64_t>(w.rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel(exec))
#endif
  for (std::int64_t r = 0; r < n; ++r) {
    y[static_cast<std::size_t>(r)] =
        dot(w.row(static_cast<std::size_t>(r)), x) + b[static_cast<std::size_t>(r)];
  }
  (void)exec;
}

Matrix affine_batch(const Matrix& x, const Matrix& w, std::span<const double> b, Exec exec) {
  Matrix y(x.rows, w.rows);
  const std::int64_t n = static_cast<std::int64_t>(x.rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel(exec))
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    auto xi = x.row(static_cast<std::size_t>(i));
    for (std::size_t r = 0; r < w.rows; ++r) {
      y(static_cast<std::size_t>(i), r) = dot(w.row(r), xi) + b[r];
    }
  }
  (void)exec;
  return y;
}

Matrix grad_weights(const Matrix& d, const Matrix& a, Exec exec) {
  Matrix g(d.cols, a.cols);
  const std::int64_t n = static_cast<std::int64_t>(d.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel(exec))
#endif
  for (std::int64_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < a.cols; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < d.rows; ++k) {
        s += d(k, static_cast<std::size_t>(r)) * a(k, c);
      }
      g(static_cast<std::size_t>(r), c) = s;
    }
  }
  (void)exec;
  return g;
}

void matvec(const Matrix& a, std::span<const double> x, std::span<double> y, Exec exec) {
  const std::int64_t n = static_cast<std::int64_t>(a.rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel(exec))
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = dot(a.row(static_cast<std::size_t>(i)), x);
  }
  (void)exec;
}

void matvec_t(const Matrix& a, std::span<const double> x, std::span<double> y, Exec exec) {
  const std::int64_t n = static_cast<std::int64_t>(a.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel(exec))
#endif
  for (std::int64_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
      s += a(i, static_cast<std::size_t>(j)) * x[i];
    }
    y[static_cast<std::size_t>(j)] = s;
  }
  (void)exec;
}

void logsumexp_rows(const Matrix& m, std::span<const double> add, std::span<double> out,
                    Exec exec) {
  const std::int64_t n = static_cast<std::int64_t>(m.rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel(exec))
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    auto row = m.row(static_cast<std::size_t>(i));
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < row.size(); ++j) {
      double v = row[j] + add[j];
      if (v > hi) hi = v;
    }
    if (!std::isfinite(hi)) {
      out[static_cast<std::size_t>(i)] = hi;
      continue;
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      acc += std::exp(row[j] + add[j] - hi);
    }
    out[static_cast<std::size_t>(i)] = hi + std::log(acc);
  }
  (void)exec;
}

void logsumexp_cols(const Matrix& m, std::span<const double> add, std::span<double> out,
                    Exec exec) {
  const std::int64_t n = static_cast<std::int64_t>(m.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel(exec))
#endif
  for (std::int64_t j = 0; j < n; ++j) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m.rows; ++i) {
      double v = m(i, static_cast<std::size_t>(j)) + add[i];
      if (v > hi) hi = v;
    }
    if (!std::isfinite(hi)) {
      out[static_cast<std::size_t>(j)] = hi;
      continue;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
      acc += std::exp(m(i, static_cast<std::size_t>(j)) + add[i] - hi);
    }
    out[static_cast<std::size_t>(j)] = hi + std::log(acc);
  }
  (void)exec;
}

}  // namespace otfuse::kernels
