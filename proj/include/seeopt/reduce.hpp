#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "seeopt/common.hpp"

namespace seeopt {

// Pairwise-tree summation in index order. The splitting depends only on the
// element count, so results are bit-identical no matter how the inputs were
// produced (thread count, chunking). Also keeps rounding error O(log n).
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_mean(std::span<const double> v) {
    if (v.empty()) throw ConfigError("pairwise_mean: empty sample");
    return pairwise_sum(v) / static_cast<double>(v.size());
}

struct MeanStderr {
    double mean = 0.0;
    double stderr_mean = 0.0;  // sample sd / sqrt(n); 0 for n == 1
};

// Two-pass mean/stderr built on the same deterministic reduction.
inline MeanStderr pairwise_mean_stderr(std::span<const double> v) {
    MeanStderr out;
    out.mean = pairwise_mean(v);
    if (v.size() < 2) return out;
    // Reuses the tree by summing squared deviations through a small buffer-free
    // recursion: recompute deviations on the fly.
    struct Dev {
        static double sum(std::span<const double> v, double m) {
            if (v.size() <= 8) {
                double s = 0.0;
                for (double x : v) s += (x - m) * (x - m);
                return s;
            }
            const std::size_t half = v.size() / 2;
            return sum(v.first(half), m) + sum(v.subspan(half), m);
        }
    };
    const double ss = Dev::sum(v, out.mean);
    const double n = static_cast<double>(v.size());
    out.stderr_mean = std::sqrt(ss / (n - 1.0) / n);
    return out;
}

inline double pairwise_mean(const Eigen::RowVectorXd& v) {
    return pairwise_mean(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}
inline double pairwise_mean(const VectorXd& v) {
    return pairwise_mean(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}
inline MeanStderr pairwise_mean_stderr(const Eigen::RowVectorXd& v) {
    return pairwise_mean_stderr(
        std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}
inline MeanStderr pairwise_mean_stderr(const VectorXd& v) {
    return pairwise_mean_stderr(
        std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

// Column-wise pairwise mean of an N x P matrix (one column per path).
inline VectorXd pairwise_colmean(const MatrixXd& m) {
    if (m.cols() == 0) throw ConfigError("pairwise_colmean: no columns");
    struct Rec {
        static VectorXd sum(const MatrixXd& m, Eigen::Index lo, Eigen::Index n) {
            if (n <= 8) {
                VectorXd s = VectorXd::Zero(m.rows());
                for (Eigen::Index j = 0; j < n; ++j) s += m.col(lo + j);
                return s;
            }
            const Eigen::Index half = n / 2;
            return sum(m, lo, half) + sum(m, lo + half, n - half);
        }
    };
    return Rec::sum(m, 0, m.cols()) / static_cast<double>(m.cols());
}

}  // namespace seeopt
