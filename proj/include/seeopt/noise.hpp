#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seeopt/common.hpp"

namespace seeopt {

struct TimeGrid {
    double horizon = 0.0;  // T
    int n_steps = 0;

    double dt() const { return horizon / n_steps; }
    double t(int step) const { return step * dt(); }
};

void validate(const TimeGrid& grid);

// Finite mark space: atom values are scalar labels, one intensity per atom.
// Integrals against the intensity measure reduce to intensity-weighted sums.
struct MarkSpace {
    VectorXd values;
    VectorXd intensities;

    int n_marks() const { return static_cast<int>(values.size()); }
};

void validate(const MarkSpace& marks);

// Pre-sampled driving noise for a path ensemble: Brownian increments and raw
// jump counts per mark. Every entry is addressed by (seed, path, step, mark)
// through the counter-based generator, so regeneration is bit-exact and
// independent of the worker count used to fill the arrays.
struct NoiseBundle {
    TimeGrid grid;
    MarkSpace marks;
    int n_paths = 0;
    std::uint64_t seed = 0;

    MatrixXd dw;                       // n_steps x n_paths
    std::vector<Eigen::MatrixXi> jumps;  // per mark: n_steps x n_paths counts

    // Count minus its compensator nu_i dt for one (step, mark), over all paths.
    Eigen::RowVectorXd compensated(int step, int mark) const {
        return jumps[mark].row(step).cast<double>().array() -
               marks.intensities[mark] * grid.dt();
    }
};

NoiseBundle sample_noise(const TimeGrid& grid, const MarkSpace& marks, int n_paths,
                         std::uint64_t seed);

// Per-path value of sum_k sum_i (integrand(path, step, mark), dN - nu dt).
// Returns one scalar per path; integrand values pair against the H product.
VectorXd compensated_sum(const NoiseBundle& noise,
                         const std::function<double(int path, int step, int mark)>& integrand);

// Aggregates groups of `factor` consecutive increments onto the coarser grid
// with n_steps / factor steps. Same paths and seed; used for strong-order
// studies where coarse runs must see the same underlying noise.
NoiseBundle coarsen_noise(const NoiseBundle& fine, int factor);

// Binary dump for replay; load restores the bundle bit-exactly.
void save_noise(const NoiseBundle& noise, const std::string& path);
NoiseBundle load_noise(const std::string& path);

}  // namespace seeopt
