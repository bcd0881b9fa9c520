#pragma once

#include <cstdint>
#include <vector>

#include "seeopt/common.hpp"

namespace seeopt {

// Galerkin coordinates of a V c H c V* triple. H is the plain Euclidean norm,
// V applies the weights, V* divides by them; the duality pairing of V* against
// V coincides with the H inner product in coordinates.
struct GalerkinSpace {
    int dim = 0;
    VectorXd v_weights;  // one weight per mode, all >= 1

    double h_norm2(const VectorXd& x) const { return x.squaredNorm(); }
    double h_norm(const VectorXd& x) const { return x.norm(); }
    double v_norm2(const VectorXd& x) const {
        return (v_weights.array() * x.array().square()).sum();
    }
    double v_norm(const VectorXd& x) const { return std::sqrt(v_norm2(x)); }
    double vstar_norm2(const VectorXd& f) const {
        return (f.array().square() / v_weights.array()).sum();
    }
    double vstar_norm(const VectorXd& f) const { return std::sqrt(vstar_norm2(f)); }
    double pairing(const VectorXd& f, const VectorXd& x) const { return f.dot(x); }
};

void validate(const GalerkinSpace& space);

// Drift operator A and its diffusion companion B, piecewise constant on the
// time grid: one stored matrix means time-constant, otherwise one per step.
struct OperatorPair {
    std::vector<MatrixXd> a_steps;
    std::vector<MatrixXd> b_steps;

    bool time_constant() const { return a_steps.size() == 1 && b_steps.size() == 1; }
    int stored_steps() const { return static_cast<int>(std::max(a_steps.size(), b_steps.size())); }

    const MatrixXd& a(int step) const {
        return a_steps.size() == 1 ? a_steps.front() : a_steps.at(step);
    }
    const MatrixXd& b(int step) const {
        return b_steps.size() == 1 ? b_steps.front() : b_steps.at(step);
    }
    // Adjoints are exact transposes in coordinates.
    MatrixXd a_adjoint(int step) const { return a(step).transpose(); }
    MatrixXd b_adjoint(int step) const { return b(step).transpose(); }
};

void validate(const OperatorPair& pair, const GalerkinSpace& space);

// Sampled certificate of -<A x, x> + lambda ||x||_H^2 >= alpha ||x||_V^2 + ||B x||_H^2.
struct CoercivityCertificate {
    double alpha = 0.0;
    double lambda_shift = 0.0;
    bool verified = false;
    double worst_margin = 0.0;
    VectorXd worst_vector;
    int worst_step = 0;
};

inline constexpr double kCoercivityFloor = -1e-10;

// Margin of the coercivity inequality at one probe; nonnegative means the
// inequality holds there.
double coercivity_margin(const OperatorPair& pair, const GalerkinSpace& space, int step,
                         const VectorXd& x, double alpha, double lambda_shift);

// Probes every stored step with the basis plus n_random unit vectors and
// records the worst witness. verified == all margins >= kCoercivityFloor.
CoercivityCertificate check_coercivity(const OperatorPair& pair, const GalerkinSpace& space,
                                       double alpha, double lambda_shift, int n_random = 64,
                                       std::uint64_t seed = 0);

// Spectral heat model: mode k carries eigenvalue -viscosity k^2 pi^2. The
// companion space uses weights 1 + viscosity k^2 pi^2, which makes the pair
// pass check_coercivity(alpha = viscosity / 2, lambda_shift = 1) whenever
// viscosity <= 2 (per-mode margin (1 - viscosity/2)(1 + viscosity k^2 pi^2)).
GalerkinSpace make_heat_space(int n_modes, double viscosity);
OperatorPair make_heat_pair(const GalerkinSpace& space, double viscosity);

}  // namespace seeopt
