#pragma once

// Independent reference computations for the tests. Everything here is built
// from Eigen and the standard library alone so that agreement with the solver
// library is a genuine cross-check, not a restatement of the same code.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracles {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Classic RK4 over [t0, t1]; State is VectorXd or MatrixXd. Returns the value
// at every one of `nodes + 1` equally spaced grid nodes, integrating with
// `substeps` internal RK4 steps per node interval.
template <class State, class Deriv>
std::vector<State> rk4_path(const Deriv& deriv, State y, double t0, double t1, int nodes,
                            int substeps) {
    std::vector<State> out;
    out.reserve(nodes + 1);
    out.push_back(y);
    const double node_h = (t1 - t0) / nodes;
    const double h = node_h / substeps;
    for (int i = 0; i < nodes; ++i) {
        for (int s = 0; s < substeps; ++s) {
            const double t = t0 + i * node_h + s * h;
            const State k1 = deriv(t, y);
            const State k2 = deriv(t + 0.5 * h, State(y + 0.5 * h * k1));
            const State k3 = deriv(t + 0.5 * h, State(y + 0.5 * h * k2));
            const State k4 = deriv(t + h, State(y + h * k3));
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push_back(y);
    }
    return out;
}

// Deterministic linear dynamics x' = full_drift x + forcing(t) with the full
// drift matrix passed explicitly (diagonal part plus coupling).
inline std::vector<VectorXd> linear_forward_path(
    const MatrixXd& full_drift, const std::function<VectorXd(double)>& forcing,
    const VectorXd& x0, double horizon, int nodes, int substeps) {
    return rk4_path([&](double t, const VectorXd& x) -> VectorXd {
        return full_drift * x + forcing(t);
    }, x0, 0.0, horizon, nodes, substeps);
}

// Backward costate ODE -p' = full_drift' p + driver(t), p(T) given. Solved in
// reversed time s = T - t and returned in forward order on the grid nodes.
inline std::vector<VectorXd> linear_adjoint_path(
    const MatrixXd& full_drift, const std::function<VectorXd(double)>& driver,
    const VectorXd& terminal, double horizon, int nodes, int substeps) {
    auto reversed = rk4_path([&](double s, const VectorXd& p) -> VectorXd {
        return full_drift.transpose() * p + driver(horizon - s);
    }, terminal, 0.0, horizon, nodes, substeps);
    std::reverse(reversed.begin(), reversed.end());
    return reversed;
}

// Riccati pair for the costate representation p(t) = P(t) x(t) + s(t):
//   P' = -(Abar' P + P Abar + lambda Q),        P(T) = lambda F
//   s' = -(Abar' s + P (b0 + D u(t)) + mu * 0), s(T) = mu c
struct RiccatiPath {
    std::vector<MatrixXd> p;
    std::vector<VectorXd> s;
};

inline RiccatiPath riccati_path(const MatrixXd& abar, const MatrixXd& q, const MatrixXd& f,
                                const VectorXd& c, double lambda, double mu,
                                const std::function<VectorXd(double)>& affine, double horizon,
                                int nodes, int substeps) {
    // s couples to P(t), so both integrate together in reversed time
    MatrixXd p_cur = lambda * f;
    VectorXd s_cur = mu * c;
    std::vector<MatrixXd> p_rev{p_cur};
    std::vector<VectorXd> s_rev{s_cur};
    const double node_h = horizon / nodes;
    const double h = node_h / substeps;
    const auto deriv = [&](double srel, const MatrixXd& p, const VectorXd& s)
        -> std::pair<MatrixXd, VectorXd> {
        return {MatrixXd(abar.transpose() * p + p * abar + lambda * q),
                VectorXd(abar.transpose() * s + p * affine(horizon - srel))};
    };
    for (int i = 0; i < nodes; ++i) {
        for (int step = 0; step < substeps; ++step) {
            const double s0 = i * node_h + step * h;
            const auto [kp1, ks1] = deriv(s0, p_cur, s_cur);
            const auto [kp2, ks2] = deriv(s0 + 0.5 * h, MatrixXd(p_cur + 0.5 * h * kp1),
                                          VectorXd(s_cur + 0.5 * h * ks1));
            const auto [kp3, ks3] = deriv(s0 + 0.5 * h, MatrixXd(p_cur + 0.5 * h * kp2),
                                          VectorXd(s_cur + 0.5 * h * ks2));
            const auto [kp4, ks4] = deriv(s0 + h, MatrixXd(p_cur + h * kp3),
                                          VectorXd(s_cur + h * ks3));
            p_cur += (h / 6.0) * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4);
            s_cur += (h / 6.0) * (ks1 + 2.0 * ks2 + 2.0 * ks3 + ks4);
        }
        p_rev.push_back(p_cur);
        s_rev.push_back(s_cur);
    }
    std::reverse(p_rev.begin(), p_rev.end());
    std::reverse(s_rev.begin(), s_rev.end());
    RiccatiPath out;
    out.p = std::move(p_rev);
    out.s = std::move(s_rev);
    return out;
}

// Central difference of a scalar functional along a fixed direction.
inline double central_difference(const std::function<double(double)>& value_at, double rho) {
    return (value_at(rho) - value_at(-rho)) / (2.0 * rho);
}

// Kahan-compensated reversed-order sum; reference for the deterministic
// pairwise reductions (same value, different algorithm and order).
inline double compensated_reverse_sum(const std::vector<double>& v) {
    double sum = 0.0, carry = 0.0;
    for (auto it = v.rbegin(); it != v.rend(); ++it) {
        const double y = *it - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    return sum;
}

}  // namespace oracles
