#include "seeopt/gelfand.hpp"

#include <cmath>

#include "seeopt/rng.hpp"

namespace seeopt {

void validate(const GalerkinSpace& space) {
    if (space.dim <= 0) throw ConfigError("GalerkinSpace: dim must be positive");
    if (space.v_weights.size() != space.dim)
        throw ConfigError("GalerkinSpace: v_weights size does not match dim");
    for (int k = 0; k < space.dim; ++k)
        if (!(space.v_weights[k] >= 1.0))
            throw ConfigError("GalerkinSpace: v_weights must all be >= 1");
}

void validate(const OperatorPair& pair, const GalerkinSpace& space) {
    if (pair.a_steps.empty() || pair.b_steps.empty())
        throw ConfigError("OperatorPair: need at least one stored A and B matrix");
    if (pair.a_steps.size() != pair.b_steps.size() && pair.a_steps.size() != 1 &&
        pair.b_steps.size() != 1)
        throw ConfigError("OperatorPair: A and B step counts disagree");
    for (const auto& m : pair.a_steps)
        if (m.rows() != space.dim || m.cols() != space.dim)
            throw ConfigError("OperatorPair: A matrix shape does not match space dim");
    for (const auto& m : pair.b_steps)
        if (m.rows() != space.dim || m.cols() != space.dim)
            throw ConfigError("OperatorPair: B matrix shape does not match space dim");
}

double coercivity_margin(const OperatorPair& pair, const GalerkinSpace& space, int step,
                         const VectorXd& x, double alpha, double lambda_shift) {
    const VectorXd ax = pair.a(step) * x;
    const VectorXd bx = pair.b(step) * x;
    return -space.pairing(ax, x) + lambda_shift * space.h_norm2(x) - alpha * space.v_norm2(x) -
           space.h_norm2(bx);
}

CoercivityCertificate check_coercivity(const OperatorPair& pair, const GalerkinSpace& space,
                                       double alpha, double lambda_shift, int n_random,
                                       std::uint64_t seed) {
    validate(space);
    validate(pair, space);

    CoercivityCertificate cert;
    cert.alpha = alpha;
    cert.lambda_shift = lambda_shift;

    std::vector<VectorXd> probes;
    probes.reserve(space.dim + n_random);
    for (int k = 0; k < space.dim; ++k)
        probes.push_back(VectorXd::Unit(space.dim, k));
    RngStream rng(seed, /*stream=*/0x0c0e);
    for (int i = 0; i < n_random; ++i) probes.push_back(rng.unit_vector(space.dim));

    bool first = true;
    for (int step = 0; step < pair.stored_steps(); ++step) {
        for (const auto& x : probes) {
            const double m = coercivity_margin(pair, space, step, x, alpha, lambda_shift);
            if (first || m < cert.worst_margin) {
                cert.worst_margin = m;
                cert.worst_vector = x;
                cert.worst_step = step;
                first = false;
            }
        }
    }
    cert.verified = cert.worst_margin >= kCoercivityFloor;
    return cert;
}

GalerkinSpace make_heat_space(int n_modes, double viscosity) {
    if (n_modes <= 0) throw ConfigError("make_heat_space: n_modes must be positive");
    if (!(viscosity > 0.0)) throw ConfigError("make_heat_space: viscosity must be positive");
    GalerkinSpace space;
    space.dim = n_modes;
    space.v_weights.resize(n_modes);
    for (int k = 0; k < n_modes; ++k) {
        const double mode = static_cast<double>(k + 1);
        space.v_weights[k] = 1.0 + viscosity * mode * mode * M_PI * M_PI;
    }
    return space;
}

OperatorPair make_heat_pair(const GalerkinSpace& space, double viscosity) {
    validate(space);
    if (!(viscosity > 0.0)) throw ConfigError("make_heat_pair: viscosity must be positive");
    OperatorPair pair;
    VectorXd diag(space.dim);
    for (int k = 0; k < space.dim; ++k) {
        const double mode = static_cast<double>(k + 1);
        diag[k] = -viscosity * mode * mode * M_PI * M_PI;
    }
    pair.a_steps.push_back(MatrixXd(diag.asDiagonal()));
    pair.b_steps.push_back(MatrixXd::Zero(space.dim, space.dim));
    return pair;
}

}  // namespace seeopt
