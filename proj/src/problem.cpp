#include "seeopt/problem.hpp"

#include <cmath>

#include "seeopt/rng.hpp"

namespace seeopt {

void validate(const ProblemSpec& spec, const GalerkinSpace& space, const MarkSpace& marks) {
    if (spec.state_dim != space.dim)
        throw ConfigError("ProblemSpec: state_dim does not match space dim");
    if (spec.control_dim <= 0) throw ConfigError("ProblemSpec: control_dim must be positive");
    if (spec.initial_state.size() != spec.state_dim)
        throw ConfigError("ProblemSpec: initial_state size mismatch");
    if (!spec.drift || !spec.diffusion || !spec.running_cost || !spec.terminal_cost)
        throw ConfigError("ProblemSpec: missing coefficient callbacks");
    if (!spec.drift_x_adj || !spec.drift_u_adj || !spec.diffusion_x_adj ||
        !spec.diffusion_u_adj || !spec.running_cost_x || !spec.running_cost_u ||
        !spec.terminal_cost_x)
        throw ConfigError("ProblemSpec: missing partial callbacks");
    if (marks.n_marks() > 0 && (!spec.jump || !spec.jump_x_adj || !spec.jump_u_adj))
        throw ConfigError("ProblemSpec: jump callbacks required when marks are present");
    if (spec.has_constraint() != static_cast<bool>(spec.constraint_x))
        throw ConfigError("ProblemSpec: constraint and constraint_x must come together");

    // probe each mark once so a coefficient/mark-space mismatch surfaces here
    // as a configuration error instead of deep inside a simulation
    for (int i = 0; i < marks.n_marks(); ++i) {
        try {
            const MatrixXd v = spec.jump(0.0, i, spec.initial_state,
                                         VectorXd::Zero(spec.control_dim));
            if (v.rows() != spec.state_dim)
                throw ConfigError("ProblemSpec: jump coefficient has wrong state dim");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("ProblemSpec: jump coefficient rejects mark " +
                              std::to_string(i) + ": " + e.what());
        }
    }
}

void validate(const ControlSet& set) {
    if (set.lower.size() != set.upper.size() || set.lower.size() == 0)
        throw ConfigError("ControlSet: bad box shape");
    if ((set.lower.array() > set.upper.array()).any())
        throw ConfigError("ControlSet: lower bound exceeds upper bound");
    if (!(set.radius > 0.0)) throw ConfigError("ControlSet: radius must be positive");
}

double control_distance(const ControlProcess& a, const ControlProcess& b, const TimeGrid& grid) {
    if (a.dim() != b.dim() || a.n_steps() != b.n_steps())
        throw ConfigError("control_distance: shape mismatch");
    if (a.n_steps() != grid.n_steps)
        throw ConfigError("control_distance: control does not match grid");
    return std::sqrt(grid.dt() * (a.values - b.values).squaredNorm());
}

double control_norm(const ControlProcess& u, const TimeGrid& grid) {
    return control_distance(u, ControlProcess::zero(u.dim(), u.n_steps()), grid);
}

ControlProcess project_control(const ControlProcess& u, const ControlSet& set,
                               const TimeGrid& grid) {
    ControlProcess out = u;
    for (int k = 0; k < u.n_steps(); ++k) out.values.col(k) = set.clamp(u.values.col(k));
    const double norm = control_norm(out, grid);
    if (norm > set.radius) out.values *= set.radius / norm;
    return out;
}

bool is_admissible(const ControlProcess& u, const ControlSet& set, const TimeGrid& grid) {
    for (int k = 0; k < u.n_steps(); ++k)
        if (!set.contains(u.at(k))) return false;
    return control_norm(u, grid) <= set.radius * (1.0 + 1e-12);
}

ControlProcess convex_perturbation(const ControlProcess& u, const ControlProcess& v, double rho) {
    if (u.dim() != v.dim() || u.n_steps() != v.n_steps())
        throw ConfigError("convex_perturbation: shape mismatch");
    return {u.values + rho * (v.values - u.values)};
}

namespace {

void check_lq_shapes(const LqData& d) {
    const auto n = d.initial_state.size();
    if (n == 0) throw ConfigError("lq: empty initial state");
    const auto m = d.d.cols();
    if (m == 0 || d.d.rows() != n) throw ConfigError("lq: D must be N x m");
    if (d.b0.size() != n) throw ConfigError("lq: b0 size mismatch");
    if (d.g.size() != 0 && (d.g.rows() != n || d.g.cols() != n))
        throw ConfigError("lq: G must be N x N");
    if (d.g0.size() != n) throw ConfigError("lq: g0 size mismatch");
    for (const auto& s : d.sigma)
        if (s.size() != n) throw ConfigError("lq: sigma size mismatch");
    if (d.q.rows() != n || d.q.cols() != n) throw ConfigError("lq: Q must be N x N");
    if (d.r.rows() != m || d.r.cols() != m) throw ConfigError("lq: R must be m x m");
    if (d.f.rows() != n || d.f.cols() != n) throw ConfigError("lq: F must be N x N");
    if (d.constrained && d.c.size() != n) throw ConfigError("lq: constraint vector size mismatch");
    if (!d.r.isApprox(d.r.transpose(), 1e-12)) throw ConfigError("lq: R must be symmetric");
    Eigen::LLT<MatrixXd> llt(d.r);
    if (llt.info() != Eigen::Success)
        throw ConfigError("lq: R must be positive definite");
}

Eigen::RowVectorXd quad_form(const MatrixXd& m, const MatrixXd& x) {
    return 0.5 * (x.cwiseProduct(m * x)).colwise().sum();
}

}  // namespace

ProblemSpec make_lq_problem(const LqData& data) {
    check_lq_shapes(data);
    const int n = static_cast<int>(data.initial_state.size());
    const int m = static_cast<int>(data.d.cols());
    const bool has_g = data.g.size() != 0;

    ProblemSpec spec;
    spec.state_dim = n;
    spec.control_dim = m;
    spec.initial_state = data.initial_state;

    spec.drift = [data, has_g](double, const MatrixXd& x, const VectorXd& u) -> MatrixXd {
        MatrixXd out = (data.b0 + data.d * u).replicate(1, x.cols());
        if (has_g) out += data.g * x;
        return out;
    };
    spec.drift_x_adj = [data, has_g, n](double, const MatrixXd& x, const VectorXd&,
                                        const MatrixXd& v) -> MatrixXd {
        if (has_g) return data.g.transpose() * v;
        return MatrixXd::Zero(n, x.cols());
    };
    spec.drift_u_adj = [data](double, const MatrixXd&, const VectorXd&,
                              const MatrixXd& v) -> MatrixXd { return data.d.transpose() * v; };

    spec.diffusion = [data](double, const MatrixXd& x, const VectorXd&) -> MatrixXd {
        return data.g0.replicate(1, x.cols());
    };
    spec.diffusion_x_adj = [n](double, const MatrixXd& x, const VectorXd&,
                               const MatrixXd&) -> MatrixXd {
        return MatrixXd::Zero(n, x.cols());
    };
    spec.diffusion_u_adj = [m](double, const MatrixXd& x, const VectorXd&,
                               const MatrixXd&) -> MatrixXd {
        return MatrixXd::Zero(m, x.cols());
    };

    spec.jump = [data](double, int mark, const MatrixXd& x, const VectorXd&) -> MatrixXd {
        return data.sigma.at(mark).replicate(1, x.cols());
    };
    spec.jump_x_adj = [n](double, int, const MatrixXd& x, const VectorXd&,
                          const MatrixXd&) -> MatrixXd { return MatrixXd::Zero(n, x.cols()); };
    spec.jump_u_adj = [m](double, int, const MatrixXd& x, const VectorXd&,
                          const MatrixXd&) -> MatrixXd { return MatrixXd::Zero(m, x.cols()); };

    spec.running_cost = [data](double, const MatrixXd& x, const VectorXd& u) -> Eigen::RowVectorXd {
        const double uru = 0.5 * u.dot(data.r * u);
        return quad_form(data.q, x).array() + uru;
    };
    spec.running_cost_x = [data](double, const MatrixXd& x, const VectorXd&) -> MatrixXd {
        return data.q * x;
    };
    spec.running_cost_u = [data](double, const MatrixXd& x, const VectorXd& u) -> MatrixXd {
        return (data.r * u).replicate(1, x.cols());
    };
    spec.terminal_cost = [data](const MatrixXd& x) -> Eigen::RowVectorXd {
        return quad_form(data.f, x);
    };
    spec.terminal_cost_x = [data](const MatrixXd& x) -> MatrixXd { return data.f * x; };

    if (data.constrained) {
        spec.constraint = [data](const MatrixXd& x) -> Eigen::RowVectorXd {
            return (data.c.transpose() * x).array() - data.target;
        };
        spec.constraint_x = [data](const MatrixXd& x) -> MatrixXd {
            return data.c.replicate(1, x.cols());
        };
    }
    return spec;
}

ProblemSpec make_bilinear_problem(const BilinearData& data) {
    LqData lq;
    lq.initial_state = data.initial_state;
    lq.b0 = data.b0;
    lq.d = data.d;
    lq.g = data.g;
    lq.g0 = data.g0;
    lq.sigma = data.sigma;
    lq.q = data.q;
    lq.r = data.r;
    lq.f = data.f;
    lq.constrained = data.constrained;
    lq.c = data.c;
    lq.target = data.target;
    check_lq_shapes(lq);

    const int n = static_cast<int>(data.initial_state.size());
    const int m = static_cast<int>(data.d.cols());
    if (static_cast<int>(data.c_mats.size()) != m)
        throw ConfigError("bilinear: need one C matrix per control channel");
    if (data.e.rows() != n || data.e.cols() != n) throw ConfigError("bilinear: E must be N x N");
    if (data.sigma_mats.size() != data.sigma.size())
        throw ConfigError("bilinear: need an S matrix per mark");

    ProblemSpec spec = make_lq_problem(lq);

    spec.drift = [data](double, const MatrixXd& x, const VectorXd& u) -> MatrixXd {
        MatrixXd out = (data.b0 + data.d * u).replicate(1, x.cols());
        if (data.g.size() != 0) out += data.g * x;
        for (int j = 0; j < u.size(); ++j) out += u[j] * (data.c_mats[j] * x);
        return out;
    };
    spec.drift_x_adj = [data](double, const MatrixXd& x, const VectorXd& u,
                              const MatrixXd& v) -> MatrixXd {
        MatrixXd jac = data.g.size() != 0 ? data.g : MatrixXd::Zero(x.rows(), x.rows());
        for (int j = 0; j < u.size(); ++j) jac += u[j] * data.c_mats[j];
        return jac.transpose() * v;
    };
    spec.drift_u_adj = [data, m](double, const MatrixXd& x, const VectorXd&,
                                 const MatrixXd& v) -> MatrixXd {
        MatrixXd out(m, x.cols());
        for (int j = 0; j < m; ++j) {
            MatrixXd col_j = data.c_mats[j] * x;  // d drift / d u_j per path
            col_j.colwise() += data.d.col(j);
            out.row(j) = (col_j.cwiseProduct(v)).colwise().sum();
        }
        return out;
    };

    spec.diffusion = [data](double, const MatrixXd& x, const VectorXd&) -> MatrixXd {
        return data.g0.replicate(1, x.cols()) + data.e * x;
    };
    spec.diffusion_x_adj = [data](double, const MatrixXd&, const VectorXd&,
                                  const MatrixXd& v) -> MatrixXd {
        return data.e.transpose() * v;
    };

    spec.jump = [data](double, int mark, const MatrixXd& x, const VectorXd&) -> MatrixXd {
        return data.sigma.at(mark).replicate(1, x.cols()) + data.sigma_mats.at(mark) * x;
    };
    spec.jump_x_adj = [data](double, int mark, const MatrixXd&, const VectorXd&,
                             const MatrixXd& v) -> MatrixXd {
        return data.sigma_mats.at(mark).transpose() * v;
    };
    return spec;
}

ProblemAudit audit_problem(const ProblemSpec& spec, const MarkSpace& marks, int n_probes,
                           std::uint64_t seed, double rel_tol) {
    const int n = spec.state_dim;
    const int m = spec.control_dim;
    const double h = 1e-5;
    RngStream rng(seed, /*stream=*/0xa0d1);
    ProblemAudit audit;

    const auto jac_rel_err = [&](const MatrixXd& supplied, const MatrixXd& fd) {
        const double scale = std::max(1.0, fd.norm());
        return (supplied - fd).norm() / scale;
    };

    for (int probe = 0; probe < n_probes; ++probe) {
        const double t = rng.uniform(0.0, 1.0);
        const VectorXd x = rng.normal_vector(n);
        const VectorXd u = rng.normal_vector(m);

        struct Entry {
            std::function<VectorXd(const VectorXd&, const VectorXd&)> eval;
            std::function<VectorXd(const VectorXd&)> adj_x;  // (d/dx)^T e_i rows
            std::function<VectorXd(const VectorXd&)> adj_u;
        };
        std::vector<Entry> entries;
        entries.push_back({[&](const VectorXd& xx, const VectorXd& uu) {
                               return VectorXd(spec.drift(t, xx, uu).col(0));
                           },
                           [&](const VectorXd& v) {
                               return VectorXd(spec.drift_x_adj(t, x, u, v).col(0));
                           },
                           [&](const VectorXd& v) {
                               return VectorXd(spec.drift_u_adj(t, x, u, v).col(0));
                           }});
        entries.push_back({[&](const VectorXd& xx, const VectorXd& uu) {
                               return VectorXd(spec.diffusion(t, xx, uu).col(0));
                           },
                           [&](const VectorXd& v) {
                               return VectorXd(spec.diffusion_x_adj(t, x, u, v).col(0));
                           },
                           [&](const VectorXd& v) {
                               return VectorXd(spec.diffusion_u_adj(t, x, u, v).col(0));
                           }});
        for (int i = 0; i < marks.n_marks(); ++i) {
            entries.push_back({[&, i](const VectorXd& xx, const VectorXd& uu) {
                                   return VectorXd(spec.jump(t, i, xx, uu).col(0));
                               },
                               [&, i](const VectorXd& v) {
                                   return VectorXd(spec.jump_x_adj(t, i, x, u, v).col(0));
                               },
                               [&, i](const VectorXd& v) {
                                   return VectorXd(spec.jump_u_adj(t, i, x, u, v).col(0));
                               }});
        }

        for (const auto& entry : entries) {
            // Supplied Jacobians reconstructed row-by-row from adjoint applies.
            MatrixXd jx(n, n), ju(n, m);
            for (int i = 0; i < n; ++i) {
                jx.row(i) = entry.adj_x(VectorXd::Unit(n, i)).transpose();
                ju.row(i) = entry.adj_u(VectorXd::Unit(n, i)).transpose();
            }
            MatrixXd fdx(n, n), fdu(n, m);
            for (int j = 0; j < n; ++j)
                fdx.col(j) =
                    (entry.eval(x + h * VectorXd::Unit(n, j), u) -
                     entry.eval(x - h * VectorXd::Unit(n, j), u)) /
                    (2 * h);
            for (int j = 0; j < m; ++j)
                fdu.col(j) =
                    (entry.eval(x, u + h * VectorXd::Unit(m, j)) -
                     entry.eval(x, u - h * VectorXd::Unit(m, j))) /
                    (2 * h);
            audit.max_partial_rel_err =
                std::max({audit.max_partial_rel_err, jac_rel_err(jx, fdx), jac_rel_err(ju, fdu)});

            const VectorXd x2 = x + rng.normal_vector(n);
            const double lip =
                (entry.eval(x2, u) - entry.eval(x, u)).norm() / std::max(1e-12, (x2 - x).norm());
            audit.lipschitz_x = std::max(audit.lipschitz_x, lip);
        }

        // Cost gradients against FD, plus the linear growth constant.
        const VectorXd lx = spec.running_cost_x(t, x, u).col(0);
        const VectorXd lu = spec.running_cost_u(t, x, u).col(0);
        VectorXd fdlx(n), fdlu(m);
        for (int j = 0; j < n; ++j)
            fdlx[j] = (spec.running_cost_at(t, x + h * VectorXd::Unit(n, j), u) -
                       spec.running_cost_at(t, x - h * VectorXd::Unit(n, j), u)) /
                      (2 * h);
        for (int j = 0; j < m; ++j)
            fdlu[j] = (spec.running_cost_at(t, x, u + h * VectorXd::Unit(m, j)) -
                       spec.running_cost_at(t, x, u - h * VectorXd::Unit(m, j))) /
                      (2 * h);
        VectorXd fx = spec.terminal_cost_x(x).col(0);
        VectorXd fdfx(n);
        for (int j = 0; j < n; ++j)
            fdfx[j] = (spec.terminal_cost_at(x + h * VectorXd::Unit(n, j)) -
                       spec.terminal_cost_at(x - h * VectorXd::Unit(n, j))) /
                      (2 * h);
        audit.max_partial_rel_err =
            std::max({audit.max_partial_rel_err, jac_rel_err(lx, fdlx), jac_rel_err(lu, fdlu),
                      jac_rel_err(fx, fdfx)});
        if (spec.has_constraint()) {
            VectorXd cx = spec.constraint_x(x).col(0);
            VectorXd fdcx(n);
            for (int j = 0; j < n; ++j)
                fdcx[j] = (spec.constraint_at(x + h * VectorXd::Unit(n, j)) -
                           spec.constraint_at(x - h * VectorXd::Unit(n, j))) /
                          (2 * h);
            audit.max_partial_rel_err = std::max(audit.max_partial_rel_err, jac_rel_err(cx, fdcx));
        }
        audit.cost_growth = std::max(audit.cost_growth,
                                     (lx.norm() + lu.norm()) / (1.0 + x.norm() + u.norm()));
    }
    audit.partials_consistent = audit.max_partial_rel_err <= rel_tol;
    return audit;
}

}  // namespace seeopt
