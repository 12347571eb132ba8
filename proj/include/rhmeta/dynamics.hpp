// rhmeta dynamics: Bouc-Wen SDOF and shear-chain reference solvers on adaptive RK4.
#pragma once

#include "rhmeta/common.hpp"
#include "rhmeta/excitation.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <optional>
#include <sstream>

namespace rhmeta::dynamics {

using excitation::ExcitationKind;
using excitation::ExcitationRecord;

// =============================================================================
// Bouc-Wen law
// =============================================================================

/// SDOF Bouc-Wen oscillator (per unit mass):
///   u'' + 2 zeta omega u' + omega^2 [rho u + (1 - rho) z] = -a
///   z'  = gamma u' - alpha |u'| |z|^(n-1) z - beta u' |z|^n
struct BoucWenParams {
    double omega = 5.97;
    double zeta = 0.02;
    double rho = 0.0;
    double alpha = 50.0;
    double beta = 0.0;
    double gamma = 1.0;
    double n_exp = 2.0;

    /// Ultimate hysteretic displacement (gamma / (alpha + beta))^(1/n).
    double z_ultimate() const { return std::pow(gamma / (alpha + beta), 1.0 / n_exp); }
};

inline void validate(const BoucWenParams &p) {
    require(p.omega > 0.0, "Bouc-Wen: omega must be positive");
    require(p.zeta >= 0.0 && p.zeta < 1.0, "Bouc-Wen: zeta must lie in [0, 1)");
    require(p.rho >= 0.0 && p.rho <= 1.0, "Bouc-Wen: rho must lie in [0, 1]");
    require(p.n_exp >= 1.0, "Bouc-Wen: n must be at least 1");
    require(p.rho == 1.0 || p.alpha + p.beta > 0.0, "Bouc-Wen: alpha + beta must be positive when rho < 1");
}

namespace detail {

/// |x|^n for x >= 0, by repeated multiplication when n is a small integer.
inline double abs_pow(double x, double n) {
    if (n == 1.0) return x;
    if (n == 2.0) return x * x;
    if (n == 3.0) return x * x * x;
    if (n == 4.0) {
        const double x2 = x * x;
        return x2 * x2;
    }
    return std::pow(x, n);
}

} // namespace detail

/// Hysteretic rate z' for deformation rate `rate`. |z|^(n-1) z is evaluated as
/// sign(z) |z|^n, which is finite at z = 0 for every n >= 1.
inline double boucwen_zdot(double rate, double z, double alpha, double beta, double gamma, double n) {
    const double zn = detail::abs_pow(std::abs(z), n);
    return gamma * rate - alpha * std::abs(rate) * std::copysign(zn, z) - beta * rate * zn;
}

struct BoucWenRates {
    double du, dv, dz;
};

/// Right-hand side of the SDOF Bouc-Wen system for state (u, v, z) under base
/// acceleration a_g [m/s^2].
inline BoucWenRates boucwen_rhs(double u, double v, double z, double a_g, const BoucWenParams &p) {
    const double w2 = p.omega * p.omega;
    return {v, -a_g - 2.0 * p.zeta * p.omega * v - w2 * (p.rho * u + (1.0 - p.rho) * z),
            boucwen_zdot(v, z, p.alpha, p.beta, p.gamma, p.n_exp)};
}

// =============================================================================
// RK4
// =============================================================================

struct Rk4Options {
    double safety = 0.9;
    double max_growth = 4.0;
    double max_shrink = 0.1;
    double min_step_fraction = 0x1.0p-20; ///< of the grid step
};

struct Trajectory {
    Matrix states; ///< n_state x n_grid
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
};

namespace detail {

/// Forcing linearly interpolated inside [t_j, t_j + dt]; `frac` in [0, 1].
inline void interpolate(const Matrix &forcing, Eigen::Index j, double frac, Vector &out) {
    if (j + 1 >= forcing.cols()) {
        out = forcing.col(j);
        return;
    }
    out = (1.0 - frac) * forcing.col(j) + frac * forcing.col(j + 1);
}

/// Classical RK4 step of size h from local time `s` (relative to grid point j).
template <typename Rhs>
void rk4_step(Rhs &rhs, const Vector &x, const Matrix &forcing, Eigen::Index j, double dt, double s, double h,
              Vector &out, Vector &k1, Vector &k2, Vector &k3, Vector &k4, Vector &tmp, Vector &f) {
    interpolate(forcing, j, s / dt, f);
    rhs(x, f, k1);
    interpolate(forcing, j, (s + 0.5 * h) / dt, f);
    tmp = x + 0.5 * h * k1;
    rhs(tmp, f, k2);
    tmp = x + 0.5 * h * k2;
    rhs(tmp, f, k3);
    interpolate(forcing, j, (s + h) / dt, f);
    tmp = x + h * k3;
    rhs(tmp, f, k4);
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

} // namespace detail

/// Fixed-step RK4 with `substeps` steps per grid interval. rhs(x, forcing, dx).
template <typename Rhs>
Trajectory rk4_fixed(Rhs &&rhs, const Vector &x0, const Matrix &forcing, double dt, int substeps = 1) {
    require(dt > 0.0 && substeps >= 1, "rk4_fixed: dt and substeps must be positive");
    const Eigen::Index n = forcing.cols();
    Trajectory traj;
    traj.states.resize(x0.size(), n);
    Vector x = x0, next, k1, k2, k3, k4, tmp, f;
    traj.states.col(0) = x;
    const double h = dt / substeps;
    for (Eigen::Index j = 0; j + 1 < n; ++j) {
        for (int k = 0; k < substeps; ++k) {
            detail::rk4_step(rhs, x, forcing, j, dt, k * h, h, next, k1, k2, k3, k4, tmp, f);
            x.swap(next);
            ++traj.accepted_steps;
        }
        traj.states.col(j + 1) = x;
    }
    return traj;
}

/// Adaptive RK4 with step doubling. A step of size h is accepted when
///   ||x_h - x_{h/2,h/2}||_inf / 15 <= tol (1 + ||x||_inf),
/// and the two-half-step solution is kept. Steps never straddle grid points, so the
/// solution is emitted exactly on the forcing grid.
template <typename Rhs>
Trajectory rk4_adaptive(Rhs &&rhs, const Vector &x0, const Matrix &forcing, double dt, double tol,
                        const Rk4Options &opt = {}) {
    require(tol > 0.0, "rk4_adaptive: tol must be positive");
    require(dt > 0.0, "rk4_adaptive: dt must be positive");
    require(forcing.cols() >= 1, "rk4_adaptive: empty forcing grid");
    const Eigen::Index n = forcing.cols();
    Trajectory traj;
    traj.states.resize(x0.size(), n);
    traj.states.col(0) = x0;
    Vector x = x0, full, half, two, k1, k2, k3, k4, tmp, f;
    double h_next = dt;
    const double h_min = dt * opt.min_step_fraction;
    for (Eigen::Index j = 0; j + 1 < n; ++j) {
        double s = 0.0;
        while (dt - s > 1e-12 * dt) {
            const double remaining = dt - s;
            double h = std::min(h_next, remaining);
            while (true) {
                detail::rk4_step(rhs, x, forcing, j, dt, s, h, full, k1, k2, k3, k4, tmp, f);
                detail::rk4_step(rhs, x, forcing, j, dt, s, 0.5 * h, half, k1, k2, k3, k4, tmp, f);
                detail::rk4_step(rhs, half, forcing, j, dt, s + 0.5 * h, 0.5 * h, two, k1, k2, k3, k4, tmp, f);
                const double err = (full - two).lpNorm<Eigen::Infinity>() / 15.0;
                const double allowed = tol * (1.0 + x.lpNorm<Eigen::Infinity>());
                if (!std::isfinite(err)) {
                    std::ostringstream msg;
                    msg << "non-finite state at t = " << (static_cast<double>(j) * dt + s);
                    throw Error(ErrorKind::StiffnessFailure, msg.str());
                }
                const double ratio = err > 0.0 ? opt.safety * std::pow(allowed / err, 0.2) : opt.max_growth;
                if (err <= allowed) {
                    x.swap(two);
                    s = (h == remaining) ? dt : s + h;
                    ++traj.accepted_steps;
                    h_next = std::min(h * std::clamp(ratio, opt.max_shrink, opt.max_growth), dt);
                    break;
                }
                ++traj.rejected_steps;
                h *= std::clamp(ratio, opt.max_shrink, 1.0);
                if (h < h_min) {
                    std::ostringstream msg;
                    msg << "step size underflow (h = " << h << ") at t = " << (static_cast<double>(j) * dt + s);
                    throw Error(ErrorKind::StiffnessFailure, msg.str());
                }
            }
        }
        traj.states.col(j + 1) = x;
    }
    return traj;
}

// =============================================================================
// Responses
// =============================================================================

/// Response histories on the excitation grid. Each spring carries its deformation
/// (drift), hysteretic state z and restoring force.
struct ResponseRecord {
    Matrix displacement;    ///< n_dof x T, m
    Matrix velocity;        ///< n_dof x T, m/s
    Matrix drift;           ///< n_spring x T, m
    Matrix hysteretic;      ///< n_spring x T, m
    Matrix restoring_force; ///< n_spring x T; N (shear chain) or m/s^2 (unit-mass SDOF)
    double dt = 0.0;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;

    std::size_t n_dof() const { return static_cast<std::size_t>(displacement.rows()); }
    std::size_t n_springs() const { return static_cast<std::size_t>(drift.rows()); }
    std::size_t steps() const { return static_cast<std::size_t>(displacement.cols()); }
};

inline Matrix base_acceleration_si(const ExcitationRecord &gm) {
    require(gm.kind == ExcitationKind::Seismic && gm.channels() == 1,
            "seismic simulation needs a single-channel ground-motion record");
    return gm.unit == "g" ? Matrix(gm.samples * kGravity) : gm.samples;
}

inline ResponseRecord simulate_sdof_boucwen(const BoucWenParams &p, const ExcitationRecord &gm, double tol = 1e-5) {
    validate(p);
    require(gm.dt > 0.0 && gm.steps() >= 1, "simulate_sdof_boucwen: empty record");
    const Matrix acc = base_acceleration_si(gm);
    auto rhs = [&p](const Vector &x, const Vector &f, Vector &dx) {
        const BoucWenRates r = boucwen_rhs(x[0], x[1], x[2], f[0], p);
        dx.resize(3);
        dx << r.du, r.dv, r.dz;
    };
    const Trajectory traj = rk4_adaptive(rhs, Vector::Zero(3), acc, gm.dt, tol);
    ResponseRecord out;
    out.dt = gm.dt;
    out.displacement = traj.states.row(0);
    out.velocity = traj.states.row(1);
    out.drift = traj.states.row(0);
    out.hysteretic = traj.states.row(2);
    const double w2 = p.omega * p.omega;
    out.restoring_force = w2 * (p.rho * traj.states.row(0) + (1.0 - p.rho) * traj.states.row(2));
    out.accepted_steps = traj.accepted_steps;
    out.rejected_steps = traj.rejected_steps;
    return out;
}

// =============================================================================
// Shear building
// =============================================================================

/// Interstory Bouc-Wen spring: F = k_e [rho d + (1 - rho) z], z governed by the Bouc-Wen
/// rate law in the drift d.
struct StorySpring {
    double k_e = 1.0;
    double rho = 0.1;
    double alpha = 0.5;
    double beta = 0.5;
    double gamma = 1.0;
    double n_exp = 2.0;

    double yield_drift() const { return std::pow(gamma / (alpha + beta), 1.0 / n_exp); }
    double force(double drift, double z) const { return k_e * (rho * drift + (1.0 - rho) * z); }
};

/// Spring whose ultimate hysteretic drift equals `yield_drift` (gamma = 1, alpha = beta).
inline StorySpring make_story_spring(double k_e, double rho, double yield_drift, double n_exp = 2.0) {
    require(yield_drift > 0.0, "story spring: yield drift must be positive");
    const double sum = 1.0 / std::pow(yield_drift, n_exp);
    return StorySpring{k_e, rho, 0.5 * sum, 0.5 * sum, 1.0, n_exp};
}

struct ShearBuildingParams {
    std::vector<double> masses;        ///< kg, floor 1 .. roof
    std::vector<StorySpring> springs;  ///< story 1 (ground to floor 1) .. top story
    double a0 = 0.0;                   ///< Rayleigh mass coefficient, 1/s
    double a1 = 0.0;                   ///< Rayleigh stiffness coefficient, s
    double eta = 1.0;                  ///< random damping factor

    std::size_t n_stories() const { return masses.size(); }
};

inline void validate(const ShearBuildingParams &p) {
    require(p.n_stories() >= 1, "shear building: at least one story");
    require(p.springs.size() == p.masses.size(), "shear building: one spring per story");
    for (double m : p.masses) require(m > 0.0, "shear building: masses must be positive");
    for (const auto &s : p.springs) {
        require(s.k_e > 0.0, "shear building: stiffness must be positive");
        require(s.rho >= 0.0 && s.rho <= 1.0, "shear building: rho must lie in [0, 1]");
        require(s.n_exp >= 1.0, "shear building: n must be at least 1");
    }
    require(p.eta > 0.0, "shear building: eta must be positive");
}

inline Matrix mass_matrix(const ShearBuildingParams &p) {
    const Eigen::Index n = static_cast<Eigen::Index>(p.n_stories());
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) m(i, i) = p.masses[static_cast<std::size_t>(i)];
    return m;
}

/// Elastic (initial) stiffness of the shear chain.
inline Matrix elastic_stiffness(const ShearBuildingParams &p) {
    const Eigen::Index n = static_cast<Eigen::Index>(p.n_stories());
    Matrix k = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ki = p.springs[static_cast<std::size_t>(i)].k_e;
        k(i, i) += ki;
        if (i > 0) {
            k(i - 1, i - 1) += ki;
            k(i - 1, i) -= ki;
            k(i, i - 1) -= ki;
        }
    }
    return k;
}

/// Elastic circular frequencies (ascending) and mass-normalized mode shapes.
inline std::pair<Vector, Matrix> elastic_modes(const ShearBuildingParams &p) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(elastic_stiffness(p), mass_matrix(p));
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "modal eigen-solve failed");
    return {solver.eigenvalues().cwiseSqrt(), solver.eigenvectors()};
}

/// Rayleigh coefficients giving damping ratio `zeta` in the first two elastic modes
/// (single mode: split evenly between mass and stiffness terms).
inline std::pair<double, double> calibrate_rayleigh(const ShearBuildingParams &p, double zeta) {
    const Vector w = elastic_modes(p).first;
    if (w.size() == 1) return {zeta * w[0], zeta / w[0]};
    const double w1 = w[0], w2 = w[1];
    return {2.0 * zeta * w1 * w2 / (w1 + w2), 2.0 * zeta / (w1 + w2)};
}

/// Shear chain under base acceleration (seismic record) or floor forces (stationary record,
/// one channel per floor, N). State layout [u_1..u_n, v_1..v_n, z_1..z_n].
inline ResponseRecord simulate_mdof_shear(const ShearBuildingParams &p, const ExcitationRecord &rec,
                                          double tol = 1e-5) {
    validate(p);
    const std::size_t n = p.n_stories();
    const Eigen::Index ni = static_cast<Eigen::Index>(n);
    Matrix forcing;
    const bool seismic = rec.kind == ExcitationKind::Seismic;
    if (seismic) {
        forcing = base_acceleration_si(rec);
    } else {
        require(rec.channels() == n, "simulate_mdof_shear: stationary record needs one force channel per floor");
        forcing = rec.samples;
    }
    const Matrix c = p.eta * (p.a0 * mass_matrix(p) + p.a1 * elastic_stiffness(p));
    Vector inv_mass(ni);
    for (Eigen::Index i = 0; i < ni; ++i) inv_mass[i] = 1.0 / p.masses[static_cast<std::size_t>(i)];

    Vector story_force(ni + 1);
    auto rhs = [&](const Vector &x, const Vector &f, Vector &dx) {
        dx.resize(3 * ni);
        const auto u = x.segment(0, ni);
        const auto v = x.segment(ni, ni);
        const auto z = x.segment(2 * ni, ni);
        for (Eigen::Index i = 0; i < ni; ++i) {
            const StorySpring &s = p.springs[static_cast<std::size_t>(i)];
            const double drift = u[i] - (i > 0 ? u[i - 1] : 0.0);
            const double rate = v[i] - (i > 0 ? v[i - 1] : 0.0);
            story_force[i] = s.force(drift, z[i]);
            dx[2 * ni + i] = boucwen_zdot(rate, z[i], s.alpha, s.beta, s.gamma, s.n_exp);
        }
        story_force[ni] = 0.0;
        dx.segment(0, ni) = v;
        const Vector damping = c * v;
        for (Eigen::Index i = 0; i < ni; ++i) {
            const double external = seismic ? 0.0 : f[i];
            dx[ni + i] = (external - damping[i] - story_force[i] + story_force[i + 1]) * inv_mass[i] -
                         (seismic ? f[0] : 0.0);
        }
    };
    const Trajectory traj = rk4_adaptive(rhs, Vector::Zero(3 * ni), forcing, rec.dt, tol);

    ResponseRecord out;
    out.dt = rec.dt;
    out.displacement = traj.states.topRows(ni);
    out.velocity = traj.states.middleRows(ni, ni);
    out.hysteretic = traj.states.bottomRows(ni);
    out.drift = out.displacement;
    for (Eigen::Index i = ni - 1; i > 0; --i) out.drift.row(i) -= out.displacement.row(i - 1);
    out.restoring_force.resize(ni, traj.states.cols());
    for (Eigen::Index i = 0; i < ni; ++i) {
        const StorySpring &s = p.springs[static_cast<std::size_t>(i)];
        out.restoring_force.row(i) = s.k_e * (s.rho * out.drift.row(i) + (1.0 - s.rho) * out.hysteretic.row(i));
    }
    out.accepted_steps = traj.accepted_steps;
    out.rejected_steps = traj.rejected_steps;
    return out;
}

// =============================================================================
// System uncertainty
// =============================================================================

enum class Family { Fixed, Uniform, Lognormal };

struct ParameterSpec {
    std::string name;
    std::string unit;
    Family family = Family::Fixed;
    double a = 0.0; ///< fixed value | lower bound | mean
    double b = 0.0; ///< -           | upper bound | coefficient of variation

    bool random() const { return family != Family::Fixed; }
};

inline std::optional<Family> parse_family(const std::string &s) {
    if (s == "fixed") return Family::Fixed;
    if (s == "uniform") return Family::Uniform;
    if (s == "lognormal") return Family::Lognormal;
    return std::nullopt;
}

/// Parameters of the underlying normal for a lognormal with given mean and CoV.
struct LognormalMoments {
    double mu_ln;
    double sigma_ln;
};

inline LognormalMoments lognormal_from_mean_cov(double mean, double cov) {
    require(mean > 0.0 && cov > 0.0, "lognormal: mean and CoV must be positive");
    const double s2 = std::log1p(cov * cov);
    return {std::log(mean) - 0.5 * s2, std::sqrt(s2)};
}

/// A draw of the uncertain system parameters (theta, in declaration order of the random
/// entries) together with the fixed ones.
struct SystemRealization {
    std::vector<std::string> names;
    std::vector<std::string> units;
    Vector theta;
    std::map<std::string, double> fixed;
    std::vector<ParameterSpec> specs;

    double get(const std::string &name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return theta[static_cast<Eigen::Index>(i)];
        auto it = fixed.find(name);
        require(it != fixed.end(), "system realization has no parameter '" + name + "'");
        return it->second;
    }
};

inline SystemRealization sample_system(const std::vector<ParameterSpec> &specs, std::uint64_t seed) {
    Rng rng(seed);
    SystemRealization out;
    out.specs = specs;
    std::vector<double> theta;
    for (const auto &s : specs) {
        switch (s.family) {
        case Family::Fixed:
            out.fixed[s.name] = s.a;
            break;
        case Family::Uniform:
            require(s.b > s.a, "uniform parameter '" + s.name + "' needs lower < upper");
            theta.push_back(rng.uniform(s.a, s.b));
            break;
        case Family::Lognormal: {
            const LognormalMoments m = lognormal_from_mean_cov(s.a, s.b);
            theta.push_back(std::exp(m.mu_ln + m.sigma_ln * rng.normal()));
            break;
        }
        default:
            throw Error(ErrorKind::InvalidArgument, "unsupported distribution family for '" + s.name + "'");
        }
        if (s.random()) {
            out.names.push_back(s.name);
            out.units.push_back(s.unit);
        }
    }
    out.theta = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    return out;
}

// =============================================================================
// Hysteresis
// =============================================================================

struct HysteresisCurve {
    Series drift;
    Series force;
};

inline HysteresisCurve hysteresis_curve(const ResponseRecord &resp, std::size_t spring_index) {
    if (spring_index >= resp.n_springs()) {
        throw Error(ErrorKind::InvalidArgument, "hysteresis_curve: spring index " + std::to_string(spring_index) +
                                                    " out of range (" + std::to_string(resp.n_springs()) + " springs)");
    }
    const Eigen::Index i = static_cast<Eigen::Index>(spring_index);
    HysteresisCurve c;
    c.drift.resize(resp.steps());
    c.force.resize(resp.steps());
    for (std::size_t j = 0; j < resp.steps(); ++j) {
        c.drift[j] = resp.drift(i, static_cast<Eigen::Index>(j));
        c.force[j] = resp.restoring_force(i, static_cast<Eigen::Index>(j));
    }
    return c;
}

/// Work of the restoring force along the deformation path, sum of F dd (trapezoidal).
/// Over closed cycles this is the enclosed loop area.
inline double hysteretic_work(const Series &drift, const Series &force) {
    require(drift.size() == force.size(), "hysteretic_work: length mismatch");
    double w = 0.0;
    for (std::size_t j = 1; j < drift.size(); ++j) w += 0.5 * (force[j - 1] + force[j]) * (drift[j] - drift[j - 1]);
    return w;
}

/// Restoring force of `spring` driven through a prescribed drift history. The law is
/// rate independent, so z is integrated in the drift variable (RK4, substeps of at most
/// 1% of the yield drift).
inline Series replay_spring(const StorySpring &spring, const Series &drift) {
    Series force(drift.size(), 0.0);
    if (drift.empty()) return force;
    double z = 0.0;
    force[0] = spring.force(drift[0], z);
    const double h_max = 0.01 * spring.yield_drift();
    for (std::size_t j = 1; j < drift.size(); ++j) {
        const double dd = drift[j] - drift[j - 1];
        if (dd != 0.0) {
            const int m = std::max(1, static_cast<int>(std::ceil(std::abs(dd) / h_max)));
            const double h = dd / m;
            const double dir = dd > 0.0 ? 1.0 : -1.0;
            auto dz = [&](double zz) { return boucwen_zdot(dir, zz, spring.alpha, spring.beta, spring.gamma, spring.n_exp) * dir; };
            for (int k = 0; k < m; ++k) {
                const double k1 = dz(z), k2 = dz(z + 0.5 * h * k1), k3 = dz(z + 0.5 * h * k2), k4 = dz(z + h * k3);
                z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        force[j] = spring.force(drift[j], z);
    }
    return force;
}

// =============================================================================
// Energy balance (SDOF, per unit mass)
// =============================================================================

struct EnergyBalance {
    double input = 0.0;       ///< -int a_g v dt at the end of the record
    double kinetic = 0.0;
    double damping = 0.0;
    double restoring = 0.0;   ///< elastic stored + hysteretic work
    double peak_input = 0.0;  ///< max over time of |input energy|
    double max_residual = 0.0; ///< max over time of |input - (kinetic + damping + restoring)|

    /// |input - (kinetic + damping + restoring)| at the end of the record.
    double final_residual() const { return std::abs(input - kinetic - damping - restoring); }
};

inline EnergyBalance energy_balance(const BoucWenParams &p, const ExcitationRecord &gm, const ResponseRecord &r) {
    const Matrix acc = base_acceleration_si(gm);
    EnergyBalance e;
    const double dt = r.dt;
    const double c = 2.0 * p.zeta * p.omega;
    auto v = [&](std::size_t j) { return r.velocity(0, static_cast<Eigen::Index>(j)); };
    auto f = [&](std::size_t j) { return r.restoring_force(0, static_cast<Eigen::Index>(j)); };
    for (std::size_t j = 1; j < r.steps(); ++j) {
        const Eigen::Index a = static_cast<Eigen::Index>(j - 1), b = static_cast<Eigen::Index>(j);
        e.input -= 0.5 * dt * (acc(0, a) * v(j - 1) + acc(0, b) * v(j));
        e.damping += 0.5 * dt * c * (v(j - 1) * v(j - 1) + v(j) * v(j));
        e.restoring += 0.5 * dt * (f(j - 1) * v(j - 1) + f(j) * v(j));
        e.kinetic = 0.5 * v(j) * v(j);
        e.peak_input = std::max(e.peak_input, std::abs(e.input));
        e.max_residual = std::max(e.max_residual, std::abs(e.input - e.kinetic - e.damping - e.restoring));
    }
    return e;
}

} // namespace rhmeta::dynamics
