// rhmeta excitation: stochastic ground motions and stationary load processes.
//
// Ground motions follow the modulated, time-varying filtered white-noise model:
//
//   a(t) = HP{ q(t) * sum_i s_i(t) u_i / sqrt(sum_i s_i(t)^2) }
//
// with a gamma-type modulation q(t) = a1 t^(a2-1) exp(-a3 t), s_i the impulse response of
// an SDOF filter frozen at the arrival time of noise increment u_i, and HP a critically
// damped oscillator high-pass. Accelerations are produced in units of g.
#pragma once

#include "rhmeta/common.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <complex>
#include <functional>
#include <sstream>

namespace rhmeta::excitation {

struct GroundMotionParams {
    double arias_intensity = 0.109; ///< s*g
    double d_5_95 = 7.96;           ///< s
    double t_mid = 7.78;            ///< s, time of 45% Arias intensity
    double omega_mid = 4.66 * 2.0 * kPi;     ///< rad/s
    double omega_prime = -0.09 * 2.0 * kPi;  ///< rad/s^2
    double zeta_f = 0.24;
    double dt = 0.01;        ///< s
    double duration = 30.0;  ///< s
    double hp_corner = 0.2;  ///< Hz

    std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(duration / dt)) + 1; }
    double filter_frequency(double t) const { return omega_mid + omega_prime * (t - t_mid); }
};

inline void validate(const GroundMotionParams &p) {
    require(p.arias_intensity > 0.0, "arias_intensity must be positive");
    require(p.d_5_95 > 0.0, "d_5_95 must be positive");
    require(p.duration >= p.d_5_95, "duration must be at least d_5_95");
    require(p.zeta_f > 0.0 && p.zeta_f < 1.0, "zeta_f must lie in (0, 1)");
    require(p.dt > 0.0, "dt must be positive");
    require(p.t_mid > 0.0 && p.t_mid < p.duration, "t_mid must lie inside the record");
    require(p.hp_corner > 0.0, "hp_corner must be positive");
    // linear in t, so checking both ends covers the interval
    require(p.filter_frequency(0.0) > 0.0 && p.filter_frequency(p.duration) > 0.0,
            "filter frequency must stay positive over [0, duration]");
}

enum class ExcitationKind { Seismic, Stationary };

inline const char *to_string(ExcitationKind k) {
    return k == ExcitationKind::Seismic ? "seismic" : "stationary";
}

/// A sampled forcing record. Seismic records carry one channel of base acceleration in g;
/// stationary records carry one channel per loaded DoF (force, N).
struct ExcitationRecord {
    Matrix samples; ///< channels x steps
    double dt = 0.0;
    std::uint64_t seed = 0;
    ExcitationKind kind = ExcitationKind::Seismic;
    std::string unit = "g";

    std::size_t channels() const { return static_cast<std::size_t>(samples.rows()); }
    std::size_t steps() const { return static_cast<std::size_t>(samples.cols()); }
    Series channel(std::size_t c) const {
        Series out(steps());
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
        return out;
    }
};

inline Matrix as_row(const Series &s) {
    Matrix m(1, static_cast<Eigen::Index>(s.size()));
    for (std::size_t j = 0; j < s.size(); ++j) m(0, static_cast<Eigen::Index>(j)) = s[j];
    return m;
}

// =============================================================================
// White noise
// =============================================================================

/// Discretized Gaussian white noise: i.i.d. N(0, 1/dt) samples.
inline Series gen_white_noise(std::size_t n_steps, double dt, std::uint64_t seed) {
    require(n_steps >= 1, "gen_white_noise: n_steps must be at least 1");
    require(dt > 0.0, "gen_white_noise: dt must be positive");
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(dt);
    Series out(n_steps);
    for (auto &x : out) x = scale * rng.normal();
    return out;
}

// =============================================================================
// Time modulation
// =============================================================================

struct ModulationParams {
    double alpha1 = 0.0; ///< g / s^(alpha2-1)
    double alpha2 = 0.0;
    double alpha3 = 0.0; ///< 1/s
};

namespace detail {

/// Time at which the normalized cumulative Arias fraction of the gamma modulation reaches p.
/// `total` is the regularized incomplete gamma value at the record end.
inline double arias_quantile(double shape, double alpha3, double p, double total) {
    return boost::math::gamma_p_inv(shape, p * total) / (2.0 * alpha3);
}

} // namespace detail

/// Cumulative Arias fraction of the fitted modulation over [0, t], relative to [0, duration].
inline double arias_fraction(double t, const ModulationParams &m, double duration) {
    const double shape = 2.0 * m.alpha2 - 1.0;
    const double total = boost::math::gamma_p(shape, 2.0 * m.alpha3 * duration);
    return boost::math::gamma_p(shape, 2.0 * m.alpha3 * std::max(t, 0.0)) / total;
}

/// Solves (alpha1, alpha2, alpha3) so that, over [0, duration], the 45% Arias time equals
/// t_mid, the 5-95% interval equals d_5_95, and (pi/2) * int q^2 dt equals the Arias
/// intensity. With shape k = 2*alpha2 - 1, q^2 is a scaled gamma density in t, so the
/// quantile ratio (t95 - t5) / t45 depends on k alone once the finite-record truncation
/// factor is fixed; k is found by bisection and the truncation factor by fixed-point
/// iteration.
inline ModulationParams fit_modulation(const GroundMotionParams &p) {
    validate(p);
    constexpr double kTol = 1e-8;
    constexpr int kMaxIter = 200;
    const double target_ratio = p.d_5_95 / p.t_mid;

    double total = 1.0; // P(k, 2 a3 T)
    double shape = 0.0, alpha3 = 0.0;
    bool converged = false;
    double residual_mid = 0.0, residual_span = 0.0;
    for (int outer = 0; outer < kMaxIter && !converged; ++outer) {
        auto ratio = [&](double k) {
            using boost::math::gamma_p_inv;
            const double q45 = gamma_p_inv(k, 0.45 * total);
            return (gamma_p_inv(k, 0.95 * total) - gamma_p_inv(k, 0.05 * total)) / q45;
        };
        double lo = 1e-3, hi = 1e4; // ratio is decreasing in k
        if (!(ratio(lo) > target_ratio && ratio(hi) < target_ratio)) {
            std::ostringstream msg;
            msg << "modulation fit: D5-95/t_mid = " << target_ratio << " outside attainable range";
            throw Error(ErrorKind::CalibrationFailure, msg.str());
        }
        for (int it = 0; it < kMaxIter; ++it) {
            const double mid = std::sqrt(lo * hi);
            (ratio(mid) > target_ratio ? lo : hi) = mid;
            if (hi / lo - 1.0 < 1e-14) break;
        }
        shape = std::sqrt(lo * hi);
        alpha3 = boost::math::gamma_p_inv(shape, 0.45 * total) / (2.0 * p.t_mid);
        const double new_total = boost::math::gamma_p(shape, 2.0 * alpha3 * p.duration);

        const ModulationParams trial{1.0, 0.5 * (shape + 1.0), alpha3};
        residual_mid = arias_fraction(p.t_mid, trial, p.duration) - 0.45;
        const double t5 = detail::arias_quantile(shape, alpha3, 0.05, new_total);
        const double t95 = detail::arias_quantile(shape, alpha3, 0.95, new_total);
        residual_span = (t95 - t5) / p.d_5_95 - 1.0;
        converged = std::abs(new_total - total) < 1e-15 && std::abs(residual_mid) < kTol &&
                    std::abs(residual_span) < kTol;
        total = new_total;
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "modulation fit did not converge: residual(t_mid fraction) = " << residual_mid
            << ", residual(d_5_95, relative) = " << residual_span;
        throw Error(ErrorKind::CalibrationFailure, msg.str());
    }
    // (pi/2) int_0^T a1^2 t^(k-1) e^(-2 a3 t) dt = (pi/2) a1^2 Gamma(k) P(k, 2 a3 T) / (2 a3)^k
    const double log_a1_sq = std::log(2.0 * p.arias_intensity / kPi) + shape * std::log(2.0 * alpha3) -
                             std::lgamma(shape) - std::log(total);
    return ModulationParams{std::exp(0.5 * log_a1_sq), 0.5 * (shape + 1.0), alpha3};
}

inline double modulating_function(double t, const ModulationParams &m) {
    if (t <= 0.0) return m.alpha2 > 1.0 ? 0.0 : (m.alpha2 == 1.0 ? m.alpha1 : HUGE_VAL);
    return m.alpha1 * std::exp((m.alpha2 - 1.0) * std::log(t) - m.alpha3 * t);
}

inline double modulating_function(double t, const GroundMotionParams &p) {
    require(t >= 0.0 && t <= p.duration + 1e-12, "modulating_function: t outside [0, duration]");
    return modulating_function(t, fit_modulation(p));
}

// =============================================================================
// Time-varying filter
// =============================================================================

struct FilterOutput {
    Series raw;    ///< sum_i s_i(t_j) u_i
    Series stddev; ///< sqrt(sum_i s_i(t_j)^2)
};

/// Impulse superposition through an SDOF filter whose frequency is frozen at each
/// impulse's arrival time. Noise samples are treated as discretized white noise
/// (variance 1/dt), so u_i = noise_i * sqrt(dt) are standard normal. O(N^2).
inline FilterOutput time_varying_filter(const Series &noise, const GroundMotionParams &p) {
    require(p.dt > 0.0, "filter: dt must be positive");
    require(p.zeta_f > 0.0 && p.zeta_f < 1.0, "filter: zeta_f must lie in (0, 1)");
    const std::size_t n = noise.size();
    const double root = std::sqrt(1.0 - p.zeta_f * p.zeta_f);
    const double sqdt = std::sqrt(p.dt);
    FilterOutput out{Series(n, 0.0), Series(n, 0.0)};
    Series variance(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = static_cast<double>(i) * p.dt;
        const double w = p.filter_frequency(ti);
        if (!(w > 0.0)) {
            std::ostringstream msg;
            msg << "filter: nonpositive instantaneous frequency " << w << " rad/s at t = " << ti;
            throw Error(ErrorKind::InvalidArgument, msg.str());
        }
        const double u = noise[i] * sqdt;
        const std::complex<double> rot = std::exp(std::complex<double>(-p.zeta_f * w, w * root) * p.dt);
        std::complex<double> phasor(w / root, 0.0);
        for (std::size_t j = i; j < n; ++j) {
            const double s = phasor.imag();
            out.raw[j] += s * u;
            variance[j] += s * s;
            phasor *= rot;
        }
    }
    for (std::size_t j = 0; j < n; ++j) out.stddev[j] = std::sqrt(variance[j]);
    return out;
}

/// Filtered noise normalized to unit instantaneous standard deviation.
inline Series filter_white_noise(const Series &noise, const GroundMotionParams &p) {
    require(noise.size() == p.n_steps(), "filter_white_noise: noise length does not match the time grid");
    FilterOutput f = time_varying_filter(noise, p);
    Series out(noise.size(), 0.0);
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = f.stddev[j] > 0.0 ? f.raw[j] / f.stddev[j] : 0.0;
    return out;
}

// =============================================================================
// High-pass
// =============================================================================

/// Critically damped oscillator high-pass:  u'' + 2 wc u' + wc^2 u = x(t),  output u''.
/// Integrated with fixed-step RK4 on the input grid, input linearly interpolated.
inline Series high_pass(const Series &x, double hp_corner, double dt) {
    require(hp_corner > 0.0, "high_pass: corner frequency must be positive");
    require(dt > 0.0, "high_pass: dt must be positive");
    const double wc = 2.0 * kPi * hp_corner;
    Series out(x.size(), 0.0);
    double u = 0.0, v = 0.0;
    auto acc = [&](double uu, double vv, double f) { return f - 2.0 * wc * vv - wc * wc * uu; };
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[j] = acc(u, v, x[j]);
        if (j + 1 == x.size()) break;
        const double f0 = x[j], f1 = x[j + 1], fm = 0.5 * (f0 + f1);
        const double k1u = v, k1v = acc(u, v, f0);
        const double k2u = v + 0.5 * dt * k1v, k2v = acc(u + 0.5 * dt * k1u, v + 0.5 * dt * k1v, fm);
        const double k3u = v + 0.5 * dt * k2v, k3v = acc(u + 0.5 * dt * k2u, v + 0.5 * dt * k2v, fm);
        const double k4u = v + dt * k3v, k4v = acc(u + dt * k3u, v + dt * k3v, f1);
        u += dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    return out;
}

// =============================================================================
// Record measures
// =============================================================================

/// Arias intensity in s*g of an acceleration series given in g: (pi/2) int a^2 dt.
inline double arias_intensity(const Series &acc_g, double dt) {
    double sum = 0.0;
    for (std::size_t j = 1; j < acc_g.size(); ++j)
        sum += 0.5 * (acc_g[j - 1] * acc_g[j - 1] + acc_g[j] * acc_g[j]) * dt;
    return 0.5 * kPi * sum;
}

/// Trapezoidal double integration from rest.
inline Series double_integrate(const Series &acc, double dt) {
    Series vel(acc.size(), 0.0), disp(acc.size(), 0.0);
    for (std::size_t j = 1; j < acc.size(); ++j) {
        vel[j] = vel[j - 1] + 0.5 * dt * (acc[j - 1] + acc[j]);
        disp[j] = disp[j - 1] + 0.5 * dt * (vel[j - 1] + vel[j]);
    }
    return disp;
}

// =============================================================================
// Generators
// =============================================================================

/// white noise -> time-varying filter -> unit-variance normalization -> q(t) -> high-pass.
inline ExcitationRecord gen_ground_motion(const GroundMotionParams &p, std::uint64_t seed) {
    validate(p);
    const ModulationParams m = fit_modulation(p);
    const std::size_t n = p.n_steps();
    Series x = filter_white_noise(gen_white_noise(n, p.dt, seed), p);
    for (std::size_t j = 0; j < n; ++j) x[j] *= modulating_function(static_cast<double>(j) * p.dt, m);
    Series acc = high_pass(x, p.hp_corner, p.dt);
    require(all_finite(acc), "gen_ground_motion: non-finite sample");
    return ExcitationRecord{as_row(acc), p.dt, seed, ExcitationKind::Seismic, "g"};
}

using PsdFunction = std::function<double(double)>;

/// Piecewise-linear one-sided PSD from a table (frequency ascending); zero outside.
inline PsdFunction tabulated_psd(std::vector<double> freq, std::vector<double> value) {
    require(freq.size() == value.size() && freq.size() >= 2, "tabulated_psd: need matching tables of size >= 2");
    return [freq = std::move(freq), value = std::move(value)](double f) {
        if (f < freq.front() || f > freq.back()) return 0.0;
        auto it = std::upper_bound(freq.begin(), freq.end(), f);
        if (it == freq.end()) return value.back();
        const std::size_t k = static_cast<std::size_t>(it - freq.begin());
        const double w = (f - freq[k - 1]) / (freq[k] - freq[k - 1]);
        return (1.0 - w) * value[k - 1] + w * value[k];
    };
}

/// Spectral-representation synthesis of a stationary Gaussian process:
///   x(t) = sum_k sqrt(2 S(f_k) df) cos(2 pi f_k t + phi_k),  f_k = (k + 1/2) df,
/// df = 1/duration, frequencies up to Nyquist, phases i.i.d. uniform.
inline ExcitationRecord gen_stationary(const PsdFunction &psd, double duration, double dt, std::uint64_t seed,
                                       std::string unit = "N") {
    require(duration > 0.0 && dt > 0.0, "gen_stationary: duration and dt must be positive");
    const std::size_t n = static_cast<std::size_t>(std::llround(duration / dt)) + 1;
    const double df = 1.0 / duration;
    const double f_nyq = 0.5 / dt;
    const std::size_t n_freq = static_cast<std::size_t>(std::llround(f_nyq / df));
    Rng rng(seed);
    Series x(n, 0.0);
    for (std::size_t k = 0; k < n_freq; ++k) {
        const double f = (static_cast<double>(k) + 0.5) * df;
        const double s = psd(f);
        if (!(s >= 0.0)) {
            std::ostringstream msg;
            msg << "gen_stationary: psd(" << f << ") = " << s << " is negative";
            throw Error(ErrorKind::InvalidArgument, msg.str());
        }
        const double phase = 2.0 * kPi * rng.uniform();
        if (s == 0.0) continue;
        const double amp = std::sqrt(2.0 * s * df);
        std::complex<double> phasor = std::polar(amp, phase);
        const std::complex<double> rot = std::polar(1.0, 2.0 * kPi * f * dt);
        for (std::size_t j = 0; j < n; ++j) {
            x[j] += phasor.real();
            phasor *= rot;
        }
    }
    return ExcitationRecord{as_row(x), dt, seed, ExcitationKind::Stationary, std::move(unit)};
}

/// Independent stationary channels sharing one psd (e.g. one force per floor); channel c
/// uses stream c of `seed`.
inline ExcitationRecord gen_stationary_field(const PsdFunction &psd, std::size_t channels, double duration, double dt,
                                             std::uint64_t seed, std::string unit = "N") {
    require(channels >= 1, "gen_stationary_field: at least one channel");
    ExcitationRecord out = gen_stationary(psd, duration, dt, derive_seed(seed, Stream::Excitation, 0), unit);
    out.samples.conservativeResize(static_cast<Eigen::Index>(channels), Eigen::NoChange);
    for (std::size_t c = 1; c < channels; ++c)
        out.samples.row(static_cast<Eigen::Index>(c)) =
            gen_stationary(psd, duration, dt, derive_seed(seed, Stream::Excitation, c), unit).samples;
    out.seed = seed;
    return out;
}

} // namespace rhmeta::excitation
