#include "rhmeta/excitation.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace rhmeta;
using namespace rhmeta::excitation;

namespace {

GroundMotionParams case1() { return GroundMotionParams{}; }

// independent trapezoid quadrature of q^2 on a fine grid
struct AriasOracle {
    std::vector<double> t, cum;
    double total = 0.0;

    AriasOracle(const ModulationParams &m, double duration, std::size_t n = 300000) {
        t.resize(n + 1);
        cum.resize(n + 1, 0.0);
        const double h = duration / static_cast<double>(n);
        auto q2 = [&](double tt) {
            const double q = tt > 0.0 ? m.alpha1 * std::pow(tt, m.alpha2 - 1.0) * std::exp(-m.alpha3 * tt) : 0.0;
            return q * q;
        };
        for (std::size_t i = 0; i <= n; ++i) {
            t[i] = h * static_cast<double>(i);
            if (i) cum[i] = cum[i - 1] + 0.5 * h * (q2(t[i - 1]) + q2(t[i]));
        }
        total = cum.back();
    }
    double time_at(double frac) const {
        const double target = frac * total;
        auto it = std::lower_bound(cum.begin(), cum.end(), target);
        const std::size_t k = static_cast<std::size_t>(it - cum.begin());
        if (k == 0) return 0.0;
        const double w = (target - cum[k - 1]) / (cum[k] - cum[k - 1]);
        return t[k - 1] + w * (t[k] - t[k - 1]);
    }
};

double mean(const Series &x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

double variance(const Series &x) {
    const double m = mean(x);
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

} // namespace

// ---- white noise ----

TEST(WhiteNoise, DeterministicBySeed) {
    const Series a = gen_white_noise(4, 1.0, 7), b = gen_white_noise(4, 1.0, 7);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, gen_white_noise(4, 1.0, 8));
}

TEST(WhiteNoise, VarianceIsOneOverDt) {
    const std::size_t n = 100000;
    const Series x = gen_white_noise(n, 0.01, 1);
    EXPECT_LT(std::abs(mean(x)), 4.0 * 10.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(variance(x), 100.0, 5.0);
}

TEST(WhiteNoise, RejectsEmptyAndBadDt) {
    EXPECT_THROW(gen_white_noise(0, 0.01, 1), Error);
    EXPECT_THROW(gen_white_noise(10, 0.0, 1), Error);
}

// ---- modulation ----

TEST(Modulation, ZeroAtOrigin) {
    const ModulationParams m = fit_modulation(case1());
    EXPECT_GT(m.alpha2, 1.0);
    EXPECT_EQ(modulating_function(0.0, m), 0.0);
    EXPECT_EQ(modulating_function(0.0, case1()), 0.0);
}

TEST(Modulation, QuadratureReproducesTargets) {
    for (const GroundMotionParams &p : {case1(), [] {
             GroundMotionParams q;
             q.arias_intensity = 0.045;
             q.d_5_95 = 12.62;
             q.t_mid = 4.73;
             q.omega_mid = 20.57;
             q.omega_prime = -0.08 * 2 * kPi;
             q.zeta_f = 0.4801;
             return q;
         }()}) {
        const ModulationParams m = fit_modulation(p);
        const AriasOracle o(m, p.duration);
        EXPECT_NEAR(o.time_at(0.45), p.t_mid, p.dt);
        EXPECT_NEAR((o.time_at(0.95) - o.time_at(0.05)) / p.d_5_95, 1.0, 0.01);
        EXPECT_NEAR(0.5 * kPi * o.total / p.arias_intensity, 1.0, 0.01);
    }
}

TEST(Modulation, RejectsOutOfRecordTime) { EXPECT_THROW(modulating_function(31.0, case1()), Error); }

TEST(Modulation, UnattainableShapeIsCalibrationFailure) {
    GroundMotionParams p = case1();
    p.d_5_95 = 29.9;
    p.t_mid = 0.2;
    try {
        fit_modulation(p);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::CalibrationFailure);
    }
}

// ---- filter ----

TEST(Filter, ZeroNoiseZeroOutput) {
    const GroundMotionParams p = case1();
    const Series y = filter_white_noise(Series(p.n_steps(), 0.0), p);
    for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Filter, ImpulseGivesDampedSinusoid) {
    GroundMotionParams p = case1();
    p.omega_prime = 0.0;
    const std::size_t n = p.n_steps(), i0 = 150;
    Series noise(n, 0.0);
    noise[i0] = 1.0 / std::sqrt(p.dt); // unit standard-normal increment
    const FilterOutput f = time_varying_filter(noise, p);
    const double w = p.omega_mid, wd = w * std::sqrt(1.0 - p.zeta_f * p.zeta_f);
    for (std::size_t j = 0; j < n; ++j) {
        const double tau = (static_cast<double>(j) - static_cast<double>(i0)) * p.dt;
        const double expect = j < i0 ? 0.0 : w / std::sqrt(1.0 - p.zeta_f * p.zeta_f) * std::exp(-p.zeta_f * w * tau) * std::sin(wd * tau);
        ASSERT_NEAR(f.raw[j], expect, 1e-9 * w) << "j = " << j;
    }
}

TEST(Filter, UnitInstantaneousStdOverSeeds) {
    GroundMotionParams p = case1();
    p.duration = 4.0;
    p.t_mid = 2.0;
    p.d_5_95 = 3.0;
    const std::size_t n = p.n_steps(), probe = 300, seeds = 1200;
    double sq = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
        const Series y = filter_white_noise(gen_white_noise(n, p.dt, 1000 + s), p);
        sq += y[probe] * y[probe];
    }
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(seeds)), 1.0, 0.05);
}

TEST(Filter, RejectsNonpositiveFrequency) {
    GroundMotionParams p = case1();
    p.omega_prime = -5.0;
    EXPECT_THROW(time_varying_filter(Series(p.n_steps(), 1.0), p), Error);
    EXPECT_THROW(validate(p), Error);
}

TEST(Filter, RejectsLengthMismatch) { EXPECT_THROW(filter_white_noise(Series(10, 0.0), case1()), Error); }

// ---- high-pass ----

TEST(HighPass, ZeroInZeroOut) {
    for (double v : high_pass(Series(500, 0.0), 0.2, 0.01)) EXPECT_EQ(v, 0.0);
}

TEST(HighPass, StepResponseDecays) {
    const double fc = 0.2, dt = 0.01, settle = 10.0 / (2 * kPi * fc);
    const Series y = high_pass(Series(3001, 1.0), fc, dt);
    EXPECT_NEAR(y[0], 1.0, 1e-12);
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (static_cast<double>(j) * dt >= settle) {
            ASSERT_LT(std::abs(y[j]), 0.01) << "t = " << j * dt;
        }
    }
    // critically damped step response: u'' = (1 - wc t) e^{-wc t}
    const double wc = 2 * kPi * fc;
    for (std::size_t j = 0; j < y.size(); j += 97) {
        const double t = static_cast<double>(j) * dt;
        EXPECT_NEAR(y[j], (1 - wc * t) * std::exp(-wc * t), 1e-6);
    }
}

TEST(HighPass, RejectsBadCorner) { EXPECT_THROW(high_pass(Series(3, 0.0), 0.0, 0.01), Error); }

// ---- ground motion ----

TEST(GroundMotion, ValidRecordAndDeterminism) {
    const GroundMotionParams p = case1();
    const ExcitationRecord a = gen_ground_motion(p, 5), b = gen_ground_motion(p, 5), c = gen_ground_motion(p, 6);
    EXPECT_EQ(a.steps(), 3001u);
    EXPECT_EQ(a.channels(), 1u);
    EXPECT_EQ(a.unit, "g");
    EXPECT_EQ(a.kind, ExcitationKind::Seismic);
    EXPECT_EQ(a.seed, 5u);
    EXPECT_TRUE(a.samples.allFinite());
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NE(a.samples, c.samples);
}

TEST(GroundMotion, ResidualDisplacementAndAriasLevel) {
    const GroundMotionParams p = case1();
    const int n = 40;
    double arias = 0.0;
    for (int s = 0; s < n; ++s) {
        const ExcitationRecord r = gen_ground_motion(p, static_cast<std::uint64_t>(s));
        const Series acc = r.channel(0);
        arias += arias_intensity(acc, p.dt);
        const Series d = double_integrate(acc, p.dt);
        double peak = 0;
        for (double v : d) peak = std::max(peak, std::abs(v));
        EXPECT_LT(std::abs(d.back()), 0.01 * peak) << "seed " << s;
    }
    EXPECT_NEAR(arias / n / p.arias_intensity, 1.0, 0.1);
}

TEST(GroundMotion, ZeroNoiseChainIsZero) {
    const GroundMotionParams p = case1();
    const ModulationParams m = fit_modulation(p);
    Series x = filter_white_noise(Series(p.n_steps(), 0.0), p);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] *= modulating_function(static_cast<double>(j) * p.dt, m);
    for (double v : high_pass(x, p.hp_corner, p.dt)) EXPECT_EQ(v, 0.0);
}

TEST(GroundMotion, AriasIntensityOfKnownSeries) {
    // constant 1 g for 2 s -> pi/2 * 2
    EXPECT_NEAR(arias_intensity(Series(201, 1.0), 0.01), kPi, 1e-12);
}

TEST(GroundMotion, InvalidParamsRejected) {
    GroundMotionParams p = case1();
    p.zeta_f = 1.0;
    EXPECT_THROW(gen_ground_motion(p, 1), Error);
    p = case1();
    p.duration = 5.0;
    EXPECT_THROW(gen_ground_motion(p, 1), Error);
}

// ---- stationary ----

TEST(Stationary, ZeroPsdZeroSeries) {
    const ExcitationRecord r = gen_stationary([](double) { return 0.0; }, 10.0, 0.01, 3);
    EXPECT_EQ(r.samples.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.steps(), 1001u);
    EXPECT_EQ(r.kind, ExcitationKind::Stationary);
}

TEST(Stationary, WhitePsdVarianceByParseval) {
    const double s0 = 2.0, dt = 0.01, f_nyq = 0.5 / dt;
    const ExcitationRecord r = gen_stationary([&](double) { return s0; }, 400.0, dt, 9);
    const Series x = r.channel(0);
    EXPECT_NEAR(variance(x) / (s0 * f_nyq), 1.0, 0.05);
}

TEST(Stationary, AveragedPeriodogramMatchesPsd) {
    const double dt = 0.05, duration = 51.15; // 1024 samples
    auto psd = [](double f) { return 1.0 / (1.0 + f * f); };
    const std::size_t n = 1024, seeds = 100;
    const double f_nyq = 0.5 / dt, df = 1.0 / (static_cast<double>(n) * dt);
    std::vector<double> pgram(n / 2, 0.0);
    for (std::size_t s = 0; s < seeds; ++s) {
        const Series x = gen_stationary(psd, duration, dt, 50 + s).channel(0);
        ASSERT_EQ(x.size(), n);
        for (std::size_t k = 1; k < n / 2; ++k) {
            std::complex<double> acc = 0;
            for (std::size_t j = 0; j < n; ++j)
                acc += x[j] * std::polar(1.0, -2 * kPi * static_cast<double>(k * j) / static_cast<double>(n));
            pgram[k] += 2.0 * dt / static_cast<double>(n) * std::norm(acc) / static_cast<double>(seeds);
        }
    }
    // compare band averages (8 bands over (0, f_nyq))
    const std::size_t bands = 8, per = (n / 2) / bands;
    for (std::size_t b = 0; b < bands; ++b) {
        double est = 0, target = 0;
        for (std::size_t k = std::max<std::size_t>(1, b * per); k < (b + 1) * per; ++k) {
            est += pgram[k];
            target += psd(static_cast<double>(k) * df);
        }
        EXPECT_NEAR(est / target, 1.0, 0.15) << "band " << b << " up to " << (b + 1) * per * df << " of " << f_nyq;
    }
}

TEST(Stationary, NegativePsdRejected) {
    try {
        gen_stationary([](double f) { return f > 3.0 ? -1.0 : 1.0; }, 10.0, 0.01, 1);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    }
}

TEST(Stationary, DeterministicAndFieldChannelsIndependent) {
    auto psd = tabulated_psd({0.0, 5.0, 50.0}, {1.0, 1.0, 0.0});
    const ExcitationRecord a = gen_stationary_field(psd, 3, 20.0, 0.01, 4);
    const ExcitationRecord b = gen_stationary_field(psd, 3, 20.0, 0.01, 4);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.channels(), 3u);
    const Series x0 = a.channel(0), x1 = a.channel(1);
    double c = 0, s0 = 0, s1 = 0;
    for (std::size_t j = 0; j < x0.size(); ++j) {
        c += x0[j] * x1[j];
        s0 += x0[j] * x0[j];
        s1 += x1[j] * x1[j];
    }
    EXPECT_LT(std::abs(c / std::sqrt(s0 * s1)), 0.2);
}

TEST(Stationary, TabulatedPsdInterpolates) {
    auto psd = tabulated_psd({1.0, 2.0, 4.0}, {1.0, 3.0, 1.0});
    EXPECT_EQ(psd(0.5), 0.0);
    EXPECT_DOUBLE_EQ(psd(1.5), 2.0);
    EXPECT_DOUBLE_EQ(psd(3.0), 2.0);
    EXPECT_EQ(psd(5.0), 0.0);
}
