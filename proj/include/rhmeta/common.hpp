// rhmeta: shared types, error hierarchy and deterministic random streams.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rhmeta {

using Series = std::vector<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kGravity = 9.80665;  // m/s^2 per g
inline constexpr double kPi = 3.14159265358979323846;

// =============================================================================
// Errors
// =============================================================================

enum class ErrorKind {
    InvalidArgument,
    CalibrationFailure,
    StiffnessFailure,
    NumericalFailure,
    DivergenceFailure,
    Io,
};

inline const char *to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::CalibrationFailure: return "calibration-failure";
    case ErrorKind::StiffnessFailure: return "stiffness-failure";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::DivergenceFailure: return "divergence-failure";
    case ErrorKind::Io: return "io-error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

inline void require(bool condition, const std::string &message) {
    if (!condition) throw Error(ErrorKind::InvalidArgument, message);
}

// =============================================================================
// Random streams
// =============================================================================

/// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stream tags keep the draws of different consumers of one master seed apart.
enum class Stream : std::uint64_t {
    Excitation = 1,
    System = 2,
    Split = 3,
    Snapshots = 4,
    Init = 5,
    Shuffle = 6,
    TrainMask = 7,
    ValMask = 8,
    Predict = 9,
};

/// Seed for stream `tag` of record `index` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, Stream tag, std::uint64_t index = 0) {
    std::uint64_t s = splitmix64(master);
    s = splitmix64(s ^ (static_cast<std::uint64_t>(tag) * 0xD1B54A32D192ED03ULL));
    return splitmix64(s ^ (index * 0x8CB92BA72F3D8DD7ULL));
}

/// Seedable generator. Wraps mt19937_64; the uniform mapping is done by hand so the
/// sequence of doubles does not depend on the standard library's distribution code.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
    Rng(std::uint64_t master, Stream tag, std::uint64_t index = 0)
        : engine_(derive_seed(master, tag, index)) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    bool bernoulli(double p_true) { return uniform() < p_true; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling, unbiased
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return r % n;
    }

    template <typename T> void shuffle(std::vector<T> &v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// =============================================================================
// Parallelism
// =============================================================================

/// Worker count from RUN_THREADS (0 or unset = hardware concurrency).
inline unsigned worker_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char *env = std::getenv("RUN_THREADS")) {
        const long requested = std::strtol(env, nullptr, 10);
        if (requested > 0) return static_cast<unsigned>(std::min<long>(requested, 1024));
    }
    return hw;
}

/// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so results
/// do not depend on the thread count. The first exception thrown is rethrown.
template <typename Fn> void parallel_for(std::size_t n, Fn &&fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto &t : pool) t.join();
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

inline bool all_finite(const Series &s) {
    for (double x : s)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace rhmeta
