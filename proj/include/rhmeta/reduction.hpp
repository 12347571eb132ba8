// rhmeta reduction: POD projection, min-max normalization, Daubechies wavelet
// downsampling and input augmentation, each with its exact inverse.
#pragma once

#include "rhmeta/common.hpp"

#include <Eigen/SVD>

#include <array>
#include <span>
#include <sstream>

namespace rhmeta::reduction {

// =============================================================================
// Snapshots and POD
// =============================================================================

enum class SnapshotScheme { Uniform, Random };

/// Time indices picked from a record of `steps` samples. The uniform rule takes the
/// midpoints of `count` equal bins, so a single snapshot lands at the mid-time sample.
inline std::vector<std::size_t> snapshot_indices(std::size_t steps, std::size_t count, SnapshotScheme scheme,
                                                 Rng *rng) {
    require(count >= 1 && count <= steps, "snapshot count must lie in [1, record length]");
    std::vector<std::size_t> idx(count);
    if (scheme == SnapshotScheme::Uniform) {
        for (std::size_t k = 0; k < count; ++k)
            idx[k] = static_cast<std::size_t>((2 * k + 1) * steps / (2 * count));
        return idx;
    }
    // partial Fisher-Yates over [0, steps)
    std::vector<std::size_t> pool(steps);
    for (std::size_t j = 0; j < steps; ++j) pool[j] = j;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(rng->below(steps - k));
        std::swap(pool[k], pool[pick]);
        idx[k] = pool[k];
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Stacks displacement snapshots (columns) from each record (n_dof x T).
inline Matrix collect_snapshots(std::span<const Matrix> records, std::size_t n_per_record, SnapshotScheme scheme,
                                std::uint64_t seed) {
    require(!records.empty(), "collect_snapshots: no records");
    require(n_per_record >= 1, "collect_snapshots: n_per_record must be at least 1");
    const Eigen::Index n_dof = records.front().rows();
    Matrix out(n_dof, static_cast<Eigen::Index>(records.size() * n_per_record));
    Eigen::Index col = 0;
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].rows() != n_dof) {
            std::ostringstream msg;
            msg << "collect_snapshots: record " << r << " has " << records[r].rows() << " DoFs, expected " << n_dof;
            throw Error(ErrorKind::InvalidArgument, msg.str());
        }
        Rng rng(seed, Stream::Snapshots, r);
        for (std::size_t j : snapshot_indices(static_cast<std::size_t>(records[r].cols()), n_per_record, scheme, &rng))
            out.col(col++) = records[r].col(static_cast<Eigen::Index>(j));
    }
    return out;
}

struct PodBasis {
    Matrix modes;            ///< n_dof x n_r, orthonormal columns
    Vector singular_values;  ///< full spectrum, descending
    double energy_threshold = 1.0;
    std::size_t n_snapshots = 0;

    std::size_t n_dof() const { return static_cast<std::size_t>(modes.rows()); }
    std::size_t n_modes() const { return static_cast<std::size_t>(modes.cols()); }
    double retained_energy() const {
        const double total = singular_values.squaredNorm();
        return total > 0.0 ? singular_values.head(modes.cols()).squaredNorm() / total : 1.0;
    }
};

/// Identity basis (no spatial reduction).
inline PodBasis identity_basis(std::size_t n_dof) {
    PodBasis b;
    b.modes = Matrix::Identity(static_cast<Eigen::Index>(n_dof), static_cast<Eigen::Index>(n_dof));
    b.singular_values = Vector::Ones(static_cast<Eigen::Index>(n_dof));
    return b;
}

/// Left singular vectors of the snapshot matrix, truncated at the smallest n_r whose
/// cumulative squared singular values reach `energy_threshold` of the total. Each mode is
/// signed so that its largest-magnitude entry is positive.
inline PodBasis compute_pod_basis(const Matrix &snapshots, double energy_threshold) {
    require(snapshots.size() > 0, "compute_pod_basis: empty snapshot matrix");
    require(snapshots.allFinite(), "compute_pod_basis: non-finite snapshots");
    require(energy_threshold > 0.0 && energy_threshold <= 1.0, "compute_pod_basis: threshold must lie in (0, 1]");
    Eigen::BDCSVD<Matrix> svd(snapshots, Eigen::ComputeThinU);
    if (svd.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "SVD did not converge");
    const Vector &s = svd.singularValues();
    const double total = s.squaredNorm();
    Eigen::Index n_r = s.size();
    if (total > 0.0) {
        double cumulative = 0.0;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            cumulative += s[i] * s[i];
            if (cumulative >= energy_threshold * total) {
                n_r = i + 1;
                break;
            }
        }
    } else {
        n_r = 1;
    }
    PodBasis b;
    b.modes = svd.matrixU().leftCols(n_r);
    for (Eigen::Index c = 0; c < n_r; ++c) {
        Eigen::Index imax;
        b.modes.col(c).cwiseAbs().maxCoeff(&imax);
        if (b.modes(imax, c) < 0.0) b.modes.col(c) *= -1.0;
    }
    b.singular_values = s;
    b.energy_threshold = energy_threshold;
    b.n_snapshots = static_cast<std::size_t>(snapshots.cols());
    return b;
}

/// q = phi^T u
inline Matrix project(const Matrix &series, const PodBasis &basis) {
    if (series.rows() != basis.modes.rows()) {
        std::ostringstream msg;
        msg << "project: series has " << series.rows() << " rows, basis expects " << basis.modes.rows();
        throw Error(ErrorKind::InvalidArgument, msg.str());
    }
    return basis.modes.transpose() * series;
}

/// u = phi q
inline Matrix reconstruct(const Matrix &reduced, const PodBasis &basis) {
    if (reduced.rows() != basis.modes.cols()) {
        std::ostringstream msg;
        msg << "reconstruct: reduced series has " << reduced.rows() << " rows, basis has " << basis.modes.cols()
            << " modes";
        throw Error(ErrorKind::InvalidArgument, msg.str());
    }
    return basis.modes * reduced;
}

// =============================================================================
// Min-max normalization
// =============================================================================

struct NormStats {
    Vector min;
    Vector max;

    std::size_t channels() const { return static_cast<std::size_t>(min.size()); }
};

/// Per-channel (row) extrema over all calibration matrices.
inline NormStats minmax_fit(std::span<const Matrix> calibration, const std::string &label = "channel") {
    require(!calibration.empty(), "minmax_fit: no calibration data");
    const Eigen::Index rows = calibration.front().rows();
    NormStats st{Vector::Constant(rows, HUGE_VAL), Vector::Constant(rows, -HUGE_VAL)};
    for (const Matrix &m : calibration) {
        require(m.rows() == rows, "minmax_fit: inconsistent channel counts");
        if (m.cols() == 0) continue;
        st.min = st.min.cwiseMin(m.rowwise().minCoeff());
        st.max = st.max.cwiseMax(m.rowwise().maxCoeff());
    }
    for (Eigen::Index c = 0; c < rows; ++c) {
        if (!(st.max[c] > st.min[c])) {
            std::ostringstream msg;
            msg << "minmax_fit: degenerate " << label << " " << c << " (min = max = " << st.min[c] << ")";
            throw Error(ErrorKind::InvalidArgument, msg.str());
        }
    }
    return st;
}

/// x -> 2 (x - min) / (max - min) - 1, rowwise. Values outside the calibration range
/// map outside [-1, 1]; they are not clipped.
inline Matrix minmax_apply(const Matrix &x, const NormStats &st) {
    require(static_cast<std::size_t>(x.rows()) == st.channels(), "minmax_apply: channel count mismatch");
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        const double scale = 2.0 / (st.max[c] - st.min[c]);
        out.row(c) = ((x.row(c).array() - st.min[c]) * scale - 1.0).matrix();
    }
    return out;
}

inline Matrix minmax_invert(const Matrix &y, const NormStats &st) {
    require(static_cast<std::size_t>(y.rows()) == st.channels(), "minmax_invert: channel count mismatch");
    Matrix out(y.rows(), y.cols());
    for (Eigen::Index c = 0; c < y.rows(); ++c) {
        const double half_range = 0.5 * (st.max[c] - st.min[c]);
        out.row(c) = ((y.row(c).array() + 1.0) * half_range + st.min[c]).matrix();
    }
    return out;
}

/// Number of normalized entries outside [-1, 1].
inline std::size_t count_out_of_range(const Matrix &normalized) {
    return static_cast<std::size_t>((normalized.array().abs() > 1.0).count());
}

// =============================================================================
// Daubechies wavelets (periodic boundary)
// =============================================================================

namespace detail {

// Scaling (lowpass) filters db1..db10, normalized to sum sqrt(2).
inline const std::array<std::vector<double>, 10> &daubechies_table() {
    static const std::array<std::vector<double>, 10> table = {{
    {0.707106781186547524401, 0.707106781186547524401},
    {0.482962913144534143375, 0.836516303737807905575, 0.224143868042013381026, -0.129409522551260381174},
    {0.332670552950082615999, 0.806891509311092576494, 0.459877502118491570095, -0.135011020010254588696, -0.0854412738820266616928, 0.0352262918857095366027},
    {0.230377813308896500863, 0.71484657055291564709, 0.630880767929858907882, -0.0279837694168598542114, -0.18703481171909308408, 0.0308413818355607636272, 0.0328830116668851997354, -0.0105974017850690321049},
    {0.160102397974192914481, 0.60382926979718967054, 0.724308528437772927728, 0.138428145901320731505, -0.242294887066382031863, -0.0322448695846383746485, 0.0775714938400457135231, -0.00624149021279827427419, -0.0125807519990819994685, 0.003335725285473771278},
    {0.111540743350109463621, 0.494623890398453085677, 0.751133908021095350679, 0.315250351709197629086, -0.226264693965439820076, -0.129766867567261935562, 0.0975016055873230491023, 0.0275228655303057286255, -0.0315820393174860295651, 0.000553842201161496139252, 0.00477725751094551063964, -0.00107730108530847956485},
    {0.07785205408500917902, 0.396539319481917306539, 0.729132090846235119917, 0.469782287405193122472, -0.143906003928564975405, -0.224036184993874982638, 0.0713092192668302647509, 0.0806126091510830719129, -0.0380299369350144135796, -0.0165745416306668806541, 0.012550998556099840613, 0.000429577972921366521132, -0.00180164070404749091527, 0.000353713799974520248446},
    {0.054415842243104009955, 0.312871590914299970659, 0.675630736297289806808, 0.585354683654206712771, -0.0158291052563493056674, -0.284015542961546926516, 0.000472484573913282770361, 0.128747426620478458857, -0.0173693010018075461696, -0.0440882539307947515068, 0.0139810279173982816487, 0.00874609404740577671638, -0.00487035299345157431042, -0.000391740373376947046298, 0.00067544940645056936637, -0.000117476784124769533731},
    {0.0380779473638783465887, 0.243834674612590353732, 0.604823123690111111903, 0.657288078051300538078, 0.133197385825007576191, -0.293273783279174908806, -0.0968407832229764605135, 0.148540749338106380135, 0.0307256814793333792123, -0.0676328290613299736756, 0.000250947114831451957587, 0.0223616621236790972054, -0.00472320475775139727793, -0.0042815036824634298345, 0.00184764688305622647662, 0.000230385763523195967205, -0.000251963188942710136975, 0.0000393473203162715994807},
    {0.0266700579005555535866, 0.188176800077691489021, 0.527201188931725586482, 0.688459039453603565742, 0.281172343660577460749, -0.249846424327315379416, -0.195946274377377043504, 0.127369340335793260083, 0.0930573646035723511604, -0.0713941471663970871453, -0.0294575368218758128583, 0.0332126740593410017398, 0.00360655356695616965542, -0.0107331754833305750443, 0.00139535174705290116579, 0.00199240529518505611716, -0.000685856694959711626561, -0.000116466855129285450951, 0.0000935886703200695913341, -0.0000132642028945212448124},
    }};
    return table;
}

} // namespace detail

inline const std::vector<double> &daubechies_lowpass(int order) {
    require(order >= 1 && order <= 10, "Daubechies order must lie in [1, 10]");
    return detail::daubechies_table()[static_cast<std::size_t>(order - 1)];
}

/// Quadrature-mirror highpass g[m] = (-1)^m h[L-1-m].
inline std::vector<double> daubechies_highpass(int order) {
    const auto &h = daubechies_lowpass(order);
    std::vector<double> g(h.size());
    for (std::size_t m = 0; m < h.size(); ++m) g[m] = ((m % 2) ? -1.0 : 1.0) * h[h.size() - 1 - m];
    return g;
}

struct WaveletSpec {
    int order = 6;
    int levels = 0;
    std::size_t original_length = 0;
    std::size_t padded_length = 0; ///< original_length rounded up to a multiple of 2^levels

    std::size_t coeff_length() const { return padded_length >> levels; }
};

/// Spec for series of `length` samples; the zero-padding rule rounds the length up to a
/// multiple of 2^levels.
inline WaveletSpec make_wavelet_spec(std::size_t length, int levels, int order = 6) {
    require(length >= 1, "wavelet: empty series");
    require(levels >= 0 && levels < 30, "wavelet: levels must lie in [0, 30)");
    daubechies_lowpass(order);
    const std::size_t block = std::size_t{1} << levels;
    return WaveletSpec{order, levels, length, (length + block - 1) / block * block};
}

struct DwtResult {
    Matrix approx;               ///< channels x n_tau, level-L approximation
    std::vector<Matrix> details; ///< details[l] at level l + 1
};

namespace detail {

inline void analysis_step(const Matrix &x, const std::vector<double> &h, const std::vector<double> &g, Matrix &a,
                          Matrix &d) {
    const Eigen::Index n = x.cols(), half = n / 2;
    const Eigen::Index len = static_cast<Eigen::Index>(h.size());
    a.setZero(x.rows(), half);
    d.setZero(x.rows(), half);
    for (Eigen::Index k = 0; k < half; ++k) {
        for (Eigen::Index m = 0; m < len; ++m) {
            const Eigen::Index src = (2 * k + m) % n;
            a.col(k) += h[static_cast<std::size_t>(m)] * x.col(src);
            d.col(k) += g[static_cast<std::size_t>(m)] * x.col(src);
        }
    }
}

/// Adjoint of analysis_step; with orthonormal filters this is its exact inverse.
inline Matrix synthesis_step(const Matrix &a, const Matrix *d, const std::vector<double> &h,
                             const std::vector<double> &g) {
    const Eigen::Index half = a.cols(), n = 2 * half;
    const Eigen::Index len = static_cast<Eigen::Index>(h.size());
    Matrix x = Matrix::Zero(a.rows(), n);
    for (Eigen::Index k = 0; k < half; ++k) {
        for (Eigen::Index m = 0; m < len; ++m) {
            const Eigen::Index dst = (2 * k + m) % n;
            x.col(dst) += h[static_cast<std::size_t>(m)] * a.col(k);
            if (d) x.col(dst) += g[static_cast<std::size_t>(m)] * d->col(k);
        }
    }
    return x;
}

inline Matrix pad_to(const Matrix &series, const WaveletSpec &spec) {
    const auto cols = static_cast<std::size_t>(series.cols());
    if (cols == spec.padded_length) return series;
    if (cols != spec.original_length) {
        std::ostringstream msg;
        msg << "wavelet: series length " << cols << " matches neither the original (" << spec.original_length
            << ") nor the padded (" << spec.padded_length << ") length";
        throw Error(ErrorKind::InvalidArgument, msg.str());
    }
    Matrix out = Matrix::Zero(series.rows(), static_cast<Eigen::Index>(spec.padded_length));
    out.leftCols(series.cols()) = series;
    return out;
}

} // namespace detail

/// L-level periodic DWT of each row. The series is zero-padded to spec.padded_length.
/// Returns the level-L approximation (the downsampled series) and all detail levels.
inline DwtResult dwt_approx(const Matrix &series, const WaveletSpec &spec) {
    const auto &h = daubechies_lowpass(spec.order);
    const auto g = daubechies_highpass(spec.order);
    DwtResult out;
    out.approx = detail::pad_to(series, spec);
    for (int l = 0; l < spec.levels; ++l) {
        Matrix a, d;
        detail::analysis_step(out.approx, h, g, a, d);
        out.approx.swap(a);
        out.details.push_back(std::move(d));
    }
    return out;
}

/// Exact inverse of dwt_approx (details retained); returns the padded length.
inline Matrix idwt_full(const DwtResult &coeffs, const WaveletSpec &spec) {
    require(coeffs.details.size() == static_cast<std::size_t>(spec.levels), "idwt_full: detail level count mismatch");
    const auto &h = daubechies_lowpass(spec.order);
    const auto g = daubechies_highpass(spec.order);
    Matrix x = coeffs.approx;
    for (int l = spec.levels - 1; l >= 0; --l) x = detail::synthesis_step(x, &coeffs.details[static_cast<std::size_t>(l)], h, g);
    return x;
}

/// Synthesis from approximation coefficients with zero details, cut to original_length.
inline Matrix idwt_approx(const Matrix &coeffs, const WaveletSpec &spec) {
    if (static_cast<std::size_t>(coeffs.cols()) != spec.coeff_length()) {
        std::ostringstream msg;
        msg << "idwt_approx: " << coeffs.cols() << " coefficients, expected " << spec.coeff_length();
        throw Error(ErrorKind::InvalidArgument, msg.str());
    }
    const auto &h = daubechies_lowpass(spec.order);
    const auto g = daubechies_highpass(spec.order);
    Matrix x = coeffs;
    for (int l = 0; l < spec.levels; ++l) x = detail::synthesis_step(x, nullptr, h, g);
    return x.leftCols(static_cast<Eigen::Index>(spec.original_length));
}

/// Relative Frobenius error of approximation-only reconstruction, pooled over `series`.
inline double approximation_error(std::span<const Matrix> series, const WaveletSpec &spec) {
    double err = 0.0, ref = 0.0;
    for (const Matrix &x : series) {
        const Matrix back = idwt_approx(dwt_approx(x, spec).approx, spec);
        err += (back - x).squaredNorm();
        ref += x.squaredNorm();
    }
    return ref > 0.0 ? std::sqrt(err / ref) : 0.0;
}

// =============================================================================
// Augmented inputs
// =============================================================================

/// [c_p; theta 1^T]: theta replicated as constant rows under the coefficient series.
inline Matrix augment_inputs(const Matrix &c_p, const Vector &theta) {
    require(theta.allFinite(), "augment_inputs: non-finite theta");
    Matrix out(c_p.rows() + theta.size(), c_p.cols());
    out.topRows(c_p.rows()) = c_p;
    for (Eigen::Index i = 0; i < theta.size(); ++i) out.row(c_p.rows() + i).setConstant(theta[i]);
    return out;
}

} // namespace rhmeta::reduction
