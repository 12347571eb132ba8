// rhmeta pipeline: dataset generation and storage, splits, transform fitting, training,
// probabilistic prediction, evaluation and plot-data emission.
#pragma once

#include "rhmeta/array_io.hpp"
#include "rhmeta/config.hpp"
#include "rhmeta/dynamics.hpp"
#include "rhmeta/excitation.hpp"
#include "rhmeta/reduction.hpp"
#include "rhmeta/vlstm.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>

namespace rhmeta::pipeline {

namespace fs = std::filesystem;
using config::CaseConfig;
using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char *kCodeVersion = "1.0.0";

using Log = std::function<void(const std::string &)>;

inline void say(const Log &log, const std::string &msg) {
    if (log) log(msg);
}

inline std::string dump(const json &j) { return j.dump(2) + "\n"; }

inline json read_json(const fs::path &p) {
    try {
        return json::parse(io::read_text(p));
    } catch (const json::parse_error &e) {
        throw Error(ErrorKind::Io, p.string() + ": " + e.what());
    }
}

struct RunLayout {
    fs::path root;

    fs::path dataset() const { return root / "dataset"; }
    fs::path transforms() const { return root / "transforms"; }
    fs::path model() const { return root / "model"; }
    fs::path report() const { return root / "report"; }
    fs::path plots() const { return root / "plots"; }
    fs::path predictions() const { return root / "predictions"; }
    fs::path timing() const { return root / "timing.json"; }
};

// =============================================================================
// Splits
// =============================================================================

struct Split {
    std::vector<std::size_t> train, val, test;
};

/// Seeded permutation of `indices`: first n_train to train, next n_val to val, rest to test.
inline Split split_indices(std::vector<std::size_t> indices, std::size_t n_train, std::size_t n_val,
                           std::uint64_t seed) {
    require(n_train + n_val <= indices.size(), "split: train + val exceeds the available samples");
    Rng rng(seed, Stream::Split);
    rng.shuffle(indices);
    Split s;
    s.train.assign(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(indices.begin() + static_cast<std::ptrdiff_t>(n_train),
                 indices.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(indices.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), indices.end());
    return s;
}

inline Split split_dataset(std::size_t n, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                           std::uint64_t seed) {
    require(n_train + n_val + n_test == n, "split: counts must sum to the number of samples");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return split_indices(std::move(idx), n_train, n_val, seed);
}

inline json split_to_json(const Split &s) { return json{{"train", s.train}, {"val", s.val}, {"test", s.test}}; }

inline Split split_from_json(const json &j) {
    return Split{j.at("train").get<std::vector<std::size_t>>(), j.at("val").get<std::vector<std::size_t>>(),
                 j.at("test").get<std::vector<std::size_t>>()};
}

// =============================================================================
// Samples and dataset store
// =============================================================================

struct Sample {
    std::size_t index = 0;
    excitation::ExcitationRecord excitation;
    dynamics::SystemRealization system;
    dynamics::ResponseRecord response;
};

inline std::uint64_t excitation_seed(const CaseConfig &c, std::size_t i) {
    return derive_seed(c.seed, Stream::Excitation, i);
}
inline std::uint64_t system_seed(const CaseConfig &c, std::size_t i) { return derive_seed(c.seed, Stream::System, i); }

inline excitation::ExcitationRecord make_excitation(const CaseConfig &c, std::uint64_t seed) {
    if (c.seismic()) return excitation::gen_ground_motion(c.gm, seed);
    return excitation::gen_stationary_field(config::floor_force_psd(c), c.n_stories, c.gm.duration, c.gm.dt, seed);
}

/// Reference response of one system realization to one excitation.
inline dynamics::ResponseRecord solve(const CaseConfig &c, const dynamics::SystemRealization &sys,
                                      const excitation::ExcitationRecord &exc) {
    if (c.is_mdof()) return dynamics::simulate_mdof_shear(config::building_params(c, sys), exc, c.solver_tol);
    return dynamics::simulate_sdof_boucwen(config::sdof_params(sys), exc, c.solver_tol);
}

/// Interstory spring of story `story` (0-based). For the SDOF case this is the unit-mass
/// oscillator spring (stiffness omega^2).
inline dynamics::StorySpring story_spring(const CaseConfig &c, const dynamics::SystemRealization &sys,
                                          std::size_t story) {
    if (c.is_mdof()) return config::building_params(c, sys).springs.at(story);
    const dynamics::BoucWenParams p = config::sdof_params(sys);
    return dynamics::StorySpring{p.omega * p.omega, p.rho, p.alpha, p.beta, p.gamma, p.n_exp};
}

inline Sample simulate_sample(const CaseConfig &c, std::size_t index) {
    Sample s;
    s.index = index;
    s.excitation = make_excitation(c, excitation_seed(c, index));
    s.system = dynamics::sample_system(config::system_specs(c), system_seed(c, index));
    s.response = solve(c, s.system, s.excitation);
    return s;
}

inline fs::path sample_dir(const fs::path &dataset_dir, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", index);
    return dataset_dir / "samples" / buf;
}

/// Persisted dataset: dataset.json plus one directory of arrays per sample. Loads are
/// recorded in an access log so split hygiene can be audited.
class DatasetStore {
  public:
    explicit DatasetStore(fs::path dir) : dir_(std::move(dir)) {
        meta_ = read_json(dir_ / "dataset.json");
        if (meta_.at("format_version").get<int>() != kFormatVersion)
            throw Error(ErrorKind::Io, "dataset format version mismatch in " + dir_.string());
        split_ = split_from_json(meta_.at("split"));
    }

    const fs::path &dir() const { return dir_; }
    const json &meta() const { return meta_; }
    const Split &split() const { return split_; }
    std::size_t n_samples() const { return meta_.at("n_samples").get<std::size_t>(); }

    Sample load(std::size_t index) const {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            access_log_.push_back(index);
        }
        const fs::path d = sample_dir(dir_, index);
        const json sj = read_json(d / "sample.json");
        require(sj.at("status") == "ok", "sample " + std::to_string(index) + " failed during generation");
        Sample s;
        s.index = index;
        s.excitation.samples = io::read_matrix(d / "excitation.rha");
        s.excitation.dt = sj.at("dt").get<double>();
        s.excitation.seed = sj.at("excitation_seed").get<std::uint64_t>();
        s.excitation.kind = sj.at("kind") == "seismic" ? excitation::ExcitationKind::Seismic
                                                       : excitation::ExcitationKind::Stationary;
        s.excitation.unit = sj.at("unit").get<std::string>();
        s.system.names = sj.at("theta_names").get<std::vector<std::string>>();
        s.system.units = sj.at("theta_units").get<std::vector<std::string>>();
        const auto theta = sj.at("theta").get<std::vector<double>>();
        s.system.theta = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
        s.system.fixed = sj.at("fixed").get<std::map<std::string, double>>();
        s.response.dt = s.excitation.dt;
        s.response.displacement = io::read_matrix(d / "displacement.rha");
        s.response.velocity = io::read_matrix(d / "velocity.rha");
        s.response.drift = io::read_matrix(d / "drift.rha");
        s.response.hysteretic = io::read_matrix(d / "hysteretic.rha");
        s.response.restoring_force = io::read_matrix(d / "restoring_force.rha");
        s.response.accepted_steps = sj.at("accepted_steps").get<std::size_t>();
        s.response.rejected_steps = sj.at("rejected_steps").get<std::size_t>();
        return s;
    }

    std::vector<Sample> load_many(const std::vector<std::size_t> &indices) const {
        std::vector<Sample> out(indices.size());
        parallel_for(indices.size(), [&](std::size_t k) { out[k] = load(indices[k]); });
        return out;
    }

    std::vector<std::size_t> access_log() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return access_log_;
    }
    void clear_access_log() const {
        std::lock_guard<std::mutex> lock(mutex_);
        access_log_.clear();
    }

  private:
    fs::path dir_;
    json meta_;
    Split split_;
    mutable std::mutex mutex_;
    mutable std::vector<std::size_t> access_log_;
};

namespace detail {

inline void write_sample(const fs::path &d, const CaseConfig &c, const Sample &s) {
    io::write_matrix(d / "excitation.rha", s.excitation.samples);
    io::write_matrix(d / "displacement.rha", s.response.displacement);
    io::write_matrix(d / "velocity.rha", s.response.velocity);
    io::write_matrix(d / "drift.rha", s.response.drift);
    io::write_matrix(d / "hysteretic.rha", s.response.hysteretic);
    io::write_matrix(d / "restoring_force.rha", s.response.restoring_force);
    json sj;
    sj["index"] = s.index;
    sj["status"] = "ok";
    sj["config_hash"] = config::config_hash(c);
    sj["excitation_seed"] = s.excitation.seed;
    sj["system_seed"] = system_seed(c, s.index);
    sj["kind"] = excitation::to_string(s.excitation.kind);
    sj["unit"] = s.excitation.unit;
    sj["dt"] = s.excitation.dt;
    sj["theta_names"] = s.system.names;
    sj["theta_units"] = s.system.units;
    sj["theta"] = std::vector<double>(s.system.theta.data(), s.system.theta.data() + s.system.theta.size());
    sj["fixed"] = s.system.fixed;
    sj["accepted_steps"] = s.response.accepted_steps;
    sj["rejected_steps"] = s.response.rejected_steps;
    io::write_text(d / "sample.json.tmp", dump(sj));
    fs::rename(d / "sample.json.tmp", d / "sample.json");
}

inline void write_failure(const fs::path &d, const CaseConfig &c, std::size_t index, const Error &e) {
    json sj;
    sj["index"] = index;
    sj["status"] = "failed";
    sj["config_hash"] = config::config_hash(c);
    sj["error"] = e.what();
    sj["error_kind"] = to_string(e.kind());
    io::write_text(d / "sample.json.tmp", dump(sj));
    fs::rename(d / "sample.json.tmp", d / "sample.json");
}

/// Status of a previously written sample ("ok", "failed"), or nothing if it must be (re)generated.
inline std::optional<std::string> existing_status(const fs::path &d, const std::string &hash) {
    if (!fs::exists(d / "sample.json")) return std::nullopt;
    try {
        const json sj = read_json(d / "sample.json");
        if (sj.value("config_hash", "") != hash) return std::nullopt;
        return sj.at("status").get<std::string>();
    } catch (const std::exception &) {
        return std::nullopt;
    }
}

} // namespace detail

struct GenerationSummary {
    std::size_t generated = 0, reused = 0, failed = 0;
};

/// Simulates every sample (in parallel, resuming any sample already on disk for the same
/// config), then writes dataset.json with the split over the successful samples. If some
/// samples failed, the test split shrinks by that many.
inline GenerationSummary generate_dataset(const CaseConfig &c, const fs::path &dir, const Log &log = {}) {
    config::validate(c);
    fs::create_directories(dir);
    const std::string hash = config::config_hash(c);
    std::vector<std::string> status(c.n_samples);
    std::vector<char> reused(c.n_samples, 0);
    std::mutex log_mutex;
    std::size_t done = 0;
    parallel_for(c.n_samples, [&](std::size_t i) {
        const fs::path d = sample_dir(dir, i);
        if (auto st = detail::existing_status(d, hash)) {
            status[i] = *st;
            reused[i] = 1;
            return;
        }
        fs::create_directories(d);
        try {
            detail::write_sample(d, c, simulate_sample(c, i));
            status[i] = "ok";
        } catch (const Error &e) {
            if (e.kind() != ErrorKind::StiffnessFailure && e.kind() != ErrorKind::NumericalFailure) throw;
            detail::write_failure(d, c, i, e);
            status[i] = "failed";
        }
        std::lock_guard<std::mutex> lock(log_mutex);
        if (++done % 50 == 0) say(log, "gen: " + std::to_string(done) + " samples simulated");
    });

    GenerationSummary summary;
    std::vector<std::size_t> ok, failed;
    for (std::size_t i = 0; i < c.n_samples; ++i) {
        (status[i] == "ok" ? ok : failed).push_back(i);
        if (reused[i]) ++summary.reused;
        else ++summary.generated;
    }
    summary.failed = failed.size();
    if (ok.size() < c.n_train + c.n_val + 1) {
        throw Error(ErrorKind::NumericalFailure, std::to_string(failed.size()) +
                                                     " samples failed; too few left for the configured splits");
    }
    const Split split = split_indices(ok, c.n_train, c.n_val, c.seed);

    const dynamics::SystemRealization probe = dynamics::sample_system(config::system_specs(c), 0);
    json meta;
    meta["format_version"] = kFormatVersion;
    meta["code_version"] = kCodeVersion;
    meta["case"] = config::to_string(c.case_id);
    meta["config_hash"] = hash;
    meta["config"] = config::to_json(c);
    meta["n_samples"] = c.n_samples;
    meta["n_dof"] = c.n_dof();
    meta["steps"] = c.gm.n_steps();
    meta["dt"] = c.gm.dt;
    meta["theta_names"] = probe.names;
    meta["theta_units"] = probe.units;
    meta["failed"] = failed;
    meta["split"] = split_to_json(split);
    io::write_text(dir / "dataset.json", dump(meta));
    say(log, "gen: " + std::to_string(ok.size()) + " ok, " + std::to_string(failed.size()) + " failed");
    return summary;
}

// =============================================================================
// Transforms
// =============================================================================

/// Everything needed to map (excitation, theta) to network inputs and network outputs
/// back to physical displacements.
struct Transforms {
    std::size_t n_dof = 1;
    std::size_t steps = 0;
    double dt = 0.0;
    bool project_inputs = false; ///< stationary floor forces share the displacement basis
    bool pod_bypass = true;
    reduction::PodBasis basis;
    reduction::NormStats input_norm, output_norm, theta_norm;
    reduction::WaveletSpec wavelet;
    double wavelet_error = 0.0;
    std::vector<std::string> theta_names;

    Eigen::Index input_dim() const { return input_norm.min.size() + theta_norm.min.size(); }
    Eigen::Index output_dim() const { return output_norm.min.size(); }
};

/// Excitation channels seen by the network before normalization.
inline Matrix input_series(const Transforms &tr, const excitation::ExcitationRecord &exc) {
    return tr.project_inputs ? reduction::project(exc.samples, tr.basis) : exc.samples;
}

/// Augmented network input: DWT(normalize(input series)) with normalized theta rows.
inline Matrix input_features(const Transforms &tr, const excitation::ExcitationRecord &exc, const Vector &theta) {
    require(static_cast<std::size_t>(exc.steps()) == tr.steps, "excitation length does not match the model");
    require(theta.size() == tr.theta_norm.min.size(), "theta dimension does not match the model");
    const Matrix c_p = reduction::dwt_approx(reduction::minmax_apply(input_series(tr, exc), tr.input_norm), tr.wavelet).approx;
    const Matrix th = reduction::minmax_apply(theta, tr.theta_norm);
    return reduction::augment_inputs(c_p, th.col(0));
}

/// Network target: DWT(normalize(project(u))).
inline Matrix output_features(const Transforms &tr, const Matrix &displacement) {
    return reduction::dwt_approx(reduction::minmax_apply(reduction::project(displacement, tr.basis), tr.output_norm),
                                 tr.wavelet)
        .approx;
}

/// Inverse chain: inverse DWT -> denormalize -> POD reconstruction.
inline Matrix invert_output(const Transforms &tr, const Matrix &c_q) {
    return reduction::reconstruct(reduction::minmax_invert(reduction::idwt_approx(c_q, tr.wavelet), tr.output_norm),
                                  tr.basis);
}

namespace detail {

inline double wavelet_error(const std::vector<Matrix> &q, const reduction::NormStats &norm,
                            const reduction::WaveletSpec &spec) {
    double err = 0.0, ref = 0.0;
    for (const Matrix &x : q) {
        const Matrix y = reduction::minmax_apply(x, norm);
        const Matrix back = reduction::minmax_invert(reduction::idwt_approx(reduction::dwt_approx(y, spec).approx, spec), norm);
        err += (back - x).squaredNorm();
        ref += x.squaredNorm();
    }
    return ref > 0.0 ? std::sqrt(err / ref) : 0.0;
}

inline reduction::NormStats theta_stats(const std::vector<Sample> &samples) {
    std::vector<Matrix> cols;
    for (const Sample &s : samples) cols.emplace_back(s.system.theta);
    if (cols.front().rows() == 0) return reduction::NormStats{Vector(0), Vector(0)};
    return reduction::minmax_fit(cols, "theta channel");
}

} // namespace detail

/// Fits POD basis, normalization statistics and wavelet levels on `calibration` samples.
inline Transforms fit_transforms_on(const CaseConfig &c, const std::vector<Sample> &calibration) {
    require(!calibration.empty(), "fit_transforms: empty calibration set");
    Transforms tr;
    tr.n_dof = c.n_dof();
    tr.steps = static_cast<std::size_t>(calibration.front().response.steps());
    tr.dt = calibration.front().response.dt;
    tr.project_inputs = !c.seismic();
    tr.pod_bypass = c.pod_bypass;
    tr.theta_names = calibration.front().system.names;

    if (c.pod_bypass) {
        tr.basis = reduction::identity_basis(tr.n_dof);
    } else {
        std::vector<Matrix> disp;
        for (const Sample &s : calibration) disp.push_back(s.response.displacement);
        const Matrix snaps = reduction::collect_snapshots(disp, std::min(c.snapshots_per_record, tr.steps),
                                                          c.snapshot_scheme, c.seed);
        tr.basis = reduction::compute_pod_basis(snaps, c.pod_energy_threshold);
        tr.basis.n_snapshots = static_cast<std::size_t>(snaps.cols());
    }

    std::vector<Matrix> q, p;
    for (const Sample &s : calibration) {
        q.push_back(reduction::project(s.response.displacement, tr.basis));
        p.push_back(input_series(tr, s.excitation));
    }
    tr.output_norm = reduction::minmax_fit(q, "output channel");
    tr.input_norm = reduction::minmax_fit(p, "input channel");
    tr.theta_norm = detail::theta_stats(calibration);

    if (c.wavelet_levels >= 0) {
        tr.wavelet = reduction::make_wavelet_spec(tr.steps, c.wavelet_levels, c.wavelet_order);
        tr.wavelet_error = detail::wavelet_error(q, tr.output_norm, tr.wavelet);
    } else {
        // largest L whose approximation error on the calibration outputs stays below the limit
        std::optional<reduction::WaveletSpec> chosen;
        for (int L = 0; L <= 12 && (tr.steps >> L) >= 2; ++L) {
            const auto spec = reduction::make_wavelet_spec(tr.steps, L, c.wavelet_order);
            const double e = detail::wavelet_error(q, tr.output_norm, spec);
            if (e >= c.wavelet_max_error) break;
            if (spec.coeff_length() <= c.wavelet_cap) {
                chosen = spec;
                tr.wavelet_error = e;
            }
        }
        if (!chosen) {
            throw Error(ErrorKind::InvalidArgument,
                        "no wavelet level keeps the series within wavelet_cap = " + std::to_string(c.wavelet_cap) +
                            " samples and under the approximation error limit");
        }
        tr.wavelet = *chosen;
    }
    return tr;
}

inline Transforms fit_transforms(const CaseConfig &c, const DatasetStore &store,
                                 const std::vector<std::size_t> &calibration_indices) {
    return fit_transforms_on(c, store.load_many(calibration_indices));
}

inline void save_transforms(const fs::path &dir, const Transforms &tr) {
    fs::create_directories(dir);
    io::write_matrix(dir / "pod_modes.rha", tr.basis.modes);
    io::write_vector(dir / "pod_singular_values.rha", tr.basis.singular_values);
    io::write_vector(dir / "input_min.rha", tr.input_norm.min);
    io::write_vector(dir / "input_max.rha", tr.input_norm.max);
    io::write_vector(dir / "output_min.rha", tr.output_norm.min);
    io::write_vector(dir / "output_max.rha", tr.output_norm.max);
    io::write_vector(dir / "theta_min.rha", tr.theta_norm.min);
    io::write_vector(dir / "theta_max.rha", tr.theta_norm.max);
    json j;
    j["format_version"] = kFormatVersion;
    j["n_dof"] = tr.n_dof;
    j["steps"] = tr.steps;
    j["dt"] = tr.dt;
    j["project_inputs"] = tr.project_inputs;
    j["pod"] = {{"bypass", tr.pod_bypass},
                {"energy_threshold", tr.basis.energy_threshold},
                {"n_modes", tr.basis.n_modes()},
                {"n_snapshots", tr.basis.n_snapshots},
                {"retained_energy", tr.basis.retained_energy()}};
    j["wavelet"] = {{"family", "daubechies"},
                    {"order", tr.wavelet.order},
                    {"levels", tr.wavelet.levels},
                    {"boundary", "periodic"},
                    {"original_length", tr.wavelet.original_length},
                    {"padded_length", tr.wavelet.padded_length},
                    {"approximation_error", tr.wavelet_error}};
    j["theta_names"] = tr.theta_names;
    io::write_text(dir / "transforms.json", dump(j));
}

inline Transforms load_transforms(const fs::path &dir) {
    const json j = read_json(dir / "transforms.json");
    if (j.at("format_version").get<int>() != kFormatVersion)
        throw Error(ErrorKind::Io, "transforms format version mismatch in " + dir.string());
    Transforms tr;
    tr.n_dof = j.at("n_dof").get<std::size_t>();
    tr.steps = j.at("steps").get<std::size_t>();
    tr.dt = j.at("dt").get<double>();
    tr.project_inputs = j.at("project_inputs").get<bool>();
    tr.pod_bypass = j.at("pod").at("bypass").get<bool>();
    tr.basis.modes = io::read_matrix(dir / "pod_modes.rha");
    tr.basis.singular_values = io::read_vector(dir / "pod_singular_values.rha");
    tr.basis.energy_threshold = j.at("pod").at("energy_threshold").get<double>();
    tr.basis.n_snapshots = j.at("pod").at("n_snapshots").get<std::size_t>();
    tr.input_norm = {io::read_vector(dir / "input_min.rha"), io::read_vector(dir / "input_max.rha")};
    tr.output_norm = {io::read_vector(dir / "output_min.rha"), io::read_vector(dir / "output_max.rha")};
    tr.theta_norm = {io::read_vector(dir / "theta_min.rha"), io::read_vector(dir / "theta_max.rha")};
    const json &w = j.at("wavelet");
    tr.wavelet = reduction::make_wavelet_spec(w.at("original_length").get<std::size_t>(), w.at("levels").get<int>(),
                                              w.at("order").get<int>());
    tr.wavelet_error = w.at("approximation_error").get<double>();
    tr.theta_names = j.at("theta_names").get<std::vector<std::string>>();
    return tr;
}

// =============================================================================
// Model
// =============================================================================

struct Model {
    vlstm::VLstmNetwork net;
    Transforms transforms;
    vlstm::LossHistory history;
    json training; ///< training metadata echoed into model.json
};

inline std::uint64_t training_seed(const CaseConfig &c) { return derive_seed(c.seed, Stream::Init, 0x7472); }

inline vlstm::TrainConfig train_config(const CaseConfig &c) {
    vlstm::TrainConfig t;
    t.max_epochs = c.max_epochs;
    t.batch_size = c.batch_size;
    t.learning_rate = c.learning_rate;
    t.patience = c.patience;
    t.val_masks = c.val_masks;
    t.seed = training_seed(c);
    return t;
}

inline std::string loss_history_csv(const vlstm::LossHistory &h) {
    io::CsvWriter csv({"epoch", "train_loss", "val_loss"});
    for (std::size_t e = 0; e < h.epochs(); ++e) csv.row({static_cast<double>(e), h.train[e], h.val[e]});
    return csv.str();
}

inline vlstm::LossHistory parse_loss_history(const std::string &text) {
    vlstm::LossHistory h;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double cols[3];
        std::istringstream row(line);
        std::string cell;
        for (double &v : cols) {
            if (!std::getline(row, cell, ',')) throw Error(ErrorKind::Io, "loss history: short row '" + line + "'");
            v = std::strtod(cell.c_str(), nullptr);
        }
        h.train.push_back(cols[1]);
        h.val.push_back(cols[2]);
    }
    return h;
}

/// Trains a network on already loaded samples with fitted transforms.
inline Model train_model(const CaseConfig &c, const Transforms &tr, const std::vector<Sample> &train_set,
                         const std::vector<Sample> &val_set, const Log &log = {},
                         const vlstm::MaskLogger &mask_log = {}) {
    std::vector<Matrix> tx, ty, vx, vy;
    for (const Sample &s : train_set) {
        tx.push_back(input_features(tr, s.excitation, s.system.theta));
        ty.push_back(output_features(tr, s.response.displacement));
    }
    for (const Sample &s : val_set) {
        vx.push_back(input_features(tr, s.excitation, s.system.theta));
        vy.push_back(output_features(tr, s.response.displacement));
    }
    const vlstm::TrainConfig tc = train_config(c);
    vlstm::DropoutSpec drop{c.dropout, true, c.inverted_scaling};
    Model m;
    m.transforms = tr;
    m.net = vlstm::init_network(tr.input_dim(), static_cast<Eigen::Index>(c.hidden), tr.output_dim(), drop, tc.seed);
    m.net.sigma2 = c.sigma2;
    say(log, "train: " + std::to_string(tx.size()) + " sequences of length " + std::to_string(tx.front().cols()) +
                 ", " + std::to_string(vlstm::iterations_per_epoch(tx.size(), tc.batch_size)) + " iterations per epoch");
    vlstm::MaskLogger logger = mask_log;
    m.history = vlstm::train(m.net, tx, ty, vx, vy, tc, logger);
    say(log, "train: " + std::to_string(m.history.epochs()) + " epochs, best epoch " +
                 std::to_string(m.history.best_epoch) + ", best loss " + io::format_double(m.history.best_val));
    m.training = {{"max_epochs", tc.max_epochs},
                  {"epochs_run", m.history.epochs()},
                  {"best_epoch", m.history.best_epoch},
                  {"best_monitored_loss", m.history.best_val},
                  {"stopped_early", m.history.stopped_early},
                  {"batch_size", tc.batch_size},
                  {"learning_rate", tc.learning_rate},
                  {"patience", tc.effective_patience()},
                  {"val_masks", tc.val_masks},
                  {"seed", tc.seed},
                  {"n_train", tx.size()},
                  {"n_val", vx.size()}};
    return m;
}

inline void save_model(const fs::path &dir, const Model &m) {
    fs::create_directories(dir);
    const auto &p = m.net.params;
    io::write_matrix(dir / "lstm_w_input.rha", p.lstm.w_input);
    io::write_matrix(dir / "lstm_w_hidden.rha", p.lstm.w_hidden);
    io::write_vector(dir / "lstm_bias.rha", p.lstm.bias);
    io::write_matrix(dir / "dense_weight.rha", p.dense.weight);
    io::write_vector(dir / "dense_bias.rha", p.dense.bias);
    save_transforms(dir / "transforms", m.transforms);
    io::write_text(dir / "loss_history.csv", loss_history_csv(m.history));
    json j;
    j["format_version"] = kFormatVersion;
    j["code_version"] = kCodeVersion;
    j["input_dim"] = m.net.input_dim();
    j["hidden"] = m.net.hidden();
    j["output_dim"] = m.net.output_dim();
    j["gate_order"] = "forget,input,output,state";
    j["dropout"] = {{"rate", m.net.dropout.rate},
                    {"enabled", m.net.dropout.enabled},
                    {"inverted_scaling", m.net.dropout.inverted_scaling},
                    {"masked_layers", {"dense_rows"}}};
    j["sigma2"] = m.net.sigma2;
    j["training"] = m.training;
    io::write_text(dir / "model.json", dump(j));
}

inline Model load_model(const fs::path &dir) {
    const json j = read_json(dir / "model.json");
    if (j.at("format_version").get<int>() != kFormatVersion)
        throw Error(ErrorKind::Io, "model format version mismatch in " + dir.string());
    Model m;
    auto &p = m.net.params;
    p.lstm.w_input = io::read_matrix(dir / "lstm_w_input.rha");
    p.lstm.w_hidden = io::read_matrix(dir / "lstm_w_hidden.rha");
    p.lstm.bias = io::read_vector(dir / "lstm_bias.rha");
    p.dense.weight = io::read_matrix(dir / "dense_weight.rha");
    p.dense.bias = io::read_vector(dir / "dense_bias.rha");
    const json &d = j.at("dropout");
    m.net.dropout = {d.at("rate").get<double>(), d.at("enabled").get<bool>(), d.at("inverted_scaling").get<bool>()};
    m.net.sigma2 = j.at("sigma2").get<double>();
    m.training = j.at("training");
    m.history = parse_loss_history(io::read_text(dir / "loss_history.csv"));
    m.history.best_epoch = m.training.at("best_epoch").get<std::size_t>();
    m.history.best_val = m.training.at("best_monitored_loss").is_number()
                             ? m.training.at("best_monitored_loss").get<double>()
                             : std::numeric_limits<double>::infinity();
    m.history.stopped_early = m.training.at("stopped_early").get<bool>();
    m.transforms = load_transforms(dir / "transforms");
    require(m.net.input_dim() == m.transforms.input_dim() && m.net.output_dim() == m.transforms.output_dim(),
            "model tensors do not match the attached transforms");
    return m;
}

// =============================================================================
// Prediction
// =============================================================================

struct Prediction {
    std::vector<Matrix> ensemble; ///< n_real x (n_dof x T), physical units
    Matrix mean, lower, upper;
};

/// MC-dropout ensemble in physical units with mean and pointwise CI. Realization r of
/// sample `stream` draws its mask from a stream derived from `seed`.
inline Prediction predict(const Model &m, const excitation::ExcitationRecord &exc, const Vector &theta,
                          std::size_t n_real, double level, std::uint64_t seed) {
    const Matrix x = input_features(m.transforms, exc, theta);
    const std::vector<Matrix> reduced = vlstm::mc_predict(m.net, x, n_real, seed);
    Prediction out;
    out.ensemble.reserve(n_real);
    for (const Matrix &c_q : reduced) out.ensemble.push_back(invert_output(m.transforms, c_q));
    out.mean = vlstm::ensemble_mean(out.ensemble);
    if (n_real >= 2) {
        std::tie(out.lower, out.upper) = vlstm::confidence_interval(out.ensemble, level);
    } else {
        out.lower = out.upper = out.mean;
    }
    return out;
}

inline std::uint64_t prediction_seed(const CaseConfig &c, std::size_t sample_index) {
    return derive_seed(c.seed, Stream::Predict, sample_index);
}

// =============================================================================
// Evaluation
// =============================================================================

struct SampleMetrics {
    std::size_t index = 0;
    double mse = 0.0;       ///< mean squared error of the ensemble mean over all DoFs and steps
    double rel_rmse = 0.0;  ///< ||mean - reference||_2 / ||reference||_2
    double coverage = 0.0;  ///< fraction of monitored points inside the CI
    std::vector<double> peak_reference, peak_predicted; ///< per monitored DoF
    std::size_t out_of_range = 0; ///< normalized input/output values outside [-1, 1] (kept, not clipped)
};

struct HysteresisComparison {
    std::size_t story = 0; ///< 1-based
    Series drift_reference, force_reference, drift_predicted, force_predicted;
    double area_reference = 0.0, area_predicted = 0.0;

    double relative_error() const {
        return area_reference != 0.0 ? std::abs(area_predicted - area_reference) / std::abs(area_reference) : 0.0;
    }
};

struct EvaluationReport {
    std::string split_name;
    std::vector<std::size_t> monitored;
    std::vector<SampleMetrics> samples;
    std::size_t exemplar = 0; ///< position in `samples` of the lower-median-MSE sample
    std::vector<double> pearson; ///< per monitored DoF, peak scatter
    double mean_rel_rmse = 0.0;
    double coverage = 0.0;
    double median_ci_width = 0.0;
    double dt = 0.0;
    Matrix exemplar_reference, exemplar_mean, exemplar_lower, exemplar_upper; ///< monitored DoFs x T
    HysteresisComparison hysteresis;
};

inline double pearson(const std::vector<double> &x, const std::vector<double> &y) {
    require(x.size() == y.size() && x.size() >= 2, "pearson: need two equal series of length >= 2");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return (sxx == 0.0 && syy == 0.0) ? 1.0 : 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// Position of the lower median of `values` (ties broken by position).
inline std::size_t lower_median_position(const std::vector<double> &values) {
    require(!values.empty(), "lower median of an empty list");
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    return order[(order.size() - 1) / 2];
}

/// Metrics of one prediction against its reference.
inline SampleMetrics score(std::size_t index, const Prediction &pred, const Matrix &reference,
                           const std::vector<std::size_t> &monitored) {
    SampleMetrics m;
    m.index = index;
    const Matrix err = pred.mean - reference;
    m.mse = err.squaredNorm() / static_cast<double>(err.size());
    const double ref_norm = reference.norm();
    m.rel_rmse = ref_norm > 0.0 ? err.norm() / ref_norm : (err.norm() > 0.0 ? HUGE_VAL : 0.0);
    std::size_t inside = 0, total = 0;
    for (std::size_t d : monitored) {
        const auto di = static_cast<Eigen::Index>(d);
        m.peak_reference.push_back(reference.row(di).cwiseAbs().maxCoeff());
        m.peak_predicted.push_back(pred.mean.row(di).cwiseAbs().maxCoeff());
        for (Eigen::Index t = 0; t < reference.cols(); ++t) {
            inside += (pred.lower(di, t) <= reference(di, t) && reference(di, t) <= pred.upper(di, t)) ? 1 : 0;
            ++total;
        }
    }
    m.coverage = static_cast<double>(inside) / static_cast<double>(total);
    return m;
}

/// Interstory drift of story `story` (0-based) from a displacement matrix.
inline Series story_drift(const Matrix &disp, std::size_t story) {
    const auto s = static_cast<Eigen::Index>(story);
    Series d(static_cast<std::size_t>(disp.cols()));
    for (Eigen::Index t = 0; t < disp.cols(); ++t) d[static_cast<std::size_t>(t)] = disp(s, t) - (s > 0 ? disp(s - 1, t) : 0.0);
    return d;
}

inline HysteresisComparison compare_hysteresis(const CaseConfig &c, const Sample &s, const Matrix &predicted_disp) {
    HysteresisComparison h;
    h.story = c.hysteresis_story;
    const auto ref = dynamics::hysteresis_curve(s.response, h.story - 1);
    h.drift_reference = ref.drift;
    h.force_reference = ref.force;
    h.drift_predicted = story_drift(predicted_disp, h.story - 1);
    h.force_predicted = dynamics::replay_spring(story_spring(c, s.system, h.story - 1), h.drift_predicted);
    h.area_reference = dynamics::hysteretic_work(h.drift_reference, h.force_reference);
    h.area_predicted = dynamics::hysteretic_work(h.drift_predicted, h.force_predicted);
    return h;
}

/// Ensemble predictions for `samples`, scored against their references. Samples are
/// processed in parallel; every result lands in its own slot.
inline EvaluationReport evaluate_samples(const CaseConfig &c, const Model &m, const std::vector<Sample> &samples,
                                         const std::string &split_name = "test") {
    require(!samples.empty(), "evaluate: empty split");
    EvaluationReport r;
    r.split_name = split_name;
    r.monitored = c.monitored();
    r.dt = samples.front().response.dt;
    r.samples.resize(samples.size());
    std::vector<std::vector<double>> widths(samples.size());
    parallel_for(samples.size(), [&](std::size_t k) {
        const Sample &s = samples[k];
        const Prediction p = predict(m, s.excitation, s.system.theta, c.n_realizations, c.ci_level,
                                     prediction_seed(c, s.index));
        r.samples[k] = score(s.index, p, s.response.displacement, r.monitored);
        const Transforms &tr = m.transforms;
        r.samples[k].out_of_range =
            reduction::count_out_of_range(reduction::minmax_apply(input_series(tr, s.excitation), tr.input_norm)) +
            reduction::count_out_of_range(reduction::minmax_apply(s.system.theta, tr.theta_norm)) +
            reduction::count_out_of_range(
                reduction::minmax_apply(reduction::project(s.response.displacement, tr.basis), tr.output_norm));
        for (std::size_t d : r.monitored) {
            const auto di = static_cast<Eigen::Index>(d);
            for (Eigen::Index t = 0; t < p.upper.cols(); ++t) widths[k].push_back(p.upper(di, t) - p.lower(di, t));
        }
    });

    std::vector<double> mses, all_widths;
    double rel = 0.0, covered = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        mses.push_back(r.samples[k].mse);
        rel += r.samples[k].rel_rmse;
        covered += r.samples[k].coverage;
        all_widths.insert(all_widths.end(), widths[k].begin(), widths[k].end());
    }
    const double n = static_cast<double>(samples.size());
    r.mean_rel_rmse = rel / n;
    r.coverage = covered / n;
    std::sort(all_widths.begin(), all_widths.end());
    r.median_ci_width = all_widths[(all_widths.size() - 1) / 2];
    for (std::size_t j = 0; j < r.monitored.size(); ++j) {
        std::vector<double> x, y;
        for (const auto &sm : r.samples) {
            x.push_back(sm.peak_reference[j]);
            y.push_back(sm.peak_predicted[j]);
        }
        r.pearson.push_back(samples.size() >= 2 ? pearson(x, y) : 1.0);
    }

    r.exemplar = lower_median_position(mses);
    const Sample &ex = samples[r.exemplar];
    const Prediction p = predict(m, ex.excitation, ex.system.theta, c.n_realizations, c.ci_level,
                                 prediction_seed(c, ex.index));
    const Eigen::Index nm = static_cast<Eigen::Index>(r.monitored.size()), T = p.mean.cols();
    r.exemplar_reference.resize(nm, T);
    r.exemplar_mean.resize(nm, T);
    r.exemplar_lower.resize(nm, T);
    r.exemplar_upper.resize(nm, T);
    for (Eigen::Index j = 0; j < nm; ++j) {
        const auto d = static_cast<Eigen::Index>(r.monitored[static_cast<std::size_t>(j)]);
        r.exemplar_reference.row(j) = ex.response.displacement.row(d);
        r.exemplar_mean.row(j) = p.mean.row(d);
        r.exemplar_lower.row(j) = p.lower.row(d);
        r.exemplar_upper.row(j) = p.upper.row(d);
    }
    r.hysteresis = compare_hysteresis(c, ex, p.mean);
    return r;
}

inline EvaluationReport evaluate(const CaseConfig &c, const Model &m, const DatasetStore &store,
                                 const std::string &split_name = "test") {
    const Split &s = store.split();
    const std::vector<std::size_t> &idx = split_name == "train" ? s.train : split_name == "val" ? s.val : s.test;
    return evaluate_samples(c, m, store.load_many(idx), split_name);
}

namespace detail {

inline Matrix series_pair(const Series &a, const Series &b) {
    Matrix m(2, static_cast<Eigen::Index>(a.size()));
    for (std::size_t t = 0; t < a.size(); ++t) {
        m(0, static_cast<Eigen::Index>(t)) = a[t];
        m(1, static_cast<Eigen::Index>(t)) = b[t];
    }
    return m;
}

inline Series row_series(const Matrix &m, Eigen::Index r) {
    Series s(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index t = 0; t < m.cols(); ++t) s[static_cast<std::size_t>(t)] = m(r, t);
    return s;
}

} // namespace detail

inline void save_report(const fs::path &dir, const EvaluationReport &r) {
    fs::create_directories(dir);
    json samples = json::array();
    for (const auto &s : r.samples) {
        samples.push_back({{"index", s.index},
                           {"mse", s.mse},
                           {"rel_rmse", s.rel_rmse},
                           {"coverage", s.coverage},
                           {"out_of_range", s.out_of_range},
                           {"peak_reference", s.peak_reference},
                           {"peak_predicted", s.peak_predicted}});
    }
    json j;
    j["format_version"] = kFormatVersion;
    j["split"] = r.split_name;
    j["n_samples"] = r.samples.size();
    j["monitored_dofs"] = r.monitored;
    j["dt"] = r.dt;
    j["exemplar_index"] = r.samples[r.exemplar].index;
    j["exemplar_position"] = r.exemplar;
    j["peak_pearson"] = r.pearson;
    j["mean_rel_rmse"] = r.mean_rel_rmse;
    j["ci_coverage"] = r.coverage;
    j["median_ci_width"] = r.median_ci_width;
    std::size_t oor = 0, flagged = 0;
    for (const auto &s : r.samples) {
        oor += s.out_of_range;
        flagged += s.out_of_range > 0 ? 1 : 0;
    }
    j["out_of_range"] = {{"values", oor}, {"samples", flagged}};
    j["hysteresis"] = {{"story", r.hysteresis.story},
                       {"area_reference", r.hysteresis.area_reference},
                       {"area_predicted", r.hysteresis.area_predicted},
                       {"relative_error", r.hysteresis.relative_error()}};
    j["samples"] = samples;
    io::write_text(dir / "report.json", dump(j));
    io::write_matrix(dir / "exemplar_reference.rha", r.exemplar_reference);
    io::write_matrix(dir / "exemplar_mean.rha", r.exemplar_mean);
    io::write_matrix(dir / "exemplar_lower.rha", r.exemplar_lower);
    io::write_matrix(dir / "exemplar_upper.rha", r.exemplar_upper);
    io::write_matrix(dir / "hysteresis_reference.rha",
                     detail::series_pair(r.hysteresis.drift_reference, r.hysteresis.force_reference));
    io::write_matrix(dir / "hysteresis_predicted.rha",
                     detail::series_pair(r.hysteresis.drift_predicted, r.hysteresis.force_predicted));
}

inline EvaluationReport load_report(const fs::path &dir) {
    const json j = read_json(dir / "report.json");
    EvaluationReport r;
    r.split_name = j.at("split").get<std::string>();
    r.monitored = j.at("monitored_dofs").get<std::vector<std::size_t>>();
    r.dt = j.at("dt").get<double>();
    r.exemplar = j.at("exemplar_position").get<std::size_t>();
    r.pearson = j.at("peak_pearson").get<std::vector<double>>();
    r.mean_rel_rmse = j.at("mean_rel_rmse").get<double>();
    r.coverage = j.at("ci_coverage").get<double>();
    r.median_ci_width = j.at("median_ci_width").get<double>();
    for (const auto &s : j.at("samples")) {
        SampleMetrics m;
        m.index = s.at("index").get<std::size_t>();
        m.mse = s.at("mse").get<double>();
        m.rel_rmse = s.at("rel_rmse").get<double>();
        m.coverage = s.at("coverage").get<double>();
        m.out_of_range = s.at("out_of_range").get<std::size_t>();
        m.peak_reference = s.at("peak_reference").get<std::vector<double>>();
        m.peak_predicted = s.at("peak_predicted").get<std::vector<double>>();
        r.samples.push_back(std::move(m));
    }
    r.exemplar_reference = io::read_matrix(dir / "exemplar_reference.rha");
    r.exemplar_mean = io::read_matrix(dir / "exemplar_mean.rha");
    r.exemplar_lower = io::read_matrix(dir / "exemplar_lower.rha");
    r.exemplar_upper = io::read_matrix(dir / "exemplar_upper.rha");
    const Matrix hr = io::read_matrix(dir / "hysteresis_reference.rha");
    const Matrix hp = io::read_matrix(dir / "hysteresis_predicted.rha");
    r.hysteresis.story = j.at("hysteresis").at("story").get<std::size_t>();
    r.hysteresis.drift_reference = detail::row_series(hr, 0);
    r.hysteresis.force_reference = detail::row_series(hr, 1);
    r.hysteresis.drift_predicted = detail::row_series(hp, 0);
    r.hysteresis.force_predicted = detail::row_series(hp, 1);
    r.hysteresis.area_reference = j.at("hysteresis").at("area_reference").get<double>();
    r.hysteresis.area_predicted = j.at("hysteresis").at("area_predicted").get<double>();
    return r;
}

// =============================================================================
// Plot data
// =============================================================================

/// Writes the CSV files behind the standard figures:
///   time_history.csv     time, then reference/mean/lower/upper per monitored DoF (exemplar)
///   error_history.csv    time, then mean - reference per monitored DoF (exemplar)
///   peak_scatter.csv     sample, dof, reference, predicted (one row per test sample and DoF)
///   hysteresis_reference.csv / hysteresis_predicted.csv   drift, force
///   loss_history.csv     epoch, train_loss, val_loss (copied when the model dir is given)
inline void emit_plots(const EvaluationReport &r, const fs::path &dir,
                       const std::optional<fs::path> &loss_history = std::nullopt) {
    fs::create_directories(dir);
    std::vector<std::string> th{"time"}, eh{"time"};
    for (std::size_t d : r.monitored) {
        const std::string s = "dof" + std::to_string(d + 1);
        for (const char *col : {"_reference", "_mean", "_lower", "_upper"}) th.push_back(s + col);
        eh.push_back(s + "_error");
    }
    io::CsvWriter time_csv(th), err_csv(eh);
    for (Eigen::Index t = 0; t < r.exemplar_mean.cols(); ++t) {
        std::vector<double> row{static_cast<double>(t) * r.dt}, erow{static_cast<double>(t) * r.dt};
        for (Eigen::Index j = 0; j < r.exemplar_mean.rows(); ++j) {
            row.insert(row.end(), {r.exemplar_reference(j, t), r.exemplar_mean(j, t), r.exemplar_lower(j, t),
                                   r.exemplar_upper(j, t)});
            erow.push_back(r.exemplar_mean(j, t) - r.exemplar_reference(j, t));
        }
        time_csv.row(row);
        err_csv.row(erow);
    }
    time_csv.save(dir / "time_history.csv");
    err_csv.save(dir / "error_history.csv");

    io::CsvWriter scatter({"sample", "dof", "reference", "predicted"});
    for (const auto &s : r.samples)
        for (std::size_t j = 0; j < r.monitored.size(); ++j)
            scatter.row({static_cast<double>(s.index), static_cast<double>(r.monitored[j] + 1), s.peak_reference[j],
                         s.peak_predicted[j]});
    scatter.save(dir / "peak_scatter.csv");

    auto hyst = [&](const Series &d, const Series &f, const fs::path &p) {
        io::CsvWriter csv({"drift", "force"});
        for (std::size_t t = 0; t < d.size(); ++t) csv.row({d[t], f[t]});
        csv.save(p);
    };
    hyst(r.hysteresis.drift_reference, r.hysteresis.force_reference, dir / "hysteresis_reference.csv");
    hyst(r.hysteresis.drift_predicted, r.hysteresis.force_predicted, dir / "hysteresis_predicted.csv");
    if (loss_history && fs::exists(*loss_history))
        io::write_text(dir / "loss_history.csv", io::read_text(*loss_history));
}

// =============================================================================
// Stages
// =============================================================================

inline void stage_gen(const CaseConfig &c, const RunLayout &run, const Log &log = {}) {
    io::write_text(run.root / "config.json", dump(config::to_json(c)));
    generate_dataset(c, run.dataset(), log);
}

inline void stage_fit_transforms(const CaseConfig &c, const RunLayout &run, const Log &log = {}) {
    const DatasetStore store(run.dataset());
    const Transforms tr = fit_transforms(c, store, store.split().train);
    save_transforms(run.transforms(), tr);
    say(log, "fit-transforms: " + std::to_string(tr.basis.n_modes()) + " spatial modes, wavelet levels " +
                 std::to_string(tr.wavelet.levels) + " (" + std::to_string(tr.wavelet.coeff_length()) +
                 " coefficients, approximation error " + io::format_double(tr.wavelet_error) + ")");
}

inline void stage_train(const CaseConfig &c, const RunLayout &run, const Log &log = {}) {
    const DatasetStore store(run.dataset());
    const Transforms tr = load_transforms(run.transforms());
    const Model m = train_model(c, tr, store.load_many(store.split().train), store.load_many(store.split().val), log);
    save_model(run.model(), m);
}

inline EvaluationReport stage_eval(const CaseConfig &c, const RunLayout &run, const Log &log = {}) {
    const DatasetStore store(run.dataset());
    const Model m = load_model(run.model());
    const EvaluationReport r = evaluate(c, m, store, "test");
    save_report(run.report(), r);
    std::string pear;
    for (double p : r.pearson) pear += (pear.empty() ? "" : ", ") + io::format_double(p);
    say(log, "eval: peak correlation [" + pear + "], mean relative RMSE " + io::format_double(r.mean_rel_rmse) +
                 ", CI coverage " + io::format_double(r.coverage));
    return r;
}

inline void stage_plots(const RunLayout &run) {
    emit_plots(load_report(run.report()), run.plots(), run.model() / "loss_history.csv");
}

/// gen -> fit-transforms -> train -> eval -> plots. Wall-clock timings go to timing.json,
/// outside every artifact directory.
inline void run_all(const CaseConfig &c, const RunLayout &run, const Log &log = {}) {
    using clock = std::chrono::steady_clock;
    json timing;
    auto timed = [&](const char *name, auto &&fn) {
        const auto t0 = clock::now();
        fn();
        timing[name] = std::chrono::duration<double>(clock::now() - t0).count();
    };
    timed("gen_seconds", [&] { stage_gen(c, run, log); });
    timed("fit_transforms_seconds", [&] { stage_fit_transforms(c, run, log); });
    timed("train_seconds", [&] { stage_train(c, run, log); });
    timed("eval_seconds", [&] { stage_eval(c, run, log); });
    timed("plots_seconds", [&] { stage_plots(run); });
    io::write_text(run.timing(), dump(timing));
}

} // namespace rhmeta::pipeline
