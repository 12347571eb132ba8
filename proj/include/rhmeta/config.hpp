// rhmeta case configuration: flat JSON keys (comments allowed) with per-case defaults.
#pragma once

#include "rhmeta/array_io.hpp"
#include "rhmeta/dynamics.hpp"
#include "rhmeta/excitation.hpp"
#include "rhmeta/reduction.hpp"
#include "rhmeta/vlstm.hpp"

#include <nlohmann/json.hpp>

#include <set>

namespace rhmeta::config {

using json = nlohmann::json;

inline constexpr double kKip = 4448.2216152605; // N
inline constexpr double kInch = 0.0254;         // m
inline constexpr double kKsi = kKip / (kInch * kInch);

enum class CaseId { Case1Sdof, Case2Mdof, StationaryMdof };

inline const char *to_string(CaseId c) {
    switch (c) {
    case CaseId::Case1Sdof: return "case1_sdof";
    case CaseId::Case2Mdof: return "case2_mdof";
    case CaseId::StationaryMdof: return "stationary_mdof";
    }
    return "?";
}

inline CaseId parse_case(const std::string &s) {
    if (s == "case1_sdof") return CaseId::Case1Sdof;
    if (s == "case2_mdof") return CaseId::Case2Mdof;
    if (s == "stationary_mdof") return CaseId::StationaryMdof;
    throw Error(ErrorKind::InvalidArgument, "unknown case '" + s + "' (expected case1_sdof, case2_mdof or stationary_mdof)");
}

struct CaseConfig {
    CaseId case_id = CaseId::Case1Sdof;
    std::uint64_t seed = 2024;

    std::size_t n_samples = 200;
    std::size_t n_train = 150, n_val = 10, n_test = 40;

    // excitation
    excitation::GroundMotionParams gm;
    double psd_s0 = 4.0e9;       ///< N^2/Hz, stationary floor-force level
    double psd_corner_hz = 1.0;  ///< von Karman-type roll-off
    double psd_f_min_hz = 0.05;  ///< spectrum zero below this frequency

    double solver_tol = 1e-5;

    // Case 1 (SDOF Bouc-Wen)
    double omega_min = 5.373, omega_max = 6.567;
    double alpha_min = 45.0, alpha_max = 55.0;
    double zeta = 0.02, rho = 0.0, beta = 0.0, gamma = 1.0, n_exp = 2.0;

    // shear chain
    std::size_t n_stories = 3;
    double floor_weight_min_kips = 50.0, floor_weight_max_kips = 150.0;
    double floor_weight_kips = 100.0; ///< stationary case (fixed)
    double roof_weight_kips = 60.0;
    double k_e_kip_per_in = 300.0;
    double post_yield_min = 0.05, post_yield_max = 0.15;
    double post_yield = 0.1; ///< stationary case (fixed)
    double fy_ksi = 20.0;
    double a_eff_in2 = 2.0;
    double bw_exponent = 2.0;
    double modal_damping = 0.025;
    double eta_mean = 1.0, eta_cov = 0.3;

    // reduction
    bool pod_bypass = true;
    double pod_energy_threshold = 0.9999;
    std::size_t snapshots_per_record = 100;
    reduction::SnapshotScheme snapshot_scheme = reduction::SnapshotScheme::Uniform;
    int wavelet_order = 6;
    int wavelet_levels = -1; ///< -1 = automatic
    std::size_t wavelet_cap = 512;
    double wavelet_max_error = 0.02;

    // network / training
    std::size_t hidden = 200;
    double dropout = 0.2;
    bool inverted_scaling = true;
    double sigma2 = 0.0;
    double learning_rate = 0.002;
    std::size_t batch_size = 50;
    std::size_t max_epochs = 3000;
    std::size_t patience = 0; ///< 0 = max(50, 10% of max_epochs)
    std::size_t val_masks = 32; ///< mask draws averaged per validation sequence

    // evaluation
    std::size_t n_realizations = 100;
    double ci_level = 0.95;
    std::vector<std::size_t> monitored_dofs; ///< 0-based; empty = case default
    std::size_t hysteresis_story = 1;        ///< 1-based story whose loop is reported

    bool is_mdof() const { return case_id != CaseId::Case1Sdof; }
    bool seismic() const { return case_id != CaseId::StationaryMdof; }
    std::size_t n_dof() const { return is_mdof() ? n_stories : 1; }

    /// Case default: the single DoF, or mid-height and roof for a shear chain.
    std::vector<std::size_t> monitored() const {
        if (!monitored_dofs.empty()) return monitored_dofs;
        if (!is_mdof()) return {0};
        const std::size_t mid = (n_stories + 1) / 2 - 1;
        if (mid == n_stories - 1) return {mid};
        return {mid, n_stories - 1};
    }

    double yield_drift() const { return fy_ksi * kKsi * a_eff_in2 * kInch * kInch / (k_e_kip_per_in * kKip / kInch); }
};

inline CaseConfig defaults_for(CaseId id) {
    CaseConfig c;
    c.case_id = id;
    switch (id) {
    case CaseId::Case1Sdof:
        break;
    case CaseId::Case2Mdof:
        c.n_samples = 1000;
        c.n_train = 750;
        c.n_val = 50;
        c.n_test = 200;
        c.gm.arias_intensity = 0.045;
        c.gm.d_5_95 = 12.62;
        c.gm.t_mid = 4.73;
        c.gm.omega_mid = 20.57;
        c.gm.omega_prime = -0.08 * 2.0 * kPi;
        c.gm.zeta_f = 0.4801;
        c.max_epochs = 1500;
        break;
    case CaseId::StationaryMdof:
        c.n_stories = 5;
        c.n_samples = 200;
        c.n_train = 150;
        c.n_val = 10;
        c.n_test = 40;
        c.pod_bypass = false;
        break;
    }
    return c;
}

inline void validate(const CaseConfig &c) {
    require(c.n_samples >= 3, "config: n_samples must be at least 3");
    require(c.n_train >= 1 && c.n_test >= 1, "config: n_train and n_test must be at least 1");
    require(c.n_train + c.n_val + c.n_test == c.n_samples, "config: n_train + n_val + n_test must equal n_samples");
    if (c.seismic()) excitation::validate(c.gm);
    require(c.gm.dt > 0.0 && c.gm.duration > 0.0, "config: dt and duration must be positive");
    require(c.solver_tol > 0.0, "config: solver_tol must be positive");
    require(c.omega_min > 0.0 && c.omega_max > c.omega_min, "config: need 0 < omega_min < omega_max");
    require(c.alpha_max > c.alpha_min, "config: need alpha_min < alpha_max");
    require(c.n_stories >= 1, "config: n_stories must be at least 1");
    require(c.floor_weight_min_kips > 0.0 && c.floor_weight_max_kips > c.floor_weight_min_kips,
            "config: need 0 < floor_weight_min_kips < floor_weight_max_kips");
    require(c.roof_weight_kips > 0.0 && c.floor_weight_kips > 0.0, "config: weights must be positive");
    require(c.post_yield_min >= 0.0 && c.post_yield_max > c.post_yield_min && c.post_yield_max <= 1.0,
            "config: need 0 <= post_yield_min < post_yield_max <= 1");
    require(c.a_eff_in2 > 0.0 && c.fy_ksi > 0.0 && c.k_e_kip_per_in > 0.0, "config: spring constants must be positive");
    require(c.modal_damping >= 0.0 && c.modal_damping < 1.0, "config: modal_damping must lie in [0, 1)");
    require(c.eta_mean > 0.0 && c.eta_cov > 0.0, "config: eta_mean and eta_cov must be positive");
    require(c.psd_s0 >= 0.0 && c.psd_corner_hz > 0.0 && c.psd_f_min_hz >= 0.0, "config: invalid psd parameters");
    require(c.pod_energy_threshold > 0.0 && c.pod_energy_threshold <= 1.0, "config: pod_energy_threshold must lie in (0, 1]");
    require(c.snapshots_per_record >= 1, "config: snapshots_per_record must be at least 1");
    require(c.wavelet_levels >= -1 && c.wavelet_levels < 20, "config: wavelet_levels must be -1 (auto) or 0..19");
    require(c.wavelet_order >= 1 && c.wavelet_order <= 10, "config: wavelet_order must lie in 1..10");
    require(c.wavelet_cap >= 1 && c.wavelet_max_error > 0.0, "config: invalid wavelet selection settings");
    require(c.hidden >= 1 && c.batch_size >= 1 && c.max_epochs >= 1 && c.val_masks >= 1,
            "config: hidden, batch_size, max_epochs, val_masks >= 1");
    require(c.dropout >= 0.0 && c.dropout < 1.0, "config: dropout must lie in [0, 1)");
    require(c.sigma2 >= 0.0 && c.learning_rate > 0.0, "config: need sigma2 >= 0 and learning_rate > 0");
    require(c.n_realizations >= 1, "config: n_realizations must be at least 1");
    require(c.ci_level > 0.0 && c.ci_level < 1.0, "config: ci_level must lie in (0, 1)");
    for (std::size_t d : c.monitored()) require(d < c.n_dof(), "config: monitored DoF out of range");
    require(c.hysteresis_story >= 1 && c.hysteresis_story <= c.n_dof(), "config: hysteresis_story out of range");
}

namespace detail {

template <typename T> void take(const json &j, const char *key, T &dst, std::set<std::string> &seen) {
    if (!j.contains(key)) return;
    seen.insert(key);
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw Error(ErrorKind::InvalidArgument, std::string("config key '") + key + "': " + e.what());
    }
}

} // namespace detail

/// Reads a flat JSON object. Unknown keys are rejected so typos do not silently fall
/// back to defaults.
inline CaseConfig from_json(const json &j) {
    require(j.is_object(), "config: top level must be an object");
    require(j.contains("case"), "config: missing required key 'case'");
    CaseConfig c = defaults_for(parse_case(j.at("case").get<std::string>()));
    std::set<std::string> seen{"case"};
    using detail::take;
    take(j, "seed", c.seed, seen);
    take(j, "n_samples", c.n_samples, seen);
    take(j, "n_train", c.n_train, seen);
    take(j, "n_val", c.n_val, seen);
    take(j, "n_test", c.n_test, seen);
    take(j, "dt", c.gm.dt, seen);
    take(j, "duration", c.gm.duration, seen);
    take(j, "gm_arias_intensity", c.gm.arias_intensity, seen);
    take(j, "gm_d_5_95", c.gm.d_5_95, seen);
    take(j, "gm_t_mid", c.gm.t_mid, seen);
    take(j, "gm_omega_mid", c.gm.omega_mid, seen);
    take(j, "gm_omega_prime", c.gm.omega_prime, seen);
    take(j, "gm_zeta_f", c.gm.zeta_f, seen);
    take(j, "gm_hp_corner", c.gm.hp_corner, seen);
    take(j, "psd_s0", c.psd_s0, seen);
    take(j, "psd_corner_hz", c.psd_corner_hz, seen);
    take(j, "psd_f_min_hz", c.psd_f_min_hz, seen);
    take(j, "solver_tol", c.solver_tol, seen);
    take(j, "omega_min", c.omega_min, seen);
    take(j, "omega_max", c.omega_max, seen);
    take(j, "alpha_min", c.alpha_min, seen);
    take(j, "alpha_max", c.alpha_max, seen);
    take(j, "zeta", c.zeta, seen);
    take(j, "rho", c.rho, seen);
    take(j, "beta", c.beta, seen);
    take(j, "gamma", c.gamma, seen);
    take(j, "n_exp", c.n_exp, seen);
    take(j, "n_stories", c.n_stories, seen);
    take(j, "floor_weight_min_kips", c.floor_weight_min_kips, seen);
    take(j, "floor_weight_max_kips", c.floor_weight_max_kips, seen);
    take(j, "floor_weight_kips", c.floor_weight_kips, seen);
    take(j, "roof_weight_kips", c.roof_weight_kips, seen);
    take(j, "k_e_kip_per_in", c.k_e_kip_per_in, seen);
    take(j, "post_yield_min", c.post_yield_min, seen);
    take(j, "post_yield_max", c.post_yield_max, seen);
    take(j, "post_yield", c.post_yield, seen);
    take(j, "fy_ksi", c.fy_ksi, seen);
    take(j, "a_eff_in2", c.a_eff_in2, seen);
    take(j, "bw_exponent", c.bw_exponent, seen);
    take(j, "modal_damping", c.modal_damping, seen);
    take(j, "eta_mean", c.eta_mean, seen);
    take(j, "eta_cov", c.eta_cov, seen);
    take(j, "pod_bypass", c.pod_bypass, seen);
    take(j, "pod_energy_threshold", c.pod_energy_threshold, seen);
    take(j, "snapshots_per_record", c.snapshots_per_record, seen);
    if (j.contains("snapshot_scheme")) {
        seen.insert("snapshot_scheme");
        const std::string s = j.at("snapshot_scheme").get<std::string>();
        if (s == "uniform") c.snapshot_scheme = reduction::SnapshotScheme::Uniform;
        else if (s == "random") c.snapshot_scheme = reduction::SnapshotScheme::Random;
        else throw Error(ErrorKind::InvalidArgument, "config: snapshot_scheme must be 'uniform' or 'random'");
    }
    take(j, "wavelet_order", c.wavelet_order, seen);
    take(j, "wavelet_levels", c.wavelet_levels, seen);
    take(j, "wavelet_cap", c.wavelet_cap, seen);
    take(j, "wavelet_max_error", c.wavelet_max_error, seen);
    take(j, "hidden", c.hidden, seen);
    take(j, "dropout", c.dropout, seen);
    take(j, "inverted_scaling", c.inverted_scaling, seen);
    take(j, "sigma2", c.sigma2, seen);
    take(j, "learning_rate", c.learning_rate, seen);
    take(j, "batch_size", c.batch_size, seen);
    take(j, "max_epochs", c.max_epochs, seen);
    take(j, "patience", c.patience, seen);
    take(j, "val_masks", c.val_masks, seen);
    take(j, "n_realizations", c.n_realizations, seen);
    take(j, "ci_level", c.ci_level, seen);
    take(j, "monitored_dofs", c.monitored_dofs, seen);
    take(j, "hysteresis_story", c.hysteresis_story, seen);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!seen.count(it.key())) throw Error(ErrorKind::InvalidArgument, "config: unknown key '" + it.key() + "'");
    validate(c);
    return c;
}

inline CaseConfig load(const io::fs::path &path) {
    json j;
    try {
        j = json::parse(io::read_text(path), nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error &e) {
        throw Error(ErrorKind::InvalidArgument, "config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

/// Every key with its effective value (the resolved config echoed into run directories).
inline json to_json(const CaseConfig &c) {
    json j;
    j["case"] = to_string(c.case_id);
    j["seed"] = c.seed;
    j["n_samples"] = c.n_samples;
    j["n_train"] = c.n_train;
    j["n_val"] = c.n_val;
    j["n_test"] = c.n_test;
    j["dt"] = c.gm.dt;
    j["duration"] = c.gm.duration;
    j["gm_arias_intensity"] = c.gm.arias_intensity;
    j["gm_d_5_95"] = c.gm.d_5_95;
    j["gm_t_mid"] = c.gm.t_mid;
    j["gm_omega_mid"] = c.gm.omega_mid;
    j["gm_omega_prime"] = c.gm.omega_prime;
    j["gm_zeta_f"] = c.gm.zeta_f;
    j["gm_hp_corner"] = c.gm.hp_corner;
    j["psd_s0"] = c.psd_s0;
    j["psd_corner_hz"] = c.psd_corner_hz;
    j["psd_f_min_hz"] = c.psd_f_min_hz;
    j["solver_tol"] = c.solver_tol;
    j["omega_min"] = c.omega_min;
    j["omega_max"] = c.omega_max;
    j["alpha_min"] = c.alpha_min;
    j["alpha_max"] = c.alpha_max;
    j["zeta"] = c.zeta;
    j["rho"] = c.rho;
    j["beta"] = c.beta;
    j["gamma"] = c.gamma;
    j["n_exp"] = c.n_exp;
    j["n_stories"] = c.n_stories;
    j["floor_weight_min_kips"] = c.floor_weight_min_kips;
    j["floor_weight_max_kips"] = c.floor_weight_max_kips;
    j["floor_weight_kips"] = c.floor_weight_kips;
    j["roof_weight_kips"] = c.roof_weight_kips;
    j["k_e_kip_per_in"] = c.k_e_kip_per_in;
    j["post_yield_min"] = c.post_yield_min;
    j["post_yield_max"] = c.post_yield_max;
    j["post_yield"] = c.post_yield;
    j["fy_ksi"] = c.fy_ksi;
    j["a_eff_in2"] = c.a_eff_in2;
    j["bw_exponent"] = c.bw_exponent;
    j["modal_damping"] = c.modal_damping;
    j["eta_mean"] = c.eta_mean;
    j["eta_cov"] = c.eta_cov;
    j["pod_bypass"] = c.pod_bypass;
    j["pod_energy_threshold"] = c.pod_energy_threshold;
    j["snapshots_per_record"] = c.snapshots_per_record;
    j["snapshot_scheme"] = c.snapshot_scheme == reduction::SnapshotScheme::Uniform ? "uniform" : "random";
    j["wavelet_order"] = c.wavelet_order;
    j["wavelet_levels"] = c.wavelet_levels;
    j["wavelet_cap"] = c.wavelet_cap;
    j["wavelet_max_error"] = c.wavelet_max_error;
    j["hidden"] = c.hidden;
    j["dropout"] = c.dropout;
    j["inverted_scaling"] = c.inverted_scaling;
    j["sigma2"] = c.sigma2;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["val_masks"] = c.val_masks;
    j["n_realizations"] = c.n_realizations;
    j["ci_level"] = c.ci_level;
    j["monitored_dofs"] = c.monitored();
    j["hysteresis_story"] = c.hysteresis_story;
    return j;
}

inline std::string config_hash(const CaseConfig &c) {
    const std::string s = to_json(c).dump();
    return io::hex64(io::fnv1a(s.data(), s.size()));
}

// =============================================================================
// Case definitions: uncertain parameters and model assembly
// =============================================================================

/// Parameter declarations in theta order (random entries) plus fixed entries.
inline std::vector<dynamics::ParameterSpec> system_specs(const CaseConfig &c) {
    using dynamics::Family;
    switch (c.case_id) {
    case CaseId::Case1Sdof:
        return {{"omega", "rad/s", Family::Uniform, c.omega_min, c.omega_max},
                {"alpha", "-", Family::Uniform, c.alpha_min, c.alpha_max},
                {"zeta", "-", Family::Fixed, c.zeta, 0.0},
                {"rho", "-", Family::Fixed, c.rho, 0.0},
                {"beta", "-", Family::Fixed, c.beta, 0.0},
                {"gamma", "-", Family::Fixed, c.gamma, 0.0},
                {"n", "-", Family::Fixed, c.n_exp, 0.0}};
    case CaseId::Case2Mdof:
        return {{"floor_weight", "kip", Family::Uniform, c.floor_weight_min_kips, c.floor_weight_max_kips},
                {"post_yield_ratio", "-", Family::Uniform, c.post_yield_min, c.post_yield_max},
                {"roof_weight", "kip", Family::Fixed, c.roof_weight_kips, 0.0},
                {"eta", "-", Family::Fixed, 1.0, 0.0}};
    case CaseId::StationaryMdof:
        return {{"eta", "-", Family::Lognormal, c.eta_mean, c.eta_cov},
                {"floor_weight", "kip", Family::Fixed, c.floor_weight_kips, 0.0},
                {"post_yield_ratio", "-", Family::Fixed, c.post_yield, 0.0},
                {"roof_weight", "kip", Family::Fixed, c.roof_weight_kips, 0.0}};
    }
    return {};
}

inline dynamics::BoucWenParams sdof_params(const dynamics::SystemRealization &s) {
    dynamics::BoucWenParams p;
    p.omega = s.get("omega");
    p.alpha = s.get("alpha");
    p.zeta = s.get("zeta");
    p.rho = s.get("rho");
    p.beta = s.get("beta");
    p.gamma = s.get("gamma");
    p.n_exp = s.get("n");
    return p;
}

/// Shear chain of `n_stories` equal floors plus a roof, identical interstory springs,
/// Rayleigh damping calibrated on the elastic model then scaled by eta.
inline dynamics::ShearBuildingParams building_params(const CaseConfig &c, const dynamics::SystemRealization &s) {
    dynamics::ShearBuildingParams p;
    const double w = s.get("floor_weight"), w_r = s.get("roof_weight");
    for (std::size_t i = 0; i < c.n_stories; ++i) {
        const double weight_kips = (i + 1 == c.n_stories) ? w_r : w;
        p.masses.push_back(weight_kips * kKip / kGravity);
        p.springs.push_back(dynamics::make_story_spring(c.k_e_kip_per_in * kKip / kInch, s.get("post_yield_ratio"),
                                                        c.yield_drift(), c.bw_exponent));
    }
    const auto [a0, a1] = dynamics::calibrate_rayleigh(p, c.modal_damping);
    p.a0 = a0;
    p.a1 = a1;
    p.eta = s.get("eta");
    return p;
}

/// One-sided floor-force spectrum S0 / (1 + (f/fc)^2)^(5/6) above psd_f_min_hz, N^2/Hz.
inline excitation::PsdFunction floor_force_psd(const CaseConfig &c) {
    const double s0 = c.psd_s0, fc = c.psd_corner_hz, fmin = c.psd_f_min_hz;
    return [s0, fc, fmin](double f) {
        if (f < fmin) return 0.0;
        return s0 / std::pow(1.0 + (f / fc) * (f / fc), 5.0 / 6.0);
    };
}

} // namespace rhmeta::config
