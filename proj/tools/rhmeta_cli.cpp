// rhmeta command-line driver.
//
//   rhmeta <gen|fit-transforms|train|predict|eval|plots|all> --config PATH --out DIR [--seed N]
//
// Exit codes: 0 success, 2 validation or input error, 3 numerical failure.
#include "rhmeta/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace rhmeta;
namespace pl = rhmeta::pipeline;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
};

struct PredictOptions {
    std::optional<std::size_t> sample;
    std::string excitation_path;
    std::vector<double> theta;
    std::optional<std::size_t> n_real;
};

void add_common(CLI::App *sub, CommonOptions &o, bool config_required = true) {
    auto *cfg = sub->add_option("--config", o.config_path, "case configuration (JSON, comments allowed)");
    if (config_required) cfg->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "run directory")->required();
    sub->add_option("--seed", o.seed, "master seed (overrides the config)");
}

config::CaseConfig resolve_config(const CommonOptions &o) {
    config::CaseConfig c = config::load(o.config_path);
    if (o.seed) c.seed = *o.seed;
    config::validate(c);
    return c;
}

void log_line(const std::string &msg) { std::cerr << msg << '\n'; }

void run_predict(const config::CaseConfig &c, const pl::RunLayout &run, const PredictOptions &po) {
    const pl::Model m = pl::load_model(run.model());
    const std::size_t n_real = po.n_real.value_or(c.n_realizations);
    excitation::ExcitationRecord exc;
    Vector theta;
    std::string name;
    std::uint64_t seed = 0;
    if (po.sample) {
        const pl::DatasetStore store(run.dataset());
        const pl::Sample s = store.load(*po.sample);
        exc = s.excitation;
        theta = s.system.theta;
        seed = pl::prediction_seed(c, s.index);
        char buf[32];
        std::snprintf(buf, sizeof buf, "sample_%06zu", s.index);
        name = buf;
    } else {
        require(!po.excitation_path.empty(), "predict: give --sample or --excitation with --theta");
        exc.samples = io::read_matrix(po.excitation_path);
        exc.dt = m.transforms.dt;
        theta = Eigen::Map<const Vector>(po.theta.data(), static_cast<Eigen::Index>(po.theta.size()));
        seed = derive_seed(c.seed, Stream::Predict, io::fnv1a(exc.samples.data(), sizeof(double) * exc.samples.size()));
        name = "external";
    }
    const pl::Prediction p = pl::predict(m, exc, theta, n_real, c.ci_level, seed);
    const auto dir = run.predictions() / name;
    io::write_matrix(dir / "mean.rha", p.mean);
    io::write_matrix(dir / "lower.rha", p.lower);
    io::write_matrix(dir / "upper.rha", p.upper);
    io::write_matrix(dir / "std.rha", vlstm::ensemble_std(p.ensemble));
    std::vector<std::string> header{"time"};
    for (Eigen::Index d = 0; d < p.mean.rows(); ++d) {
        const std::string s = "dof" + std::to_string(d + 1);
        for (const char *col : {"_mean", "_lower", "_upper"}) header.push_back(s + col);
    }
    io::CsvWriter csv(header);
    for (Eigen::Index t = 0; t < p.mean.cols(); ++t) {
        std::vector<double> row{static_cast<double>(t) * m.transforms.dt};
        for (Eigen::Index d = 0; d < p.mean.rows(); ++d) row.insert(row.end(), {p.mean(d, t), p.lower(d, t), p.upper(d, t)});
        csv.row(row);
    }
    csv.save(dir / "prediction.csv");
    log_line("predict: " + std::to_string(n_real) + " realizations written to " + dir.string());
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"rhmeta: probabilistic LSTM metamodels for hysteretic structural response"};
    app.require_subcommand(1);

    CommonOptions opt;
    PredictOptions po;
    std::string split = "test";
    const std::vector<std::string> names{"gen", "fit-transforms", "train", "predict", "eval", "plots", "all"};
    const std::map<std::string, std::string> help{
        {"gen", "simulate the dataset (resumable)"},
        {"fit-transforms", "fit POD basis, normalization and wavelet levels on the training split"},
        {"train", "train the variational LSTM"},
        {"predict", "MC-dropout ensemble for one input"},
        {"eval", "evaluate the model on a split"},
        {"plots", "emit plot-data CSV files from the report"},
        {"all", "gen, fit-transforms, train, eval and plots"}};
    std::map<std::string, CLI::App *> subs;
    for (const auto &n : names) {
        subs[n] = app.add_subcommand(n, help.at(n));
        add_common(subs[n], opt, n != "plots");
    }
    subs["predict"]->add_option("--sample", po.sample, "dataset sample index");
    subs["predict"]->add_option("--excitation", po.excitation_path, "excitation array file (channels x steps)");
    subs["predict"]->add_option("--theta", po.theta, "system parameters in model order")->delimiter(',');
    subs["predict"]->add_option("--n-real", po.n_real, "number of MC-dropout realizations");
    subs["eval"]->add_option("--split", split, "split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation;
    }

    const pl::RunLayout run{opt.out};
    try {
        if (subs["plots"]->parsed()) {
            pl::stage_plots(run);
            return 0;
        }
        const config::CaseConfig c = resolve_config(opt);
        std::filesystem::create_directories(run.root);
        if (subs["gen"]->parsed()) pl::stage_gen(c, run, log_line);
        else if (subs["fit-transforms"]->parsed()) pl::stage_fit_transforms(c, run, log_line);
        else if (subs["train"]->parsed()) pl::stage_train(c, run, log_line);
        else if (subs["predict"]->parsed()) run_predict(c, run, po);
        else if (subs["eval"]->parsed()) {
            const pl::DatasetStore store(run.dataset());
            const pl::EvaluationReport r = pl::evaluate(c, pl::load_model(run.model()), store, split);
            pl::save_report(split == "test" ? run.report() : run.root / ("report_" + split), r);
            log_line("eval: mean relative RMSE " + io::format_double(r.mean_rel_rmse) + ", CI coverage " +
                     io::format_double(r.coverage));
        } else if (subs["all"]->parsed()) pl::run_all(c, run, log_line);
        return 0;
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        switch (e.kind()) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::Io: return kExitValidation;
        default: return kExitNumerical;
        }
    } catch (const nlohmann::json::exception &e) {
        std::cerr << "error: malformed metadata or config: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::filesystem::filesystem_error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
}
