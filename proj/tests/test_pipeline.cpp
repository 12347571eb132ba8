#include "rhmeta/pipeline.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace rhmeta;
using namespace rhmeta::pipeline;

namespace {

const fs::path kSource = RHMETA_SOURCE_DIR;

CaseConfig tiny() { return config::load(kSource / "configs" / "tiny.json"); }

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("rhmeta_pipeline_" + name);
    fs::remove_all(p);
    return p;
}

// relative path -> file bytes, for every regular file under `root`
std::map<std::string, std::string> tree_bytes(const fs::path &root) {
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
    return out;
}

std::vector<std::vector<double>> read_csv(const fs::path &p, std::vector<std::string> *header = nullptr) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    if (header) {
        header->clear();
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header->push_back(cell);
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        rows.push_back(row);
    }
    return rows;
}

int run_cli(const std::string &args) {
    const std::string cmd = std::string(RHMETA_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// One tiny run shared by the tests below; built on first use.
const RunLayout &tiny_run() {
    static const RunLayout run = [] {
        RunLayout r{scratch("tiny_shared")};
        run_all(tiny(), r);
        return r;
    }();
    return run;
}

// Stand-in model whose network is exact up to the transforms: outputs are overridden
// by building predictions directly from references.
Prediction exact_prediction(const Matrix &reference, std::size_t n_real, double offset = 0.0) {
    Prediction p;
    for (std::size_t r = 0; r < n_real; ++r) p.ensemble.push_back(reference.array() + offset);
    p.mean = vlstm::ensemble_mean(p.ensemble);
    p.lower = p.upper = p.mean;
    return p;
}

} // namespace

// ---- splits ----

TEST(Split, FullScaleCountsDisjointAndExhaustive) {
    const Split s = split_dataset(200, 150, 10, 40, 2024);
    EXPECT_EQ(s.train.size(), 150u);
    EXPECT_EQ(s.val.size(), 10u);
    EXPECT_EQ(s.test.size(), 40u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), 200u);
    EXPECT_EQ(*all.rbegin(), 199u);
}

TEST(Split, SmallestCase) {
    const Split s = split_dataset(3, 1, 1, 1, 5);
    std::vector<std::size_t> all{s.train[0], s.val[0], s.test[0]};
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Split, SeedControlsPermutation) {
    const Split a = split_dataset(200, 150, 10, 40, 1), b = split_dataset(200, 150, 10, 40, 1),
                c = split_dataset(200, 150, 10, 40, 2);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(a.train, c.train);
    const Split r = split_from_json(split_to_json(a));
    EXPECT_EQ(r.val, a.val);
}

TEST(Split, BadCountsRejected) {
    EXPECT_THROW(split_dataset(10, 5, 3, 3, 0), Error);
    EXPECT_THROW(split_dataset(10, 5, 3, 1, 0), Error);
}

// ---- config ----

TEST(Config, DefaultsMatchCaseSettings) {
    const CaseConfig c1 = config::defaults_for(config::CaseId::Case1Sdof);
    EXPECT_EQ(c1.hidden, 200u);
    EXPECT_EQ(c1.dropout, 0.2);
    EXPECT_EQ(c1.learning_rate, 0.002);
    EXPECT_EQ(c1.batch_size, 50u);
    EXPECT_EQ(c1.n_samples, 200u);
    EXPECT_EQ(c1.n_train, 150u);
    EXPECT_EQ(c1.n_val, 10u);
    EXPECT_EQ(c1.n_test, 40u);
    EXPECT_EQ(vlstm::iterations_per_epoch(c1.n_train, c1.batch_size), 3u);
    EXPECT_EQ(c1.n_realizations, 100u);
    EXPECT_EQ(c1.ci_level, 0.95);
    EXPECT_TRUE(c1.pod_bypass);
    EXPECT_EQ(c1.monitored(), std::vector<std::size_t>{0});
    const CaseConfig c2 = config::defaults_for(config::CaseId::Case2Mdof);
    EXPECT_EQ(c2.n_samples, 1000u);
    EXPECT_EQ(c2.n_train, 750u);
    EXPECT_EQ(c2.n_val, 50u);
    EXPECT_EQ(c2.n_test, 200u);
    const CaseConfig c3 = config::defaults_for(config::CaseId::StationaryMdof);
    EXPECT_EQ(c3.pod_energy_threshold, 0.9999);
    EXPECT_FALSE(c3.pod_bypass);
}

TEST(Config, ShippedPresetsLoad) {
    for (const auto &e : fs::directory_iterator(kSource / "configs")) {
        SCOPED_TRACE(e.path().string());
        EXPECT_NO_THROW(config::load(e.path()));
    }
    const CaseConfig desk = config::load(kSource / "configs" / "case1_desk.json");
    EXPECT_EQ(desk.n_samples, 160u);
    EXPECT_EQ(desk.n_train, 120u);
    EXPECT_EQ(desk.n_val, 10u);
    EXPECT_EQ(desk.n_test, 30u);
    EXPECT_EQ(desk.hidden, 64u);
    EXPECT_EQ(desk.dropout, 0.2);
    EXPECT_EQ(desk.batch_size, 40u);
    EXPECT_LE(desk.max_epochs, 3000u);
    const CaseConfig mdof = config::load(kSource / "configs" / "case2_desk.json");
    EXPECT_EQ(mdof.n_stories, 3u);
    EXPECT_EQ(mdof.n_samples, 300u);
    EXPECT_EQ(mdof.monitored().back(), 2u);
}

TEST(Config, RejectsUnknownKeysAndBadCounts) {
    EXPECT_THROW(config::from_json(json{{"case", "case1_sdof"}, {"hiden", 5}}), Error);
    EXPECT_THROW(config::from_json(json{{"case", "case1_sdof"}, {"n_train", 151}}), Error);
    EXPECT_THROW(config::from_json(json{{"case", "case4"}}), Error);
    EXPECT_THROW(config::from_json(json{{"case", "case1_sdof"}, {"dropout", 1.0}}), Error);
    EXPECT_THROW(config::from_json(json{{"case", "case1_sdof"}, {"hidden", "many"}}), Error);
    const CaseConfig c = config::from_json(config::to_json(tiny()));
    EXPECT_EQ(config::config_hash(c), config::config_hash(tiny()));
}

// ---- dataset ----

TEST(Dataset, SameSeedByteIdentical) {
    const CaseConfig c = tiny();
    const fs::path a = scratch("gen_a"), b = scratch("gen_b");
    generate_dataset(c, a);
    generate_dataset(c, b);
    const auto ta = tree_bytes(a), tb = tree_bytes(b);
    EXPECT_EQ(ta.size(), 1u + 12u * 7u);
    EXPECT_TRUE(ta == tb);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Dataset, ResumesByIndex) {
    const CaseConfig c = tiny();
    const fs::path a = scratch("resume");
    generate_dataset(c, a);
    const auto before = tree_bytes(a);
    fs::remove_all(sample_dir(a, 3));
    fs::remove(sample_dir(a, 7) / "displacement.rha");
    fs::remove(sample_dir(a, 7) / "sample.json"); // an interrupted sample has no sample.json
    const GenerationSummary s = generate_dataset(c, a);
    EXPECT_EQ(s.generated, 2u);
    EXPECT_EQ(s.reused, 10u);
    EXPECT_TRUE(tree_bytes(a) == before);
    // a different config invalidates every stored sample
    CaseConfig other = c;
    other.solver_tol = 1e-6;
    EXPECT_EQ(generate_dataset(other, a).generated, 12u);
    fs::remove_all(a);
}

TEST(Dataset, FailedSamplesNeverEnterSplits) {
    const CaseConfig c = tiny();
    const fs::path a = scratch("failed");
    generate_dataset(c, a);
    detail::write_failure(sample_dir(a, 4), c, 4, Error(ErrorKind::StiffnessFailure, "step underflow at t = 1"));
    const GenerationSummary s = generate_dataset(c, a);
    EXPECT_EQ(s.failed, 1u);
    const DatasetStore store(a);
    EXPECT_EQ(store.meta().at("failed"), json::array({4}));
    const Split &sp = store.split();
    for (const auto *part : {&sp.train, &sp.val, &sp.test})
        EXPECT_EQ(std::count(part->begin(), part->end(), 4u), 0);
    EXPECT_EQ(sp.train.size(), c.n_train);
    EXPECT_EQ(sp.val.size(), c.n_val);
    EXPECT_EQ(sp.test.size(), c.n_test - 1);
    EXPECT_THROW(store.load(4), Error);
    fs::remove_all(a);
}

TEST(Dataset, StoredSampleMatchesFreshSimulation) {
    const CaseConfig c = tiny();
    const DatasetStore store(tiny_run().dataset());
    const Sample stored = store.load(5);
    const Sample fresh = simulate_sample(c, 5);
    EXPECT_EQ(stored.response.displacement, fresh.response.displacement);
    EXPECT_EQ(stored.excitation.samples, fresh.excitation.samples);
    EXPECT_EQ(stored.system.theta, fresh.system.theta);
    EXPECT_EQ(store.meta().at("config_hash"), config::config_hash(c));
}

// ---- transforms ----

TEST(Transforms, StatisticsUseTrainingSamplesOnly) {
    const CaseConfig c = tiny();
    const DatasetStore store(tiny_run().dataset());
    store.clear_access_log();
    const Transforms tr = fit_transforms(c, store, store.split().train);
    auto log = store.access_log();
    std::sort(log.begin(), log.end());
    auto train = store.split().train;
    std::sort(train.begin(), train.end());
    EXPECT_EQ(log, train);

    // recomputation oracle over the train indices
    double umin = HUGE_VAL, umax = -HUGE_VAL, fmin = HUGE_VAL, fmax = -HUGE_VAL;
    for (std::size_t i : train) {
        const Sample s = simulate_sample(c, i);
        umin = std::min(umin, s.response.displacement.minCoeff());
        umax = std::max(umax, s.response.displacement.maxCoeff());
        fmin = std::min(fmin, s.excitation.samples.minCoeff());
        fmax = std::max(fmax, s.excitation.samples.maxCoeff());
    }
    EXPECT_EQ(tr.output_norm.min[0], umin);
    EXPECT_EQ(tr.output_norm.max[0], umax);
    EXPECT_EQ(tr.input_norm.min[0], fmin);
    EXPECT_EQ(tr.input_norm.max[0], fmax);

    // identical to what the pipeline persisted
    const Transforms saved = load_transforms(tiny_run().transforms());
    EXPECT_EQ(saved.output_norm.min, tr.output_norm.min);
    EXPECT_EQ(saved.theta_norm.max, tr.theta_norm.max);
}

TEST(Transforms, BypassGivesIdentityBasis) {
    const Transforms tr = load_transforms(tiny_run().transforms());
    EXPECT_TRUE(tr.pod_bypass);
    EXPECT_EQ(tr.basis.modes, Matrix::Identity(1, 1));
    EXPECT_EQ(tr.wavelet.levels, 4);
    EXPECT_EQ(tr.input_dim(), 1 + 2); // excitation + (omega, alpha)
    EXPECT_EQ(tr.output_dim(), 1);
}

TEST(Transforms, ProjectedPathOnShearChain) {
    CaseConfig c = config::defaults_for(config::CaseId::StationaryMdof);
    c.n_samples = 6;
    c.n_train = 4;
    c.n_val = 1;
    c.n_test = 1;
    c.gm.duration = 20.0;
    std::vector<Sample> cal;
    for (std::size_t i = 0; i < 4; ++i) cal.push_back(simulate_sample(c, i));
    const Transforms tr = fit_transforms_on(c, cal);
    EXPECT_FALSE(tr.pod_bypass);
    EXPECT_TRUE(tr.project_inputs);
    EXPECT_GE(tr.basis.retained_energy(), 0.9999);
    EXPECT_LE(tr.basis.n_modes(), 5u);
    const Matrix gram = tr.basis.modes.transpose() * tr.basis.modes;
    EXPECT_LT((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(tr.wavelet.coeff_length(), c.wavelet_cap);
    EXPECT_LT(tr.wavelet_error, c.wavelet_max_error);
    EXPECT_EQ(tr.input_dim(), static_cast<Eigen::Index>(tr.basis.n_modes()) + 1); // + eta
    // inverse chain on the calibration set: error within POD + wavelet tolerance
    for (const Sample &s : cal) {
        const Matrix &u = s.response.displacement;
        const Matrix back = invert_output(tr, output_features(tr, u));
        EXPECT_LE((back - u).norm() / u.norm(), std::sqrt(1 - 0.9999) + c.wavelet_max_error + 0.01);
    }
}

TEST(Transforms, InverseChainReproducesReferences) {
    const Transforms tr = load_transforms(tiny_run().transforms());
    const DatasetStore store(tiny_run().dataset());
    double err = 0, ref = 0;
    for (std::size_t i : store.split().train) {
        const Matrix u = store.load(i).response.displacement;
        const Matrix back = invert_output(tr, output_features(tr, u));
        err += (back - u).squaredNorm();
        ref += u.squaredNorm();
    }
    // the pooled error over the calibration set is the recorded approximation error
    EXPECT_NEAR(std::sqrt(err / ref), tr.wavelet_error, 1e-12);
    // with no wavelet levels the chain is exact
    Transforms exact = tr;
    exact.wavelet = reduction::make_wavelet_spec(tr.steps, 0, tr.wavelet.order);
    const Matrix u = store.load(store.split().test[0]).response.displacement;
    EXPECT_LT((invert_output(exact, output_features(exact, u)) - u).cwiseAbs().maxCoeff(),
              1e-12 * u.cwiseAbs().maxCoeff());
}

// ---- training ----

TEST(Training, LossCsvSchemaAndDeterminism) {
    const RunLayout &run = tiny_run();
    std::vector<std::string> header;
    const auto rows = read_csv(run.model() / "loss_history.csv", &header);
    EXPECT_EQ(header, (std::vector<std::string>{"epoch", "train_loss", "val_loss"}));
    const json mj = read_json(run.model() / "model.json");
    EXPECT_EQ(rows.size(), mj.at("training").at("epochs_run").get<std::size_t>());
    for (std::size_t e = 0; e < rows.size(); ++e) EXPECT_EQ(rows[e][0], static_cast<double>(e));

    const CaseConfig c = tiny();
    const DatasetStore store(run.dataset());
    const Transforms tr = load_transforms(run.transforms());
    const auto tx = store.load_many(store.split().train), vx = store.load_many(store.split().val);
    const Model a = train_model(c, tr, tx, vx), b = train_model(c, tr, tx, vx);
    EXPECT_EQ(loss_history_csv(a.history), loss_history_csv(b.history));
    EXPECT_EQ(loss_history_csv(a.history), io::read_text(run.model() / "loss_history.csv"));
}

TEST(Training, GradientsSeeTrainingSequencesOnly) {
    const RunLayout &run = tiny_run();
    const CaseConfig c = tiny();
    const DatasetStore store(run.dataset());
    const Transforms tr = load_transforms(run.transforms());
    const auto tx = store.load_many(store.split().train), vx = store.load_many(store.split().val);
    std::set<std::size_t> grad_seqs;
    train_model(c, tr, tx, vx, {}, [&](const vlstm::MaskEvent &e) {
        if (e.phase == vlstm::MaskPhase::Backward) grad_seqs.insert(e.sequence);
    });
    EXPECT_EQ(grad_seqs.size(), tx.size());
    EXPECT_LT(*grad_seqs.rbegin(), tx.size());
}

TEST(Training, ModelRoundTrip) {
    const Model m = load_model(tiny_run().model());
    const fs::path d = scratch("model_copy");
    save_model(d, m);
    EXPECT_TRUE(tree_bytes(d) == tree_bytes(tiny_run().model()));
    fs::remove_all(d);
}

// ---- predict / evaluate ----

TEST(Predict, DropoutZeroCollapses) {
    Model m = load_model(tiny_run().model());
    m.net.dropout.rate = 0.0;
    const Sample s = DatasetStore(tiny_run().dataset()).load(0);
    const Prediction p = predict(m, s.excitation, s.system.theta, 20, 0.95, 1);
    for (const Matrix &e : p.ensemble) EXPECT_EQ(e, p.ensemble.front());
    EXPECT_EQ(p.lower, p.upper);
    EXPECT_EQ(vlstm::ensemble_std(p.ensemble).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Predict, SingleCodePathWithEvaluate) {
    const CaseConfig c = tiny();
    const Model m = load_model(tiny_run().model());
    const DatasetStore store(tiny_run().dataset());
    const auto idx = store.split().train;
    const auto samples = store.load_many(idx);
    const EvaluationReport r = evaluate_samples(c, m, samples, "train");
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const Sample &s = samples[k];
        const Prediction p = predict(m, s.excitation, s.system.theta, c.n_realizations, c.ci_level,
                                     prediction_seed(c, s.index));
        const SampleMetrics sm = score(s.index, p, s.response.displacement, c.monitored());
        EXPECT_EQ(sm.mse, r.samples[k].mse);
        EXPECT_EQ(sm.peak_predicted, r.samples[k].peak_predicted);
    }
    excitation::ExcitationRecord short_record = samples[0].excitation;
    short_record.samples = short_record.samples.leftCols(10).eval();
    EXPECT_THROW(predict(m, short_record, samples[0].system.theta, 2, 0.95, 0), Error);
}

TEST(Evaluate, PerfectAndZeroStubs) {
    Rng rng(3);
    std::vector<double> ref_peaks, pred_peaks;
    for (int k = 0; k < 10; ++k) {
        Matrix u(2, 50);
        for (Eigen::Index t = 0; t < 50; ++t) u.col(t) << (k + 1) * std::sin(0.1 * t), rng.normal();
        const SampleMetrics perfect = score(k, exact_prediction(u, 5), u, {0, 1});
        EXPECT_EQ(perfect.rel_rmse, 0.0);
        EXPECT_EQ(perfect.mse, 0.0);
        EXPECT_EQ(perfect.coverage, 1.0);
        ref_peaks.push_back(perfect.peak_reference[0]);
        pred_peaks.push_back(perfect.peak_predicted[0]);
        const SampleMetrics zero = score(k, exact_prediction(Matrix::Zero(2, 50), 5), u, {0, 1});
        EXPECT_DOUBLE_EQ(zero.rel_rmse, 1.0);
    }
    EXPECT_NEAR(pearson(ref_peaks, pred_peaks), 1.0, 1e-15);
}

TEST(Evaluate, LowerMedianExemplar) {
    EXPECT_EQ(lower_median_position({5, 1, 4, 2, 3, 6}), 4u); // value 3
    EXPECT_EQ(lower_median_position({5, 1, 4, 2, 3}), 4u);    // value 3
    EXPECT_EQ(lower_median_position({7}), 0u);
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(1 + rng.below(30));
        for (double &x : v) x = rng.uniform();
        auto sorted = v;
        std::sort(sorted.begin(), sorted.end());
        EXPECT_EQ(v[lower_median_position(v)], sorted[(sorted.size() - 1) / 2]);
    }
}

TEST(Evaluate, ReportRoundTripAndCounts) {
    const RunLayout &run = tiny_run();
    const EvaluationReport r = load_report(run.report());
    const CaseConfig c = tiny();
    EXPECT_EQ(r.samples.size(), DatasetStore(run.dataset()).split().test.size());
    EXPECT_EQ(r.monitored, c.monitored());
    EXPECT_GE(r.coverage, 0.0);
    EXPECT_LE(r.coverage, 1.0);
    const json j = read_json(run.report() / "report.json");
    EXPECT_TRUE(j.contains("out_of_range"));
    std::vector<double> mses;
    for (const auto &s : r.samples) mses.push_back(s.mse);
    EXPECT_EQ(r.exemplar, lower_median_position(mses));
}

// ---- plots ----

TEST(Plots, SchemasAndOrdering) {
    const RunLayout &run = tiny_run();
    const EvaluationReport r = load_report(run.report());
    std::vector<std::string> header;
    const auto th = read_csv(run.plots() / "time_history.csv", &header);
    EXPECT_EQ(header, (std::vector<std::string>{"time", "dof1_reference", "dof1_mean", "dof1_lower", "dof1_upper"}));
    EXPECT_EQ(th.size(), static_cast<std::size_t>(r.exemplar_mean.cols()));
    for (const auto &row : th) EXPECT_LE(row[3], row[4]);
    const auto sc = read_csv(run.plots() / "peak_scatter.csv", &header);
    EXPECT_EQ(sc.size(), r.samples.size() * r.monitored.size());
    EXPECT_TRUE(fs::exists(run.plots() / "loss_history.csv"));
    const std::string text = io::read_text(run.plots() / "time_history.csv");
    EXPECT_EQ(text.find('\r'), std::string::npos);
}

TEST(Plots, HysteresisPassThrough) {
    const RunLayout &run = tiny_run();
    const EvaluationReport r = load_report(run.report());
    const Sample ex = DatasetStore(run.dataset()).load(r.samples[r.exemplar].index);
    const auto curve = dynamics::hysteresis_curve(ex.response, 0);
    const auto rows = read_csv(run.plots() / "hysteresis_reference.csv");
    ASSERT_EQ(rows.size(), curve.drift.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        ASSERT_EQ(rows[t][0], curve.drift[t]);
        ASSERT_EQ(rows[t][1], curve.force[t]);
    }
}

// ---- CLI ----

TEST(Cli, ExitCodes) {
    const fs::path out = scratch("cli");
    fs::create_directories(out);
    io::write_text(out / "bad.json", "{\"case\": \"case1_sdof\", \"n_train\": 999}");
    io::write_text(out / "broken.json", "{ not json");
    EXPECT_EQ(run_cli("gen --config " + (out / "bad.json").string() + " --out " + (out / "r").string()), 2);
    EXPECT_EQ(run_cli("gen --config " + (out / "broken.json").string() + " --out " + (out / "r").string()), 2);
    EXPECT_EQ(run_cli("gen --out " + (out / "r").string()), 2);
    EXPECT_EQ(run_cli("train --config " + (kSource / "configs" / "tiny.json").string() + " --out " +
                      (out / "empty").string()),
              2);
    EXPECT_EQ(run_cli("all --config " + (kSource / "configs" / "tiny.json").string() + " --out " +
                      (out / "ok").string()),
              0);
    EXPECT_TRUE(fs::exists(out / "ok" / "report" / "report.json"));
    EXPECT_EQ(run_cli("predict --config " + (kSource / "configs" / "tiny.json").string() + " --out " +
                      (out / "ok").string() + " --sample 0 --n-real 5"),
              0);
    // the --seed override changes the dataset
    EXPECT_EQ(run_cli("gen --config " + (kSource / "configs" / "tiny.json").string() + " --out " +
                      (out / "seeded").string() + " --seed 99"),
              0);
    EXPECT_NE(io::read_text(out / "seeded" / "dataset" / "samples" / "000000" / "excitation.rha"),
              io::read_text(out / "ok" / "dataset" / "samples" / "000000" / "excitation.rha"));
    fs::remove_all(out);
}
