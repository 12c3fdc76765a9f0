#pragma once

// End-to-end runs: data -> learned shape -> reduction plan -> per-p metrics.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "fuse/data.hpp"
#include "fuse/errors.hpp"
#include "fuse/fuse.hpp"
#include "fuse/io.hpp"
#include "fuse/kernels.hpp"
#include "fuse/random.hpp"
#include "fuse/regressor.hpp"
#include "fuse/twolayer.hpp"

namespace fuse {

enum class DataKind { F1, F2, Csv };

inline std::string to_string(DataKind k) {
    switch (k) {
        case DataKind::F1: return "f1";
        case DataKind::F2: return "f2";
        case DataKind::Csv: return "csv";
    }
    return "?";
}

inline DataKind parse_data_kind(const std::string& s) {
    if (s == "f1") return DataKind::F1;
    if (s == "f2") return DataKind::F2;
    if (s == "csv") return DataKind::Csv;
    throw ArgumentError("unknown data source '" + s + "' (expected f1, f2 or csv)");
}

struct DataSource {
    DataKind kind = DataKind::F1;
    Index n = 5000;
    Index d = 35;  // f1 only; f2 is always 15-dimensional
    int alpha = 0;
    std::string csv_path;
    std::string target;
    std::string time_column;  // optional; aggregated over, then dropped
    double window = 0.0;      // seconds; 0 keeps rows as they are
    std::optional<bool> scale;  // default: on for CSV, off for synthetic

    [[nodiscard]] bool scaling_enabled() const { return scale.value_or(kind == DataKind::Csv); }
};

struct RunConfig {
    RbfFamily family = RbfFamily::M2;
    OptimizerConfig optimizer;
    ReductionRule rule = kDefaultRule;
    double fit_ridge_lambda = 1e-8;
    DataSource data;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "fuse_out";
    Index p_max = 10;
};

/// Sub-seeds so data, split and optimizer streams never coincide.
inline std::uint64_t data_seed(std::uint64_t seed) { return seed; }
inline std::uint64_t split_seed(std::uint64_t seed) { return seed + 0x51ed2701u; }
inline std::uint64_t optimizer_seed(std::uint64_t seed) { return seed + 0xa5a5a5a5u; }

inline nlohmann::json config_to_json(const RunConfig& c) {
    const auto& o = c.optimizer;
    nlohmann::json j;
    j["family"] = to_string(c.family);
    j["mode"] = to_string(o.mode);
    j["max_iters"] = o.max_iters;
    j["learning_rate"] = o.learning_rate;
    j["adam_beta1"] = o.adam_beta1;
    j["adam_beta2"] = o.adam_beta2;
    j["adam_eps"] = o.adam_eps;
    j["batch_size"] = o.batch_size ? nlohmann::json(*o.batch_size) : nlohmann::json(nullptr);
    j["monitor_size"] = o.monitor_size ? nlohmann::json(*o.monitor_size) : nlohmann::json(nullptr);
    j["ridge_lambda"] = o.ridge_lambda;
    j["init_scale"] = o.init_scale ? nlohmann::json(*o.init_scale) : nlohmann::json(nullptr);
    j["tol_rel_loss"] = o.tol_rel_loss;
    j["patience"] = o.patience;
    j["rule"] = to_string(c.rule);
    j["fit_ridge_lambda"] = c.fit_ridge_lambda;
    j["data"] = to_string(c.data.kind);
    j["n"] = c.data.n;
    j["d"] = c.data.d;
    j["alpha"] = c.data.alpha;
    j["csv"] = c.data.csv_path;
    j["target"] = c.data.target;
    j["time_column"] = c.data.time_column;
    j["window"] = c.data.window;
    j["scale"] = c.data.scaling_enabled();
    j["seed"] = c.seed;
    j["p_max"] = c.p_max;
    j["rng"] = kRngAlgorithm;
    return j;
}

struct PreparedData {
    SplitDataset split;  // scaled when scaling is enabled
    std::optional<FeatureScaling> scaling;
    std::size_t dropped_rows = 0;
};

inline Dataset load_source(const DataSource& src, std::uint64_t seed, std::size_t* dropped = nullptr) {
    switch (src.kind) {
        case DataKind::F1: return gen_f1(src.n, src.d, data_seed(seed));
        case DataKind::F2: return gen_f2(src.n, src.alpha, 15, data_seed(seed));
        case DataKind::Csv: {
            if (src.csv_path.empty()) throw ArgumentError("csv data source needs a path");
            if (src.target.empty()) throw ArgumentError("csv data source needs a target column");
            auto load = load_csv(src.csv_path, src.target);
            if (dropped) *dropped = load.dropped_rows;
            Dataset ds = std::move(load.data);
            if (!src.time_column.empty()) {
                if (std::find(ds.feature_names.begin(), ds.feature_names.end(), src.time_column) ==
                    ds.feature_names.end())
                    throw DataError("time column '" + src.time_column + "' not found in '" + src.csv_path + "'");
                try {
                    if (src.window > 0.0) ds = aggregate_by_window(ds, src.time_column, src.window);
                } catch (const ArgumentError& e) {
                    throw DataError(e.what());
                }
                ds = drop_features(ds, {src.time_column});
            }
            return ds;
        }
    }
    throw ArgumentError("bad data source");
}

/// Load/generate, split 80/20, and scale with the training split's ranges.
inline PreparedData prepare_data(const RunConfig& cfg) {
    PreparedData out;
    const Dataset ds = load_source(cfg.data, cfg.seed, &out.dropped_rows);
    if (ds.size() < 5) throw DataError("need at least 5 usable rows, got " + std::to_string(ds.size()));
    out.split = split_80_20(ds, split_seed(cfg.seed));
    if (cfg.data.scaling_enabled()) {
        const FeatureScaling s = fit_minmax(out.split.train);
        out.split.train = apply_scaling(out.split.train, s);
        out.split.test = apply_scaling(out.split.test, s);
        out.scaling = s;
    }
    return out;
}

struct TrainResult {
    ModelFile model;
    OptimizationTrace trace;
    PreparedData data;
    double optimize_seconds = 0.0;
    double fit_seconds = 0.0;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline TrainResult train(const RunConfig& cfg, PreparedData data) {
    TrainResult out;
    const Dataset& tr = data.split.train;
    OptimizerConfig oc = cfg.optimizer;
    oc.seed = optimizer_seed(cfg.seed);
    auto t0 = std::chrono::steady_clock::now();
    auto [sigma, trace] = optimize_sigma(cfg.family, tr.X, tr.f, oc);
    out.optimize_seconds = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    out.model.model = fit(cfg.family, sigma, tr.X, tr.f, cfg.fit_ridge_lambda);
    out.fit_seconds = seconds_since(t0);
    out.model.feature_names = tr.feature_names;
    out.model.input_scaling = data.scaling;
    out.trace = std::move(trace);
    out.data = std::move(data);
    return out;
}

inline TrainResult train(const RunConfig& cfg) { return train(cfg, prepare_data(cfg)); }

/// Plan from the learned metric; diagonal and isotropic models also get a ranking.
inline ReductionPlan reduce(const ModelFile& mf, const ReductionRule& rule) {
    return make_plan(decompose_theta(mf.model.sigma), rule);
}

inline std::optional<FeatureRanking> ranking_for(const ModelFile& mf) {
    if (mf.model.sigma.mode() == ShapeMode::Full) return std::nullopt;
    return rank_features_diagonal(mf.model.sigma);
}

struct PRow {
    Index p = 0;
    Metrics metrics;
    double jitter = 0.0;
};

struct EvalReport {
    Metrics baseline;
    double baseline_jitter = 0.0;
    std::vector<PRow> rows;
    double seconds = 0.0;
};

inline std::vector<Index> default_ps(Index d, Index p_max) {
    std::vector<Index> ps;
    for (Index p = 1; p <= std::min(d, p_max); ++p) ps.push_back(p);
    return ps;
}

/// For each p: map through the first p rows of the plan, refit with a
/// unit-shape kernel on mapped train, score on mapped test. The baseline is a
/// unit-shape kernel on the raw features.
inline EvalReport evaluate(RbfFamily family, const ReductionPlan& plan, const SplitDataset& split,
                           const std::vector<Index>& ps, double ridge) {
    const Dataset& tr = split.train;
    const Dataset& te = split.test;
    if (tr.dim() != plan.dim())
        throw ArgumentError("plan is " + std::to_string(plan.dim()) + "-dimensional, data has " +
                            std::to_string(tr.dim()) + " features");
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport rep;
    {
        const auto m = fit(family, ShapeMatrix::isotropic(1.0, tr.dim()), tr.X, tr.f, ridge);
        rep.baseline = metrics(te.f, predict(m, te.X));
        rep.baseline_jitter = m.jitter_used;
    }
    for (Index p : ps) {
        if (p < 1 || p > plan.dim())
            throw ArgumentError("p = " + std::to_string(p) + " is outside 1.." + std::to_string(plan.dim()));
        const ReductionPlan sub = truncate(plan, p);
        const auto m = fit(family, ShapeMatrix::isotropic(1.0, p), map_dataset(sub, tr.X), tr.f, ridge);
        rep.rows.push_back({p, metrics(te.f, predict(m, map_dataset(sub, te.X))), m.jitter_used});
    }
    rep.seconds = seconds_since(t0);
    return rep;
}

inline void put_metrics(std::ostream& out, const Metrics& m) {
    out << m.rmse << ',';
    if (m.rmsre) out << *m.rmsre;
}

/// p,rmse,rmsre with the baseline first; timings stay out so reruns compare equal.
inline std::string metrics_csv(const EvalReport& rep) {
    std::ostringstream out;
    out << "p,rmse,rmsre\n" << std::setprecision(17);
    out << "baseline,";
    put_metrics(out, rep.baseline);
    out << '\n';
    for (const auto& r : rep.rows) {
        out << r.p << ',';
        put_metrics(out, r.metrics);
        out << '\n';
    }
    return out.str();
}

inline const PRow* find_p(const EvalReport& rep, Index p) {
    for (const auto& r : rep.rows)
        if (r.p == p) return &r;
    return nullptr;
}

// ---------------------------------------------------------------- bench

struct BenchCell {
    DataKind suite = DataKind::F1;
    int alpha = 0;
    RbfFamily family = RbfFamily::M2;
    ShapeMode mode = ShapeMode::Diagonal;

    [[nodiscard]] std::string name() const {
        std::string s = to_string(suite);
        if (suite == DataKind::F2) s += "_a" + std::string(alpha < 0 ? "m" : "") + std::to_string(std::abs(alpha));
        return s + "_" + to_string(family) + "_" + to_string(mode);
    }
};

struct BenchSettings {
    Index n_f1 = 5000;
    Index d_f1 = 35;
    Index n_f2 = 5000;
    OptimizerConfig optimizer = [] {
        OptimizerConfig o;
        o.batch_size = 512;
        o.monitor_size = 1024;
        return o;
    }();
    /// Full-mode cells take smaller steps; the first 0.05 step often lands
    /// far above the starting loss once off-diagonal entries are free.
    double full_learning_rate = 0.01;
    ReductionRule rule = kDefaultRule;
    double fit_ridge_lambda = 1e-8;
    Index p_max = 10;
    unsigned jobs = 1;
};

/// "f1", "f2" or "all".
inline std::vector<BenchCell> bench_grid(const std::string& suite) {
    if (suite != "f1" && suite != "f2" && suite != "all")
        throw ArgumentError("unknown bench suite '" + suite + "' (expected f1, f2 or all)");
    std::vector<BenchCell> cells;
    const ShapeMode modes[] = {ShapeMode::Diagonal, ShapeMode::Full};
    if (suite != "f2")
        for (auto fam : kAllFamilies)
            for (auto mode : modes) cells.push_back({DataKind::F1, 0, fam, mode});
    if (suite != "f1")
        for (int a = -2; a <= 2; ++a)
            for (auto fam : kAllFamilies)
                for (auto mode : modes) cells.push_back({DataKind::F2, a, fam, mode});
    return cells;
}

inline RunConfig cell_config(const BenchCell& cell, const BenchSettings& s, std::uint64_t seed) {
    RunConfig c;
    c.family = cell.family;
    c.optimizer = s.optimizer;
    c.optimizer.mode = cell.mode;
    if (cell.mode == ShapeMode::Full) c.optimizer.learning_rate = s.full_learning_rate;
    c.rule = s.rule;
    c.fit_ridge_lambda = s.fit_ridge_lambda;
    c.data.kind = cell.suite;
    c.data.n = cell.suite == DataKind::F1 ? s.n_f1 : s.n_f2;
    c.data.d = cell.suite == DataKind::F1 ? s.d_f1 : 15;
    c.data.alpha = cell.alpha;
    c.data.scale = false;
    c.seed = seed;
    c.p_max = s.p_max;
    return c;
}

struct CellResult {
    BenchCell cell;
    bool ok = false;
    std::string error;
    ReductionPlan plan;
    std::optional<FeatureRanking> ranking;
    ShapeMatrix sigma = ShapeMatrix::isotropic(1.0, 1);
    EvalReport report;
    double best_loss = 0.0;
    int iterations = 0;
    double seconds = 0.0;
};

/// Runs one cell and writes its files under dir (created as needed).
inline CellResult run_cell(const BenchCell& cell, const BenchSettings& s, std::uint64_t seed,
                           const std::filesystem::path& dir) {
    CellResult r;
    r.cell = cell;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const RunConfig cfg = cell_config(cell, s, seed);
        TrainResult tr = train(cfg);
        r.sigma = tr.model.model.sigma;
        r.best_loss = tr.trace.best_loss;
        r.iterations = tr.trace.iterations_run;
        r.plan = reduce(tr.model, cfg.rule);
        r.ranking = ranking_for(tr.model);
        r.report = evaluate(cfg.family, r.plan, tr.data.split, default_ps(r.plan.dim(), cfg.p_max),
                            cfg.fit_ridge_lambda);
        write_file_atomic(dir / "spectrum.csv", spectrum_csv(r.plan));
        write_file_atomic(dir / "metrics.csv", metrics_csv(r.report));
        write_file_atomic(dir / "trace.csv", trace_csv(tr.trace));
        write_file_atomic(dir / "config.json", config_to_json(cfg).dump(1) + "\n");
        save_plan(dir / "plan.json", r.plan);
        if (r.ranking) write_file_atomic(dir / "ranking.csv", ranking_csv(*r.ranking, tr.model.feature_names));
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
        write_file_atomic(dir / "error.txt", r.error + "\n");
    }
    r.seconds = seconds_since(t0);
    return r;
}

inline std::string bench_summary_csv(const std::vector<CellResult>& results) {
    std::ostringstream out;
    out << "cell,suite,alpha,kernel,mode,status,p_rule,baseline_rmse,baseline_rmsre,selected_rmse,selected_rmsre,"
           "best_p,best_rmse,best_rmsre,error\n"
        << std::setprecision(17);
    for (const auto& r : results) {
        const auto& c = r.cell;
        out << c.name() << ',' << to_string(c.suite) << ',' << c.alpha << ',' << to_string(c.family) << ','
            << to_string(c.mode) << ',' << (r.ok ? "ok" : "failed") << ',';
        if (!r.ok) {
            std::string msg = r.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            out << ",,,,,,,," << msg << '\n';
            continue;
        }
        out << r.plan.p << ',';
        put_metrics(out, r.report.baseline);
        out << ',';
        const PRow* sel = find_p(r.report, r.plan.p);
        if (sel) put_metrics(out, sel->metrics);
        else out << ',';
        const PRow* best = nullptr;
        for (const auto& row : r.report.rows) {
            const double key = row.metrics.rmsre.value_or(row.metrics.rmse);
            if (!best || key < best->metrics.rmsre.value_or(best->metrics.rmse)) best = &row;
        }
        out << ',';
        if (best) {
            out << best->p << ',';
            put_metrics(out, best->metrics);
        } else {
            out << ",,";
        }
        out << ",\n";
    }
    return out.str();
}

struct BenchOutcome {
    std::vector<CellResult> results;
    std::size_t failed = 0;
    double seconds = 0.0;
};

/// Cells are independent; up to s.jobs run at once. Results keep grid order.
inline BenchOutcome run_bench(const std::vector<BenchCell>& cells, const BenchSettings& s, std::uint64_t seed,
                              const std::filesystem::path& out_dir,
                              const std::function<void(const CellResult&)>& on_done = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    BenchOutcome out;
    out.results.resize(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex report_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < cells.size(); k = next++) {
            out.results[k] = run_cell(cells[k], s, seed, out_dir / "cells" / cells[k].name());
            if (on_done) {
                std::lock_guard<std::mutex> lock(report_mutex);
                on_done(out.results[k]);
            }
        }
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(s.jobs, static_cast<unsigned>(cells.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    for (const auto& r : out.results)
        if (!r.ok) ++out.failed;
    write_file_atomic(out_dir / "bench_summary.csv", bench_summary_csv(out.results));

    nlohmann::json timing = nlohmann::json::object();
    for (const auto& r : out.results) timing[r.cell.name()] = r.seconds;
    out.seconds = seconds_since(t0);
    nlohmann::json rep;
    rep["seed"] = seed;
    rep["rng"] = kRngAlgorithm;
    rep["cells"] = cells.size();
    rep["failed"] = out.failed;
    rep["seconds_total"] = out.seconds;
    rep["seconds_per_cell"] = timing;
    write_file_atomic(out_dir / "bench_report.json", rep.dump(1) + "\n");
    return out;
}

}  // namespace fuse
