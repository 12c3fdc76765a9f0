// fuse: learn a shape matrix, reduce features, evaluate, benchmark.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fuse/manifest.hpp"
#include "fuse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fuse;

namespace {

enum Exit : int { kOk = 0, kUnexpected = 1, kConfig = 2, kData = 3, kNumeric = 4, kPartialBench = 5 };

// String-typed mirror of the config so CLI11 can fill it from flags or a file.
struct Flags {
    std::string family = "M2";
    std::string mode = "diagonal";
    int max_iters = 200;
    double learning_rate = 0.05;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    Index batch_size = 0;    // 0 = full batch
    Index monitor_size = 0;  // 0 = all points
    double ridge_lambda = 1e-8;
    double init_scale = 0.0;  // 0 = 1/sqrt(d)
    double tol_rel_loss = 1e-6;
    int patience = 20;
    std::string rule = "relative:1e-4";
    double fit_ridge_lambda = 1e-8;
    std::string data = "f1";
    Index n = 5000;
    Index d = 35;
    int alpha = 0;
    std::string csv;
    std::string target;
    std::string time_column;
    double window = 0.0;
    std::string scale = "auto";
    std::uint64_t seed = 0;
    Index p_max = 10;
};

void add_optimizer_flags(CLI::App* app, Flags& f) {
    app->add_option("--mode", f.mode, "Shape mode: isotropic, diagonal or full")->capture_default_str();
    app->add_option("--max_iters", f.max_iters, "Adam iterations")->capture_default_str();
    app->add_option("--learning_rate", f.learning_rate)->capture_default_str();
    app->add_option("--adam_beta1", f.adam_beta1)->capture_default_str();
    app->add_option("--adam_beta2", f.adam_beta2)->capture_default_str();
    app->add_option("--adam_eps", f.adam_eps)->capture_default_str();
    app->add_option("--batch_size", f.batch_size, "Points per iteration (0 = full batch)")->capture_default_str();
    app->add_option("--monitor_size", f.monitor_size, "Points scoring iterates when batching (0 = all)")
        ->capture_default_str();
    app->add_option("--ridge_lambda", f.ridge_lambda, "Ridge used inside the LOOCV loss")->capture_default_str();
    app->add_option("--init_scale", f.init_scale, "Sigma_0 = init_scale * I (0 = 1/sqrt(d))")->capture_default_str();
    app->add_option("--tol_rel_loss", f.tol_rel_loss)->capture_default_str();
    app->add_option("--patience", f.patience)->capture_default_str();
}

void add_data_flags(CLI::App* app, Flags& f) {
    app->add_option("--data", f.data, "Data source: f1, f2 or csv")->capture_default_str();
    app->add_option("--n", f.n, "Synthetic sample count")->capture_default_str();
    app->add_option("--d", f.d, "f1 dimension")->capture_default_str();
    app->add_option("--alpha", f.alpha, "f2 exponent in {-2..2}")->capture_default_str();
    app->add_option("--csv", f.csv, "CSV path (data = csv)");
    app->add_option("--target", f.target, "CSV target column");
    app->add_option("--time_column", f.time_column, "CSV time column in seconds (dropped after aggregation)");
    app->add_option("--window", f.window, "Aggregation window in seconds (0 = none)")->capture_default_str();
    app->add_option("--scale", f.scale, "Min-max scaling: auto, on or off")->capture_default_str();
    app->add_option("--seed", f.seed, "Seed for data, split and optimizer")->capture_default_str();
}

OptimizerConfig optimizer_from(const Flags& f) {
    OptimizerConfig o;
    o.mode = parse_mode(f.mode);
    o.max_iters = f.max_iters;
    o.learning_rate = f.learning_rate;
    o.adam_beta1 = f.adam_beta1;
    o.adam_beta2 = f.adam_beta2;
    o.adam_eps = f.adam_eps;
    if (f.batch_size > 0) o.batch_size = f.batch_size;
    if (f.monitor_size > 0) o.monitor_size = f.monitor_size;
    o.ridge_lambda = f.ridge_lambda;
    if (f.init_scale > 0) o.init_scale = f.init_scale;
    o.tol_rel_loss = f.tol_rel_loss;
    o.patience = f.patience;
    o.validate();
    return o;
}

RunConfig config_from(const Flags& f, const fs::path& out) {
    RunConfig c;
    c.family = parse_family(f.family);
    c.optimizer = optimizer_from(f);
    c.rule = parse_rule(f.rule);
    c.fit_ridge_lambda = f.fit_ridge_lambda;
    c.data.kind = parse_data_kind(f.data);
    c.data.n = f.n;
    c.data.d = f.d;
    c.data.alpha = f.alpha;
    c.data.csv_path = f.csv;
    c.data.target = f.target;
    c.data.time_column = f.time_column;
    c.data.window = f.window;
    if (f.scale == "on") c.data.scale = true;
    else if (f.scale == "off") c.data.scale = false;
    else if (f.scale != "auto") throw ArgumentError("--scale must be auto, on or off");
    c.seed = f.seed;
    c.out_dir = out;
    c.p_max = f.p_max;
    if (c.p_max < 1) throw ArgumentError("p_max must be at least 1");
    if (!(c.fit_ridge_lambda >= 0.0)) throw ArgumentError("fit_ridge_lambda must be nonnegative");
    return c;
}

int cmd_train(const Flags& f, const fs::path& out) {
    const RunConfig cfg = config_from(f, out);
    PreparedData data = prepare_data(cfg);
    if (data.dropped_rows > 0) std::cerr << "train: dropped " << data.dropped_rows << " malformed CSV rows\n";
    std::cerr << "train: " << data.split.train.size() << " train / " << data.split.test.size() << " test rows, d = "
              << data.split.train.dim() << '\n';
    const TrainResult tr = train(cfg, std::move(data));
    save_model(out / "model.json", tr.model);
    write_file_atomic(out / "trace.csv", trace_csv(tr.trace));
    nlohmann::json echo = config_to_json(cfg);
    echo["timings"] = {{"optimize_seconds", tr.optimize_seconds}, {"fit_seconds", tr.fit_seconds}};
    echo["iterations_run"] = tr.trace.iterations_run;
    echo["best_loss"] = tr.trace.best_loss;
    echo["converged"] = tr.trace.converged;
    write_file_atomic(out / "config.json", echo.dump(1) + "\n");
    write_manifest(out);
    std::cerr << "train: best LOOCV loss " << tr.trace.best_loss << " after " << tr.trace.iterations_run
              << " iterations\n";
    return kOk;
}

int cmd_reduce(const fs::path& model_path, const std::string& rule_text, const fs::path& out) {
    const ModelFile mf = load_model(model_path);
    const ReductionPlan plan = reduce(mf, parse_rule(rule_text));
    save_plan(out / "plan.json", plan);
    write_file_atomic(out / "spectrum.csv", spectrum_csv(plan));
    if (const auto ranking = ranking_for(mf)) write_file_atomic(out / "ranking.csv", ranking_csv(*ranking, mf.feature_names));
    write_manifest(out);
    std::cerr << "reduce: kept p = " << plan.p << " of " << plan.dim() << " directions\n";
    return kOk;
}

int cmd_eval(const Flags& f, const fs::path& model_path, const fs::path& plan_path, std::vector<Index> ps,
             const fs::path& out) {
    const RunConfig cfg = config_from(f, out);
    const ModelFile mf = load_model(model_path);
    const ReductionPlan plan = load_plan(plan_path);
    if (plan.dim() != mf.model.dim())
        throw ArgumentError("plan and model dimensions differ (" + std::to_string(plan.dim()) + " vs " +
                            std::to_string(mf.model.dim()) + ")");
    // Same config and seed as training: the split is re-derived, then scaled
    // with the ranges stored in the model.
    RunConfig raw = cfg;
    raw.data.scale = false;
    PreparedData data = prepare_data(raw);
    if (mf.input_scaling) {
        data.split.train = apply_scaling(data.split.train, *mf.input_scaling);
        data.split.test = apply_scaling(data.split.test, *mf.input_scaling);
    }
    if (ps.empty()) ps = default_ps(plan.dim(), cfg.p_max);
    const EvalReport rep = evaluate(mf.model.family, plan, data.split, ps, cfg.fit_ridge_lambda);
    write_file_atomic(out / "metrics.csv", metrics_csv(rep));
    nlohmann::json j = config_to_json(cfg);
    j["eval_seconds"] = rep.seconds;
    j["model"] = model_path.string();
    j["plan"] = plan_path.string();
    write_file_atomic(out / "report.json", j.dump(1) + "\n");
    write_manifest(out);
    std::cout << metrics_csv(rep);
    return kOk;
}

int cmd_bench(const Flags& f, const std::string& suite, const BenchSettings& base, const fs::path& out) {
    BenchSettings s = base;
    s.optimizer = optimizer_from(f);
    s.rule = parse_rule(f.rule);
    s.fit_ridge_lambda = f.fit_ridge_lambda;
    s.p_max = f.p_max;
    const auto cells = bench_grid(suite);
    std::cerr << "bench: " << cells.size() << " cells, seed " << f.seed << ", jobs " << s.jobs << '\n';
    const BenchOutcome res = run_bench(cells, s, f.seed, out, [](const CellResult& r) {
        std::cerr << "  " << r.cell.name() << ": " << (r.ok ? "ok" : "FAILED (" + r.error + ")") << " in "
                  << r.seconds << " s\n";
    });
    write_manifest(out);
    std::cerr << "bench: " << res.failed << " of " << cells.size() << " cells failed, " << res.seconds << " s\n";
    return res.failed == 0 ? kOk : kPartialBench;
}

int cmd_synth(const Flags& f, const fs::path& path) {
    DataSource src;
    src.kind = parse_data_kind(f.data);
    if (src.kind == DataKind::Csv) throw ArgumentError("synth generates f1 or f2 only");
    src.n = f.n;
    src.d = f.d;
    src.alpha = f.alpha;
    const Dataset ds = load_source(src, f.seed);
    std::ostringstream text;
    write_csv(text, ds);
    write_file_atomic(path, text.str());
    return kOk;
}

// CLI11 only reads config files attached to the top-level app, so a
// subcommand's --config FILE is expanded here into ordinary flags placed
// right after the subcommand name. Later command-line flags still win.
std::vector<std::string> with_config_file(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> expanded;
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
        else continue;
        if (!fs::exists(path)) throw CLI::FileError::Missing(path);
        for (const auto& item : CLI::ConfigTOML().from_file(path)) {
            if (!item.parents.empty()) continue;
            expanded.push_back("--" + item.name);
            expanded.insert(expanded.end(), item.inputs.begin(), item.inputs.end());
        }
        break;
    }
    if (!expanded.empty() && !args.empty()) args.insert(args.begin() + 1, expanded.begin(), expanded.end());
    std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learn a kernel shape matrix, reduce features by its eigenvalues, and evaluate the reduced models"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_version_flag("--version", "fuse 1.0");

    Flags train_f, eval_f, bench_f, synth_f;
    fs::path train_out = "fuse_out", reduce_out = "fuse_out", eval_out = "fuse_out", bench_out = "fuse_bench";
    fs::path reduce_model, eval_model, eval_plan, synth_path;
    std::string reduce_rule = "relative:1e-4";
    std::string suite = "all";
    std::vector<Index> eval_ps;
    BenchSettings bench_base;

    auto* train = app.add_subcommand("train", "Optimize the shape matrix on the 80% split and fit the final model");
    std::string config_file;  // consumed by with_config_file before parsing
    const auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "Flat TOML/INI file with option names as keys");
    };
    add_config(train);
    train->add_option("--family", train_f.family, "Kernel: GA, M2 or M0")->capture_default_str();
    add_optimizer_flags(train, train_f);
    add_data_flags(train, train_f);
    train->add_option("--rule", train_f.rule, "Reduction rule echoed into the config")->capture_default_str();
    train->add_option("--fit_ridge_lambda", train_f.fit_ridge_lambda, "Ridge for the final fit")->capture_default_str();
    train->add_option("--out", train_out, "Output directory")->capture_default_str();

    auto* reduce_cmd = app.add_subcommand("reduce", "Eigen-decompose the learned metric into a reduction plan");
    add_config(reduce_cmd);
    reduce_cmd->add_option("--model", reduce_model, "model.json from train")->required();
    reduce_cmd->add_option("--rule", reduce_rule, "absolute:TAU, relative:TAU or count:P")->capture_default_str();
    reduce_cmd->add_option("--out", reduce_out, "Output directory")->capture_default_str();

    auto* eval = app.add_subcommand("eval", "Refit on reduced features and report test metrics per p");
    add_config(eval);
    eval->add_option("--model", eval_model, "model.json from train")->required();
    eval->add_option("--plan", eval_plan, "plan.json from reduce")->required();
    eval->add_option("--p", eval_ps, "Values of p to evaluate (default 1..min(d, p_max))");
    eval->add_option("--p_max", eval_f.p_max)->capture_default_str();
    eval->add_option("--fit_ridge_lambda", eval_f.fit_ridge_lambda)->capture_default_str();
    // Accepted so one config file serves train and eval.
    eval->add_option("--family", eval_f.family);
    add_optimizer_flags(eval, eval_f);
    eval->add_option("--rule", eval_f.rule);
    add_data_flags(eval, eval_f);
    eval->add_option("--out", eval_out, "Output directory")->capture_default_str();

    auto* bench = app.add_subcommand("bench", "Run the synthetic benchmark grid");
    add_config(bench);
    bench->add_option("--suite", suite, "f1, f2 or all")->capture_default_str();
    bench->add_option("--seed", bench_f.seed, "Seed shared by every cell")->required();
    bench->add_option("--n_f1", bench_base.n_f1)->capture_default_str();
    bench->add_option("--d_f1", bench_base.d_f1)->capture_default_str();
    bench->add_option("--n_f2", bench_base.n_f2)->capture_default_str();
    bench->add_option("--jobs", bench_base.jobs, "Cells run in parallel")->capture_default_str();
    bench->add_option("--full_learning_rate", bench_base.full_learning_rate, "Learning rate for full-mode cells")
        ->capture_default_str();
    bench_f.batch_size = *bench_base.optimizer.batch_size;
    bench_f.monitor_size = *bench_base.optimizer.monitor_size;
    add_optimizer_flags(bench, bench_f);
    bench->add_option("--rule", bench_f.rule)->capture_default_str();
    bench->add_option("--fit_ridge_lambda", bench_f.fit_ridge_lambda)->capture_default_str();
    bench->add_option("--p_max", bench_f.p_max)->capture_default_str();
    bench->add_option("--out", bench_out, "Output directory")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Write a generated dataset to CSV");
    synth->add_option("--data", synth_f.data, "f1 or f2")->capture_default_str();
    synth->add_option("--n", synth_f.n)->capture_default_str();
    synth->add_option("--d", synth_f.d)->capture_default_str();
    synth->add_option("--alpha", synth_f.alpha)->capture_default_str();
    synth->add_option("--seed", synth_f.seed)->capture_default_str();
    synth->add_option("--out", synth_path, "CSV path")->required();

    try {
        app.parse(with_config_file(argc, argv));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    const char* stage = "fuse";
    try {
        if (*train) {
            stage = "train";
            return cmd_train(train_f, train_out);
        }
        if (*reduce_cmd) {
            stage = "reduce";
            return cmd_reduce(reduce_model, reduce_rule, reduce_out);
        }
        if (*eval) {
            stage = "eval";
            return cmd_eval(eval_f, eval_model, eval_plan, eval_ps, eval_out);
        }
        if (*bench) {
            stage = "bench";
            return cmd_bench(bench_f, suite, bench_base, bench_out);
        }
        if (*synth) {
            stage = "synth";
            return cmd_synth(synth_f, synth_path);
        }
    } catch (const ArgumentError& e) {
        std::cerr << stage << ": config error: " << e.what() << '\n';
        return kConfig;
    } catch (const FormatError& e) {
        std::cerr << stage << ": format error: " << e.what() << '\n';
        return kData;
    } catch (const DataError& e) {
        std::cerr << stage << ": data error: " << e.what() << '\n';
        return kData;
    } catch (const SingularSystemError& e) {
        std::cerr << stage << ": numerical failure: " << e.what() << " (final jitter " << e.final_jitter() << ")\n";
        return kNumeric;
    } catch (const OptimizationDivergedError& e) {
        std::cerr << stage << ": numerical failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const fs::filesystem_error& e) {
        std::cerr << stage << ": data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << stage << ": " << e.what() << '\n';
        return kUnexpected;
    }
    return kOk;
}
