// SPDX-License-Identifier: Apache-2.0
#include "dfpo/commands.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "dfpo/checkpoint.hpp"
#include "dfpo/config.hpp"
#include "dfpo/error.hpp"
#include "dfpo/evalharness.hpp"
#include "dfpo/hamiltonian.hpp"
#include "dfpo/rng.hpp"
#include "dfpo/trainer.hpp"

namespace fs = std::filesystem;

namespace dfpo::cli {

namespace {

std::string stage_ckpt_name(std::size_t k)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "stage_%03zu.ckpt", k);
    return buf;
}

std::string fmt(double v, int prec = 6)
{
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

// Rows of an existing history CSV whose stage column is <= stage, header included.
std::vector<std::string> kept_rows(const fs::path& path, std::size_t column, std::size_t stage)
{
    std::vector<std::string> rows;
    std::ifstream is(path);
    std::string line;
    if (!std::getline(is, line)) return rows;
    rows.push_back(line);
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string cell;
        for (std::size_t i = 0; i <= column && std::getline(ss, cell, ','); ++i) {
        }
        try {
            if (std::stoull(cell) <= stage) rows.push_back(line);
        } catch (const std::exception&) {
        }
    }
    return rows;
}

void append_rows(const fs::path& path, const std::vector<std::string>& prefix)
{
    if (prefix.size() <= 1) return;
    std::ifstream is(path);
    std::string header, line;
    std::getline(is, header);
    std::vector<std::string> fresh;
    while (std::getline(is, line)) fresh.push_back(line);
    is.close();
    std::ofstream os(path, std::ios::trunc);
    for (const auto& r : prefix) os << r << '\n';
    for (const auto& r : fresh) os << r << '\n';
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

struct ResumePlan {
    ResumeState state;
    std::vector<std::string> stage_rows, episode_rows;
};

std::optional<ResumePlan> plan_resume(const RunConfig& cfg, const fs::path& dir, std::ostream& out)
{
    const auto mem_path = dir / "memory.bin";
    if (!fs::exists(mem_path)) {
        out << "resume: no memory.bin in " << dir.string() << ", starting from stage 1\n";
        return std::nullopt;
    }
    ResumePlan plan;
    plan.state.memory = ReplayMemory::load(mem_path.string());
    const std::size_t k = plan.state.memory.stages_completed();
    if (k == 0) return std::nullopt;
    const auto ckpt = load_checkpoint((dir / stage_ckpt_name(k)).string());
    if (ckpt.stage != k) throw UsageError("resume: checkpoint stage does not match memory.bin");
    if (config_entries(ckpt.config()) != config_entries(cfg))
        throw ConfigError("resume: config differs from the one echoed in " + stage_ckpt_name(k));
    plan.state.stage = k;
    plan.state.net = ckpt.net;
    plan.stage_rows = kept_rows(dir / "history_stages.csv", 0, k);
    plan.episode_rows = kept_rows(dir / "history_episodes.csv", 1, k);
    out << "resume: continuing after stage " << k << "\n";
    return plan;
}

}  // namespace

void apply_thread_env()
{
    const char* raw = std::getenv("DFPO_THREADS");
    if (!raw || !*raw) return;
    char* end = nullptr;
    const long n = std::strtol(raw, &end, 10);
    if (*end != '\0' || n < 0) throw ConfigError(std::string("DFPO_THREADS must be a non-negative integer, got '") + raw + "'");
    if (n > 0) omp_set_num_threads(static_cast<int>(n));
}

std::string format_check(const Check& c)
{
    return std::string(c.pass ? "PASS " : "FAIL ") + c.metric + " = " + fmt(c.measured, 6) + " (required "
           + c.relation + " " + fmt(c.threshold, 6) + ")";
}

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err)
{
    RunConfig cfg;
    StageSchedule schedule;
    try {
        cfg = load_config(opts.config_path);
        if (opts.seed) cfg.seed = *opts.seed;
        if (opts.out_dir) cfg.out_dir = *opts.out_dir;
        if (cfg.out_dir.empty()) throw ConfigError("out_dir must not be empty");
        schedule = cfg.make_stage_schedule();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kUsage;
    }
    for (const auto& w : schedule.warnings) err << "warning: " << w << "\n";

    const fs::path dir(cfg.out_dir);
    std::optional<ResumePlan> plan;
    try {
        fs::create_directories(dir);
        if (opts.resume) plan = plan_resume(cfg, dir, out);
        std::ofstream echo(dir / "config.echo", std::ios::trunc);
        echo << render_entries(config_entries(cfg));
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const ChecksumError& e) {
        err << "corrupt resume state: " << e.what() << "\n";
        return kCorrupt;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }

    out << "training " << to_string(cfg.env.kind) << ": " << schedule.stages() << " stages, "
        << schedule.total_episodes() << " episodes, seed " << cfg.seed << "\n";

    const auto stages_csv = (dir / "history_stages.csv").string();
    const auto episodes_csv = (dir / "history_episodes.csv").string();
    auto on_stage = [&](std::size_t k, const ScoreNet& net, const TrainResult& so_far) {
        save_checkpoint(make_checkpoint(cfg, net, k, false), (dir / stage_ckpt_name(k)).string());
        so_far.memory.save((dir / "memory.bin").string());
        export_history(so_far.history, stages_csv, episodes_csv);
        if (plan) {
            append_rows(stages_csv, plan->stage_rows);
            append_rows(episodes_csv, plan->episode_rows);
        }
        const auto& rec = so_far.history.stages.back();
        out << "stage " << k << "/" << schedule.stages() << "  N=" << rec.samples << "  memory=" << rec.memory_size
            << "  loss=" << fmt(rec.loss_curve.empty() ? 0.0 : rec.loss_curve.back(), 4) << "  epochs="
            << rec.loss_curve.size() << "  " << fmt(rec.seconds, 3) << "s\n";
        out.flush();
    };

    try {
        std::optional<ResumeState> resume;
        if (plan) resume = plan->state;
        const auto result = train(cfg.env, schedule, cfg.net, cfg.fit, cfg.seed, on_stage, std::move(resume));
        save_checkpoint(make_checkpoint(cfg, result.net, schedule.stages(), true), (dir / "final.ckpt").string());
        out << "done in " << fmt(result.history.seconds, 4) << "s; final checkpoint " << (dir / "final.ckpt").string()
            << "\n";
    } catch (const StageError& e) {
        err << "stage " << e.stage() << " failed: " << e.what() << "\n";
        return kRuntime;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err)
{
    if (opts.episodes == 0) {
        err << "usage error: --episodes must be at least 1\n";
        return kUsage;
    }
    Checkpoint ckpt;
    RunConfig cfg;
    try {
        ckpt = load_checkpoint(opts.ckpt_path);
        cfg = ckpt.config();
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        err << "corrupt checkpoint: " << e.what() << "\n";
        return kCorrupt;
    }
    try {
        const Environment env(cfg.env);
        if (ckpt.net.input_dim() != env.phase_dim()) {
            err << "corrupt checkpoint: network input width " << ckpt.net.input_dim() << " does not match env ("
                << env.phase_dim() << ")\n";
            return kCorrupt;
        }
        const std::uint64_t seed = opts.seed.value_or(cfg.seed);
        const auto report = eval_terminal(make_operator(cfg.env.dt, ckpt.net), env, opts.episodes, seed);
        const std::string path = opts.csv_path.value_or(opts.ckpt_path + (opts.json ? ".eval.json" : ".eval.csv"));
        export_report(report, path, opts.json ? ExportFormat::Json : ExportFormat::Csv);
        out << "terminal cost " << fmt(report.mean, 6) << " +- " << fmt(report.std, 6) << " over "
            << report.terminal_costs.size() << " episodes (seed " << seed << ")";
        if (report.failures) out << ", " << report.failures << " failed";
        out << "\nreport written to " << path << "\n";
        return report.terminal_costs.empty() ? kRuntime : kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
}

std::vector<Check> gradcheck_checks(const GradcheckOptions& opts)
{
    double worst = 0.0;
    for (std::size_t n = 0; n < opts.nets; ++n) {
        auto rng = stream_rng(opts.seed, 0x6c, n);
        std::uniform_int_distribution<std::size_t> in_dim(2, 8), width(4, 16), depth(1, 2);
        std::vector<std::size_t> widths{in_dim(rng)};
        const auto layers = depth(rng);
        for (std::size_t l = 0; l < layers; ++l) widths.push_back(width(rng));
        widths.push_back(1);
        const auto act = n % 2 == 0 ? Activation::Tanh : Activation::Softplus;
        const auto net = ScoreNet::random(widths, act, rng);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> x(widths.front());
        for (std::size_t i = 0; i < opts.inputs; ++i) {
            for (auto& v : x) v = normal(rng);
            worst = std::max(worst, finite_diff_check(net, x));
        }
    }
    return {{"gradcheck.max_rel_err", worst, opts.threshold, worst < opts.threshold, "<"}};
}

std::vector<Check> oracle_checks(double dt, std::size_t horizon, std::size_t halvings)
{
    std::vector<Check> checks;
    const auto h = AnalyticHamiltonian::harmonic(1);
    const auto op = make_operator(dt, std::make_shared<AnalyticHamiltonian>(h));

    // explicit powers of [[1, dt], [-dt, 1]]
    double worst = 0.0;
    for (const auto& start : {std::pair{1.0, 0.0}, std::pair{0.3, -1.7}, std::pair{-2.0, 0.5}}) {
        const auto x0 = PhasePoint::from_flat({start.first, start.second});
        const auto points = rollout(op, x0, horizon + 1);
        double m00 = 1, m01 = 0, m10 = 0, m11 = 1;
        for (std::size_t n = 0; n <= horizon; ++n) {
            const double s = m00 * start.first + m01 * start.second;
            const double p = m10 * start.first + m11 * start.second;
            worst = std::max({worst, std::abs(points[n].x[0] - s), std::abs(points[n].x[1] - p)});
            const double a = m00 + dt * m10, b = m01 + dt * m11;
            const double c = -dt * m00 + m10, d = -dt * m01 + m11;
            m00 = a, m01 = b, m10 = c, m11 = d;
        }
    }
    checks.push_back({"oracle.matrix_power_max_abs_err", worst, 1e-12, worst <= 1e-12, "<="});

    const auto order = integrator_order(h, PhasePoint::from_flat({1.0, 0.0}), dt, halvings);
    double min_ratio = order.ratios.empty() ? 0.0 : *std::min_element(order.ratios.begin(), order.ratios.end());
    checks.push_back({"oracle.min_halving_error_ratio", min_ratio, 3.9, min_ratio >= 3.9, ">="});
    return checks;
}

namespace {

int report_checks(const std::vector<Check>& checks, std::ostream& out, std::ostream& err)
{
    bool ok = true;
    for (const auto& c : checks) {
        out << format_check(c) << "\n";
        if (!c.pass) {
            err << "threshold violated: " << c.metric << "\n";
            ok = false;
        }
    }
    return ok ? kOk : kThreshold;
}

int diagnose_pointwise(const PointwiseOptions& opts, std::ostream& out, std::ostream& err)
{
    if (!opts.ckpt_path) {
        err << "usage error: pointwise mode needs a trained checkpoint (--ckpt PATH)\n";
        return kUsage;
    }
    if (opts.max_j < 1 || opts.starts < 1) {
        err << "usage error: --max-j and --starts must be at least 1\n";
        return kUsage;
    }
    Checkpoint ckpt;
    RunConfig cfg;
    try {
        ckpt = load_checkpoint(*opts.ckpt_path);
        cfg = ckpt.config();
    } catch (const IoError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        err << "corrupt checkpoint: " << e.what() << "\n";
        return kCorrupt;
    }
    const Environment env(cfg.env);
    const auto oracle = env.oracle();
    if (!oracle) {
        err << "usage error: pointwise mode needs a checkpoint trained on the quadratic task\n";
        return kUsage;
    }
    const auto policy = make_operator(cfg.env.dt, ckpt.net);
    std::vector<Check> checks;
    for (std::size_t j = 1; j <= opts.max_j; ++j) {
        const auto stats = pointwise_error_stats(policy, *oracle, j, opts.starts, opts.seed);
        out << "pointwise j=" << j << " error=" << fmt(stats.mean) << " se=" << fmt(stats.standard_error) << "\n";
        if (j == 1) checks.push_back({"pointwise.j1_error", stats.mean, opts.threshold, stats.mean < opts.threshold, "<"});
    }
    return report_checks(checks, out, err);
}

int diagnose_regret(const RegretOptions& opts, std::ostream& out, std::ostream& err)
{
    if (!opts.config_path || opts.seeds == 0) {
        err << "usage error: regret mode needs --config PATH and --seeds >= 1\n";
        return kUsage;
    }
    RunConfig cfg;
    try {
        cfg = load_config(*opts.config_path);
        if (cfg.env.kind != EnvKind::Quadratic) throw ConfigError("regret mode needs env.kind = quadratic");
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kUsage;
    }
    const auto schedule = cfg.make_stage_schedule();
    const Environment env(cfg.env);
    double sum = 0.0;
    for (std::size_t i = 0; i < opts.seeds; ++i) {
        const std::uint64_t seed = opts.first_seed + i;
        try {
            const auto result = train(cfg.env, schedule, cfg.net, cfg.fit, seed);
            const auto curve = regret_estimate(result.history, env);
            out << "regret seed=" << seed << " exponent=" << fmt(curve.exponent) << " final_cum="
                << fmt(curve.cumulative.empty() ? 0.0 : curve.cumulative.back()) << " clipped=" << curve.clipped
                << (curve.zero_regret ? " zero-regret" : "") << "\n";
            if (opts.out_dir) {
                fs::create_directories(*opts.out_dir);
                export_regret(curve, (fs::path(*opts.out_dir) / ("regret_seed" + std::to_string(seed) + ".csv")).string(),
                              ExportFormat::Csv);
            }
            sum += curve.exponent;
        } catch (const StageError& e) {
            err << "seed " << seed << ": stage " << e.stage() << " failed: " << e.what() << "\n";
            return kRuntime;
        }
    }
    const double mean = sum / static_cast<double>(opts.seeds);
    return report_checks({{"regret.mean_exponent", mean, opts.threshold, mean < opts.threshold, "<"}}, out, err);
}

}  // namespace

int cmd_diagnose(const DiagnoseOptions& opts, std::ostream& out, std::ostream& err)
{
    try {
        if (opts.mode == "gradcheck") return report_checks(gradcheck_checks(opts.gradcheck), out, err);
        if (opts.mode == "oracle") return report_checks(oracle_checks(), out, err);
        if (opts.mode == "pointwise") return diagnose_pointwise(opts.pointwise, out, err);
        if (opts.mode == "regret") return diagnose_regret(opts.regret, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    err << "usage error: unknown diagnose mode '" << opts.mode << "'\n";
    return kUsage;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Stage-wise dual-flow policy training and evaluation"};
    app.require_subcommand(1);

    TrainOptions train_opts;
    std::uint64_t train_seed = 0;
    std::string train_out;
    auto* train_cmd = app.add_subcommand("train", "Train a score network from a config file");
    train_cmd->add_option("--config", train_opts.config_path, "Run configuration (key = value)")->required();
    auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Override the config seed");
    auto* train_out_opt = train_cmd->add_option("--out", train_out, "Override out_dir");
    train_cmd->add_flag("--resume", train_opts.resume, "Continue after the last completed stage in out_dir");

    EvalOptions eval_opts;
    std::uint64_t eval_seed = 0;
    std::string eval_csv;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on fresh starts");
    eval_cmd->add_option("--ckpt", eval_opts.ckpt_path, "Checkpoint file")->required();
    eval_cmd->add_option("--episodes", eval_opts.episodes, "Test episodes")->capture_default_str();
    auto* eval_seed_opt = eval_cmd->add_option("--seed", eval_seed, "Evaluation seed (default: checkpoint seed)");
    auto* eval_csv_opt = eval_cmd->add_option("--report", eval_csv, "Report path (default: <ckpt>.eval.csv)");
    eval_cmd->add_flag("--json", eval_opts.json, "Write the report as JSON");

    DiagnoseOptions diag;
    std::string diag_ckpt, diag_config, diag_out;
    auto* diag_cmd = app.add_subcommand("diagnose", "Run a verification suite");
    diag_cmd->add_option("--mode", diag.mode, "gradcheck | oracle | pointwise | regret")
        ->required()
        ->check(CLI::IsMember({"gradcheck", "oracle", "pointwise", "regret"}));
    diag_cmd->add_option("--nets", diag.gradcheck.nets, "gradcheck: random networks")->capture_default_str();
    diag_cmd->add_option("--inputs", diag.gradcheck.inputs, "gradcheck: inputs per network")->capture_default_str();
    auto* diag_ckpt_opt = diag_cmd->add_option("--ckpt", diag_ckpt, "pointwise: trained checkpoint");
    diag_cmd->add_option("--max-j", diag.pointwise.max_j, "pointwise: largest step count")->capture_default_str();
    diag_cmd->add_option("--starts", diag.pointwise.starts, "pointwise: Monte-Carlo starts")->capture_default_str();
    auto* diag_config_opt = diag_cmd->add_option("--config", diag_config, "regret: quadratic run configuration");
    diag_cmd->add_option("--seeds", diag.regret.seeds, "regret: number of seeds")->capture_default_str();
    auto* diag_out_opt = diag_cmd->add_option("--out", diag_out, "regret: directory for per-seed CSVs");
    std::uint64_t diag_seed = 0;
    auto* diag_seed_opt = diag_cmd->add_option("--seed", diag_seed, "Seed (gradcheck, pointwise) or first seed (regret)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        apply_thread_env();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kUsage;
    }

    if (*train_cmd) {
        if (*train_seed_opt) train_opts.seed = train_seed;
        if (*train_out_opt) train_opts.out_dir = train_out;
        return cmd_train(train_opts, out, err);
    }
    if (*eval_cmd) {
        if (*eval_seed_opt) eval_opts.seed = eval_seed;
        if (*eval_csv_opt) eval_opts.csv_path = eval_csv;
        return cmd_eval(eval_opts, out, err);
    }
    if (*diag_ckpt_opt) diag.pointwise.ckpt_path = diag_ckpt;
    if (*diag_config_opt) diag.regret.config_path = diag_config;
    if (*diag_out_opt) diag.regret.out_dir = diag_out;
    if (*diag_seed_opt) {
        diag.gradcheck.seed = diag_seed;
        diag.pointwise.seed = diag_seed;
        diag.regret.first_seed = diag_seed;
    }
    return cmd_diagnose(diag, out, err);
}

}  // namespace dfpo::cli
