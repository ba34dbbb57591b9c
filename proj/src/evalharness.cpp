// SPDX-License-Identifier: Apache-2.0
#include "dfpo/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dfpo/error.hpp"
#include "dfpo/rng.hpp"
#include "json.hpp"

namespace dfpo {

namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kPointwiseStream = 0x9017;

struct EpisodeOutcome {
    bool ok = false;
    double terminal = 0.0;
    std::vector<double> step_costs;
};

EpisodeOutcome run_episode(const DynamicsOperator& policy, const Environment& env, const PhasePoint& start)
{
    EpisodeOutcome out;
    try {
        const auto points = rollout(policy, start, env.spec().horizon);
        out.step_costs.reserve(points.size());
        for (const auto& pt : points) out.step_costs.push_back(env.cost(pt.s()));
        out.terminal = out.step_costs.back();
        out.ok = true;
    } catch (const std::exception&) {
        out.ok = false;
    }
    return out;
}

EvalReport collect(const std::vector<EpisodeOutcome>& outcomes, std::size_t horizon, std::uint64_t seed)
{
    EvalReport report;
    report.seed = seed;
    report.mean_step_costs.assign(horizon, 0.0);
    std::size_t ok = 0;
    for (const auto& o : outcomes) {
        if (!o.ok) {
            ++report.failures;
            continue;
        }
        report.terminal_costs.push_back(o.terminal);
        for (std::size_t j = 0; j < horizon; ++j) report.mean_step_costs[j] += o.step_costs[j];
        ++ok;
    }
    if (ok)
        for (auto& v : report.mean_step_costs) v /= static_cast<double>(ok);
    report.summarize();
    return report;
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    return os;
}

std::ifstream open_in(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    return is;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path, const std::string& expected_header)
{
    auto is = open_in(path);
    std::string line;
    if (!std::getline(is, line) || line != expected_header)
        throw IoError(path + ": expected CSV header '" + expected_header + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

nlohmann::json read_json(const std::string& path)
{
    auto is = open_in(path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

}  // namespace

std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void EvalReport::summarize()
{
    const auto n = terminal_costs.size();
    mean = 0.0;
    std = 0.0;
    if (n == 0) return;
    for (double v : terminal_costs) mean += v;
    mean /= static_cast<double>(n);
    if (n < 2) return;
    double ss = 0.0;
    for (double v : terminal_costs) ss += (v - mean) * (v - mean);
    std = std::sqrt(ss / static_cast<double>(n - 1));
}

std::vector<PhasePoint> eval_starts(const Environment& env, std::size_t n_episodes, std::uint64_t seed)
{
    std::vector<PhasePoint> starts(n_episodes);
    for (std::size_t i = 0; i < n_episodes; ++i) {
        auto rng = stream_rng(seed, kEvalStream, i);
        starts[i] = env.sample_rho0(rng);
    }
    return starts;
}

EvalReport eval_terminal(const DynamicsOperator& policy, const Environment& env, std::size_t n_episodes,
                         std::uint64_t seed)
{
    if (n_episodes == 0) throw UsageError("eval needs at least one episode");
    const auto starts = eval_starts(env, n_episodes, seed);
    std::vector<EpisodeOutcome> outcomes(n_episodes);
    const auto n = static_cast<std::ptrdiff_t>(n_episodes);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        outcomes[k] = run_episode(policy, env, starts[k]);
    }
    return collect(outcomes, env.spec().horizon, seed);
}

EvalReport eval_terminal_serial(const DynamicsOperator& policy, const Environment& env, std::size_t n_episodes,
                                std::uint64_t seed)
{
    if (n_episodes == 0) throw UsageError("eval needs at least one episode");
    const auto starts = eval_starts(env, n_episodes, seed);
    std::vector<EpisodeOutcome> outcomes;
    outcomes.reserve(n_episodes);
    for (const auto& s : starts) outcomes.push_back(run_episode(policy, env, s));
    return collect(outcomes, env.spec().horizon, seed);
}

PointwiseStats pointwise_error_stats(const DynamicsOperator& policy, const AnalyticHamiltonian& oracle,
                                     std::size_t j, std::size_t n, std::uint64_t seed)
{
    if (j < 1) throw UsageError("pointwise error needs j >= 1");
    if (n < 1) throw UsageError("pointwise error needs at least one start");
    const auto exact = make_operator(policy.dt, std::make_shared<AnalyticHamiltonian>(oracle));
    const std::size_t dim = oracle.state_dim();
    std::vector<double> errors(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        auto rng = stream_rng(seed, kPointwiseStream, static_cast<std::uint64_t>(i));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> s(dim), p(dim, 0.0);
        for (auto& v : s) v = normal(rng);
        PhasePoint a(s, p);
        PhasePoint b = a;
        for (std::size_t step_idx = 0; step_idx < j; ++step_idx) {
            a = step(policy, a);
            b = step(exact, b);
        }
        double d = 0.0;
        for (std::size_t q = 0; q < a.dim(); ++q) d += (a.x[q] - b.x[q]) * (a.x[q] - b.x[q]);
        errors[static_cast<std::size_t>(i)] = std::sqrt(d);
    }
    PointwiseStats stats;
    for (double e : errors) stats.mean += e;
    stats.mean /= static_cast<double>(n);
    if (n > 1) {
        double ss = 0.0;
        for (double e : errors) ss += (e - stats.mean) * (e - stats.mean);
        stats.standard_error = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    }
    return stats;
}

double pointwise_error(const DynamicsOperator& policy, const AnalyticHamiltonian& oracle, std::size_t j,
                       std::size_t n, std::uint64_t seed)
{
    return pointwise_error_stats(policy, oracle, j, n, seed).mean;
}

double fit_growth_exponent(const std::vector<double>& cumulative, double fraction)
{
    const std::size_t K = cumulative.size();
    if (K < 2) return 0.0;
    const auto skip = static_cast<std::size_t>(std::floor(static_cast<double>(K) * (1.0 - fraction)));
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t m = 0;
    for (std::size_t i = skip; i < K; ++i) {
        if (!(cumulative[i] > 0.0)) continue;
        const double x = std::log(static_cast<double>(i + 1));
        const double y = std::log(cumulative[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    if (m < 2) return 0.0;
    const double mm = static_cast<double>(m);
    const double denom = mm * sxx - sx * sx;
    if (denom == 0.0) return 0.0;
    return (mm * sxy - sx * sy) / denom;
}

RegretCurve regret_from_gaps(std::vector<double> gaps)
{
    RegretCurve curve;
    curve.gaps = std::move(gaps);
    curve.cumulative.reserve(curve.gaps.size());
    double running = 0.0;
    bool any = false;
    for (auto& g : curve.gaps) {
        if (g < 0.0) {
            g = 0.0;
            ++curve.clipped;
        }
        any = any || g > 0.0;
        running += g;
        curve.cumulative.push_back(running);
    }
    curve.zero_regret = !any;
    curve.exponent = curve.zero_regret ? 0.0 : fit_growth_exponent(curve.cumulative);
    return curve;
}

double oracle_value(const AnalyticHamiltonian& oracle, const PhasePoint& x0, double dt, std::size_t horizon)
{
    constexpr std::size_t kRefine = 100;
    const double tau = dt / static_cast<double>(kRefine);
    const std::size_t steps = horizon * kRefine;
    double value = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const auto x = analytic_flow(oracle, x0, tau * static_cast<double>(i));
        double kinetic = 0.0;
        for (double v : x.p()) kinetic += v * v;
        value += tau * (0.5 * kinetic - oracle.potential(x.s()));
    }
    return value;
}

double policy_value(const DynamicsOperator& policy, const Environment& env, const PhasePoint& x0)
{
    const auto points = rollout(policy, x0, env.spec().horizon);
    std::vector<double> grad(x0.dim());
    const std::size_t n = x0.state_dim();
    double value = 0.0;
    for (const auto& x : points) {
        policy.score->gradient(x.x, grad);
        double action = 0.0;
        for (std::size_t i = 0; i < n; ++i) action += grad[n + i] * grad[n + i];
        value += policy.dt * (0.5 * action - env.cost(x.s()));
    }
    return value;
}

RegretCurve regret_estimate(const TrainHistory& history, const Environment& env)
{
    const auto oracle = env.oracle();
    if (!oracle) throw UsageError("regret needs an environment with an analytic optimal value (quadratic)");
    const auto& spec = env.spec();
    std::vector<DynamicsOperator> ops;
    ops.reserve(history.policies.size());
    for (const auto& net : history.policies) ops.push_back(make_operator(spec.dt, net));

    std::vector<double> gaps(history.episodes.size());
    const auto n = static_cast<std::ptrdiff_t>(gaps.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& ep = history.episodes[static_cast<std::size_t>(i)];
        const auto& op = ops.at(ep.stage - 1);
        gaps[static_cast<std::size_t>(i)] = oracle_value(*oracle, ep.start, spec.dt, spec.horizon)
                                            - policy_value(op, env, ep.start);
    }
    return regret_from_gaps(std::move(gaps));
}

OrderDiagnostics integrator_order(const AnalyticHamiltonian& oracle, const PhasePoint& x0, double dt,
                                  std::size_t halvings)
{
    OrderDiagnostics d;
    const auto field = std::make_shared<AnalyticHamiltonian>(oracle);
    double h = dt;
    for (std::size_t i = 0; i <= halvings; ++i, h *= 0.5) {
        const auto euler = step(make_operator(h, field), x0);
        const auto exact = analytic_flow(oracle, x0, h);
        double e = 0.0;
        for (std::size_t q = 0; q < x0.dim(); ++q) e += (euler.x[q] - exact.x[q]) * (euler.x[q] - exact.x[q]);
        d.step_sizes.push_back(h);
        d.errors.push_back(std::sqrt(e));
    }
    for (std::size_t i = 0; i + 1 < d.errors.size(); ++i) d.ratios.push_back(d.errors[i] / d.errors[i + 1]);
    return d;
}

double energy_drift(const AnalyticHamiltonian& oracle, const PhasePoint& x0, double dt, std::size_t horizon)
{
    const auto op = make_operator(dt, std::make_shared<AnalyticHamiltonian>(oracle));
    const double h0 = oracle.value(x0.x);
    double worst = 0.0;
    for (const auto& x : rollout(op, x0, horizon)) worst = std::max(worst, std::abs(oracle.value(x.x) - h0) / std::abs(h0));
    return worst;
}

void export_report(const EvalReport& report, const std::string& path, ExportFormat format)
{
    auto os = open_out(path);
    if (format == ExportFormat::Csv) {
        os << "episode,terminal_cost,seed\n";
        for (std::size_t i = 0; i < report.terminal_costs.size(); ++i)
            os << (i + 1) << ',' << format_double(report.terminal_costs[i]) << ',' << report.seed << '\n';
    } else {
        nlohmann::json j;
        j["terminal_costs"] = report.terminal_costs;
        j["mean"] = report.mean;
        j["std"] = report.std;
        j["mean_step_costs"] = report.mean_step_costs;
        j["seed"] = report.seed;
        j["failures"] = report.failures;
        os << j.dump(2) << '\n';
    }
    if (!os) throw IoError("write to '" + path + "' failed");
}

EvalReport import_report(const std::string& path, ExportFormat format)
{
    EvalReport r;
    if (format == ExportFormat::Csv) {
        for (const auto& row : read_csv(path, "episode,terminal_cost,seed")) {
            if (row.size() != 3) throw IoError(path + ": malformed row");
            r.terminal_costs.push_back(std::stod(row[1]));
            r.seed = std::stoull(row[2]);
        }
        r.summarize();
        return r;
    }
    const auto j = read_json(path);
    r.terminal_costs = j.at("terminal_costs").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
    r.mean_step_costs = j.at("mean_step_costs").get<std::vector<double>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.failures = j.at("failures").get<std::size_t>();
    return r;
}

void export_regret(const RegretCurve& curve, const std::string& path, ExportFormat format)
{
    auto os = open_out(path);
    if (format == ExportFormat::Csv) {
        os << "episode,gap,cum_regret\n";
        for (std::size_t i = 0; i < curve.gaps.size(); ++i)
            os << (i + 1) << ',' << format_double(curve.gaps[i]) << ',' << format_double(curve.cumulative[i]) << '\n';
    } else {
        nlohmann::json j;
        j["gaps"] = curve.gaps;
        j["cumulative"] = curve.cumulative;
        j["clipped"] = curve.clipped;
        j["exponent"] = curve.exponent;
        j["zero_regret"] = curve.zero_regret;
        os << j.dump(2) << '\n';
    }
    if (!os) throw IoError("write to '" + path + "' failed");
}

RegretCurve import_regret(const std::string& path, ExportFormat format)
{
    if (format == ExportFormat::Csv) {
        std::vector<double> gaps;
        for (const auto& row : read_csv(path, "episode,gap,cum_regret")) {
            if (row.size() != 3) throw IoError(path + ": malformed row");
            gaps.push_back(std::stod(row[1]));
        }
        return regret_from_gaps(std::move(gaps));
    }
    const auto j = read_json(path);
    RegretCurve c;
    c.gaps = j.at("gaps").get<std::vector<double>>();
    c.cumulative = j.at("cumulative").get<std::vector<double>>();
    c.clipped = j.at("clipped").get<std::size_t>();
    c.exponent = j.at("exponent").get<double>();
    c.zero_regret = j.at("zero_regret").get<bool>();
    return c;
}

void export_history(const TrainHistory& history, const std::string& stages_path, const std::string& episodes_path)
{
    auto os = open_out(stages_path);
    os << "stage,samples,delta,memory_size,epochs,final_loss,true_loss_before,true_loss_after,seconds\n";
    for (const auto& s : history.stages) {
        os << s.stage << ',' << s.samples << ',' << format_double(s.delta) << ',' << s.memory_size << ','
           << s.loss_curve.size() << ',' << format_double(s.loss_curve.empty() ? 0.0 : s.loss_curve.back()) << ','
           << format_double(s.true_loss_before) << ',' << format_double(s.true_loss_after) << ','
           << format_double(s.seconds) << '\n';
    }
    if (!os) throw IoError("write to '" + stages_path + "' failed");

    auto es = open_out(episodes_path);
    es << "episode,stage,terminal_cost\n";
    for (const auto& e : history.episodes)
        es << e.episode << ',' << e.stage << ',' << format_double(e.terminal_cost) << '\n';
    if (!es) throw IoError("write to '" + episodes_path + "' failed");
}

}  // namespace dfpo
