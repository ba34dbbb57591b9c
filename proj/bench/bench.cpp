// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP kernel timings for query, eval_terminal and
// grad_params. Each pair is also checked for agreement.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "CLI11.hpp"
#include "dfpo/environments.hpp"
#include "dfpo/evalharness.hpp"
#include "dfpo/trainer.hpp"

using namespace dfpo;

namespace {

double best_of(std::size_t reps, const std::function<void()>& fn)
{
    double best = 1e300;
    for (std::size_t r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, double serial, double parallel, bool agree)
{
    std::printf("%-28s %12.3f %12.3f %8.2fx  %s\n", name, 1e3 * serial, 1e3 * parallel, serial / parallel,
                agree ? "agree" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Serial vs OpenMP kernel benchmark"};
    std::size_t reps = 3, starts = 256, batch = 8192;
    app.add_option("--reps", reps, "Repetitions (best time is reported)")->capture_default_str();
    app.add_option("--starts", starts, "Rollouts for query and eval")->capture_default_str();
    app.add_option("--batch", batch, "Samples for grad_params")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-28s %12s %12s %9s\n", "kernel", "serial ms", "openmp ms", "speedup");

    for (const auto kind : {EnvKind::Surface, EnvKind::Grid}) {
        const auto spec = default_spec(kind);
        const Environment env(spec);
        NetConfig net_cfg;
        const auto net = initial_score_net(spec, net_cfg, 1);
        const auto policy = make_operator(spec.dt, net);
        const auto xs = stage_starts(env, 1, starts, 1);

        QueryResult qs, qp;
        const double ts = best_of(reps, [&] { qs = query_serial(env, policy, xs); });
        const double tp = best_of(reps, [&] { qp = query(env, policy, xs); });
        bool same = qs.trajectories.size() == qp.trajectories.size();
        for (std::size_t i = 0; same && i < qs.trajectories.size(); ++i)
            same = qs.trajectories[i].scores == qp.trajectories[i].scores;
        row(("query/" + to_string(kind)).c_str(), ts, tp, same);

        EvalReport es, ep;
        const double es_t = best_of(reps, [&] { es = eval_terminal_serial(policy, env, starts, 3); });
        const double ep_t = best_of(reps, [&] { ep = eval_terminal(policy, env, starts, 3); });
        row(("eval_terminal/" + to_string(kind)).c_str(), es_t, ep_t, es.terminal_costs == ep.terminal_costs);
    }

    {
        std::mt19937_64 rng(5);
        const auto net = ScoreNet::random({64, 64, 64, 1}, Activation::Tanh, rng);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<LabeledSample> data(batch);
        for (auto& s : data) {
            s.x.resize(64);
            for (auto& v : s.x) v = normal(rng);
            s.y = normal(rng);
        }
        std::vector<double> gs, gp;
        const double ts = best_of(reps, [&] { gs = grad_params_serial(net, data, 1.0); });
        const double tp = best_of(reps, [&] { gp = grad_params(net, data, 1.0); });
        double diff = 0.0;
        for (std::size_t i = 0; i < gs.size(); ++i) diff = std::max(diff, std::abs(gs[i] - gp[i]));
        row("grad_params/64-64-64-1", ts, tp, diff < 1e-12);
    }
    return 0;
}
