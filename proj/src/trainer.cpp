// SPDX-License-Identifier: Apache-2.0
#include "dfpo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dfpo/binary_io.hpp"
#include "dfpo/error.hpp"
#include "dfpo/rng.hpp"

namespace dfpo {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Stream tags for stage_rng so per-stage draws never collide.
constexpr std::uint64_t kShuffleStream = ~std::uint64_t{0};
constexpr std::uint64_t kInitStream = 0xfeed;

double true_score_loss(const ScoreNet& net, std::span<const LabeledSample> data, double beta)
{
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& s : data) {
        if (s.provenance != Provenance::TrueScore) continue;
        total += smooth_l1(forward(net, s.x) - s.y, beta);
        ++count;
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

std::string to_string(ScheduleMode mode)
{
    switch (mode) {
    case ScheduleMode::Budget:
        return "budget";
    case ScheduleMode::TheoryGeneral:
        return "theory_general";
    case ScheduleMode::TheorySpecial:
        return "theory_special";
    }
    return "?";
}

ScheduleMode parse_schedule_mode(const std::string& name)
{
    if (name == "budget") return ScheduleMode::Budget;
    if (name == "theory_general") return ScheduleMode::TheoryGeneral;
    if (name == "theory_special") return ScheduleMode::TheorySpecial;
    throw ConfigError("schedule.mode: unknown mode '" + name + "' (expected budget, theory_general or theory_special)");
}

std::size_t StageSchedule::total_episodes() const
{
    return std::accumulate(samples.begin(), samples.end(), std::size_t{0});
}

StageSchedule make_schedule(ScheduleMode mode, std::size_t horizon, const ScheduleParams& params)
{
    if (horizon < 2) throw ConfigError("schedule needs at least 2 steps per episode");
    const std::size_t stages = horizon - 1;
    StageSchedule sched;
    sched.mode = mode;

    if (mode == ScheduleMode::Budget) {
        if (params.total_episodes < stages)
            throw ConfigError("schedule.episodes (" + std::to_string(params.total_episodes)
                              + ") is smaller than the number of stages (" + std::to_string(stages) + ")");
        const std::size_t per = (params.total_episodes + stages - 1) / stages;
        sched.samples.assign(stages, per);
    } else {
        if (!(params.epsilon > 0.0)) throw ConfigError("schedule.epsilon must be positive");
        if (!(params.constant > 0.0)) throw ConfigError("schedule.constant must be positive");
        double exponent = 6.0;
        if (mode == ScheduleMode::TheoryGeneral) {
            if (params.dim == 0) throw ConfigError("schedule.dim must be positive for theory_general");
            exponent = 2.0 * static_cast<double>(params.dim) + 4.0;
        }
        const double raw = std::ceil(params.constant * std::pow(params.epsilon, -exponent));
        std::size_t n = 0;
        if (!std::isfinite(raw) || raw > static_cast<double>(params.cap)) {
            n = params.cap;
            sched.warnings.push_back("theory schedule needs " + std::to_string(raw)
                                     + " samples per stage; capped at " + std::to_string(params.cap));
        } else {
            n = std::max<std::size_t>(1, static_cast<std::size_t>(raw));
        }
        sched.samples.assign(stages, n);
    }

    if (!(params.delta > 0.0) || params.delta >= 1.0) throw ConfigError("schedule.delta must lie in (0, 1)");
    sched.delta.resize(stages);
    for (std::size_t k = 1; k <= stages; ++k)
        sched.delta[k - 1] = params.delta / std::pow(3.0, static_cast<double>(horizon - k));
    return sched;
}

std::size_t expected_memory_size(const StageSchedule& schedule, std::size_t k)
{
    std::size_t total = 0;
    for (std::size_t j = 1; j <= k; ++j) total += schedule.N(j) * samples_per_start(j);
    return total;
}

std::span<const LabeledSample> ReplayMemory::stage_samples(std::size_t k) const
{
    const std::size_t begin = k >= 2 ? stage_end_.at(k - 2) : 0;
    const std::size_t end = stage_end_.at(k - 1);
    return std::span<const LabeledSample>(samples_).subspan(begin, end - begin);
}

void ReplayMemory::append_stage(std::vector<LabeledSample> batch)
{
    samples_.reserve(samples_.size() + batch.size());
    std::move(batch.begin(), batch.end(), std::back_inserter(samples_));
    stage_end_.push_back(samples_.size());
}

void ReplayMemory::save(const std::string& path) const
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write("DFPOMEM1", 8);
    const std::size_t dim = samples_.empty() ? 0 : samples_.front().x.size();
    binary::put_u64(os, samples_.size());
    binary::put_u64(os, dim);
    binary::put_u64(os, stage_end_.size());
    for (auto e : stage_end_) binary::put_u64(os, e);
    for (const auto& s : samples_) {
        for (double v : s.x) binary::put_f64(os, v);
        binary::put_f64(os, s.y);
        binary::put_u64(os, static_cast<std::uint64_t>(s.stage));
        binary::put_u64(os, s.provenance == Provenance::TrueScore ? 0 : 1);
    }
    if (!os) throw IoError("write to '" + path + "' failed");
}

ReplayMemory ReplayMemory::load(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[8] = {};
    if (!is.read(magic, 8) || std::string(magic, 8) != "DFPOMEM1")
        throw ChecksumError(path + ": not a replay memory file");
    ReplayMemory mem;
    const auto count = binary::get_u64(is, path);
    const auto dim = binary::get_u64(is, path);
    const auto stages = binary::get_u64(is, path);
    for (std::uint64_t i = 0; i < stages; ++i) mem.stage_end_.push_back(binary::get_u64(is, path));
    if (!mem.stage_end_.empty() && mem.stage_end_.back() != count)
        throw ChecksumError(path + ": stage index does not match sample count");
    mem.samples_.resize(count);
    for (auto& s : mem.samples_) {
        s.x.resize(dim);
        for (auto& v : s.x) v = binary::get_f64(is, path);
        s.y = binary::get_f64(is, path);
        s.stage = static_cast<int>(binary::get_u64(is, path));
        s.provenance = binary::get_u64(is, path) == 0 ? Provenance::TrueScore : Provenance::Bootstrapped;
    }
    return mem;
}

std::vector<std::size_t> NetConfig::widths(std::size_t input_dim) const
{
    std::vector<std::size_t> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(1);
    return w;
}

StageError::StageError(std::size_t stage, const std::string& what)
    : Error("stage " + std::to_string(stage) + ": " + what), stage_(stage)
{
}

std::vector<PhasePoint> stage_starts(const Environment& env, std::size_t k, std::size_t count, std::uint64_t seed)
{
    std::vector<PhasePoint> starts(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto rng = stream_rng(seed, k, i);
        starts[i] = env.sample_rho0(rng);
    }
    return starts;
}

std::vector<LabeledSample> label_stage(std::size_t k, const QueryResult& result, const ScoreNet& prev_net)
{
    if (k < 1) throw UsageError("stage index starts at 1");
    std::vector<LabeledSample> out;
    out.reserve(result.trajectories.size() * samples_per_start(k));
    const int stage = static_cast<int>(k);
    for (const auto& traj : result.trajectories) {
        if (traj.points.size() < k) throw UsageError("trajectory shorter than the stage index");
        // true label at position k-1
        out.push_back({traj.points[k - 1].x, traj.scores[k - 1], stage, Provenance::TrueScore});
        // bootstrapped labels at positions 1..k-2 from the previous score
        for (std::size_t j = 1; j + 2 <= k; ++j)
            out.push_back({traj.points[j].x, forward(prev_net, traj.points[j].x), stage, Provenance::Bootstrapped});
    }
    return out;
}

std::vector<double> fit(ScoreNet& net, std::span<const LabeledSample> data, const FitConfig& cfg,
                        std::uint64_t shuffle_seed)
{
    if (data.empty()) throw UsageError("fit: no training data");
    OptimizerState state(cfg.adam, net.parameter_count());
    std::mt19937_64 rng(shuffle_seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<LabeledSample> batch;
    std::vector<double> curve;
    const std::size_t bs = cfg.adam.batch_size;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
            double loss = 0.0;
            const auto grads = grad_params(net, batch, cfg.beta, &loss);
            opt_step(net, state, grads);
            epoch_loss += loss * static_cast<double>(end - start);
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss) || !net.all_finite())
            throw NumericalError("training diverged at epoch " + std::to_string(epoch + 1));
        const bool plateau = !curve.empty() && std::abs(curve.back() - epoch_loss) < cfg.plateau;
        curve.push_back(epoch_loss);
        if (plateau) break;
    }
    return curve;
}

StageOutput run_stage(std::size_t k, const ScoreNet& prev_net, ReplayMemory& memory, const Environment& env,
                      const StageSchedule& schedule, const NetConfig& net_cfg, const FitConfig& fit_cfg,
                      std::uint64_t seed)
{
    if (k < 1 || k > schedule.stages())
        throw UsageError("stage " + std::to_string(k) + " outside 1.." + std::to_string(schedule.stages()));
    if (memory.stages_completed() != k - 1)
        throw UsageError("replay memory holds " + std::to_string(memory.stages_completed())
                         + " stages; expected " + std::to_string(k - 1));
    const auto t0 = Clock::now();
    const std::size_t n = schedule.N(k);
    const auto starts = stage_starts(env, k, n, seed);

    const auto policy = make_operator(env.spec().dt, prev_net);
    const auto result = query(env, policy, starts);
    if (!result.ok()) {
        for (std::size_t i = 0; i < result.failures.size(); ++i)
            if (result.failures[i])
                throw StageError(k, "episode " + std::to_string(i) + " failed: " + *result.failures[i]);
    }

    StageOutput out;
    std::size_t episode_base = 0;
    for (std::size_t j = 1; j < k; ++j) episode_base += schedule.N(j);
    out.episodes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& last = result.trajectories[i].points.back();
        out.episodes.push_back({episode_base + i + 1, k, starts[i], env.cost(last.s())});
    }

    // Memory changes only once the labels are all built.
    memory.append_stage(label_stage(k, result, prev_net));

    ScoreNet net = prev_net;
    if (!fit_cfg.warm_start) {
        net = initial_score_net(env.spec(), net_cfg, stream_rng(seed, k, kInitStream)());
    }
    net.weight_bound = net_cfg.weight_bound;

    auto& rec = out.record;
    rec.stage = k;
    rec.samples = n;
    rec.delta = schedule.delta.at(k - 1);
    rec.memory_size = memory.size();
    rec.true_loss_before = true_score_loss(net, memory.samples(), fit_cfg.beta);
    rec.loss_curve = fit(net, memory.samples(), fit_cfg, stream_rng(seed, k, kShuffleStream)());
    rec.true_loss_after = true_score_loss(net, memory.samples(), fit_cfg.beta);
    rec.seconds = seconds_since(t0);
    out.net = std::move(net);
    return out;
}

ScoreNet initial_score_net(const EnvSpec& spec, const NetConfig& net_cfg, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    auto net = ScoreNet::random(net_cfg.widths(2 * spec.state_dim), net_cfg.activation, rng, net_cfg.init_scale);
    net.weight_bound = net_cfg.weight_bound;
    net.clip_to_bound();
    return net;
}

TrainResult train(const EnvSpec& spec, const StageSchedule& schedule, const NetConfig& net_cfg,
                  const FitConfig& fit_cfg, std::uint64_t seed, const StageCallback& on_stage,
                  std::optional<ResumeState> resume)
{
    const auto t0 = Clock::now();
    Environment env(spec);
    if (schedule.stages() + 1 != spec.horizon)
        throw ConfigError("schedule has " + std::to_string(schedule.stages()) + " stages but env.steps is "
                          + std::to_string(spec.horizon));

    TrainResult result;
    result.net = initial_score_net(spec, net_cfg, stream_rng(seed, 0, kInitStream)());
    result.history.policies.push_back(result.net);
    std::size_t first = 1;
    if (resume) {
        if (resume->stage > schedule.stages()) throw UsageError("resume stage beyond the schedule");
        if (resume->memory.stages_completed() != resume->stage)
            throw UsageError("resume memory does not match the resume stage");
        if (resume->net.input_dim() != env.phase_dim())
            throw ShapeError("resume network does not match the environment dimension");
        result.net = std::move(resume->net);
        result.memory = std::move(resume->memory);
        first = resume->stage + 1;
        // snapshots of stages finished before the resume are not available
        result.history.policies.assign(resume->stage, ScoreNet{});
        result.history.policies.push_back(result.net);
    }

    for (std::size_t k = first; k <= schedule.stages(); ++k) {
        StageOutput stage;
        try {
            stage = run_stage(k, result.net, result.memory, env, schedule, net_cfg, fit_cfg, seed);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(k, e.what());
        }
        result.net = std::move(stage.net);
        result.history.stages.push_back(std::move(stage.record));
        std::move(stage.episodes.begin(), stage.episodes.end(), std::back_inserter(result.history.episodes));
        result.history.policies.push_back(result.net);
        result.history.seconds = seconds_since(t0);
        if (on_stage) on_stage(k, result.net, result);
    }
    result.history.seconds = seconds_since(t0);
    return result;
}

double audit_true_labels(const ReplayMemory& memory, const Environment& env)
{
    double worst = 0.0;
    for (const auto& s : memory.samples()) {
        if (s.provenance != Provenance::TrueScore) continue;
        const double truth = env.score(PhasePoint::from_flat(s.x));
        const double scale = std::max(std::abs(truth), 1e-300);
        worst = std::max(worst, std::abs(truth - s.y) / scale);
    }
    return worst;
}

double audit_bootstrapped_labels(const ReplayMemory& memory, const TrainHistory& history)
{
    double worst = 0.0;
    for (const auto& s : memory.samples()) {
        if (s.provenance != Provenance::Bootstrapped) continue;
        const auto idx = static_cast<std::size_t>(s.stage) - 1;
        if (idx >= history.policies.size()) throw UsageError("no policy snapshot for bootstrapped sample");
        worst = std::max(worst, std::abs(forward(history.policies[idx], s.x) - s.y));
    }
    return worst;
}

bool audit_memory_sizes(const TrainHistory& history, const StageSchedule& schedule)
{
    for (const auto& rec : history.stages)
        if (rec.memory_size != expected_memory_size(schedule, rec.stage)) return false;
    return true;
}

}  // namespace dfpo
