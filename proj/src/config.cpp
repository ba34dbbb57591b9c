// SPDX-License-Identifier: Apache-2.0
#include "dfpo/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dfpo/error.hpp"

namespace dfpo {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
std::string join(const std::vector<T>& xs)
{
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_same_v<T, double>)
            out += shortest_double(xs[i]);
        else
            out += std::to_string(xs[i]);
    }
    return out;
}

// Pops keys as they are consumed so leftovers can be reported as unknown.
class Reader {
public:
    Reader(const ConfigEntries& entries, std::string source)
        : source_(std::move(source))
    {
        for (const auto& [k, v] : entries) {
            if (!values_.emplace(k, v).second) fail(k, "is set more than once");
        }
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    [[noreturn]] void fail(const std::string& key, const std::string& why) const
    {
        throw ConfigError(source_ + ": " + key + " " + why);
    }

    std::string take(const std::string& key)
    {
        auto it = values_.find(key);
        if (it == values_.end()) fail(key, "is required");
        std::string v = it->second;
        values_.erase(it);
        return v;
    }

    template <class F>
    void opt(const std::string& key, F&& apply)
    {
        if (!has(key)) return;
        const std::string v = take(key);
        try {
            apply(v);
        } catch (const ConfigError& e) {
            fail(key, std::string("= '") + v + "': " + e.what());
        } catch (const std::exception&) {
            fail(key, "has an invalid value '" + v + "'");
        }
    }

    void finish() const
    {
        if (!values_.empty()) fail(values_.begin()->first, "is not a recognised key");
    }

private:
    std::string source_;
    std::map<std::string, std::string> values_;
};

std::size_t to_size(const std::string& v)
{
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw ConfigError("must be non-negative");
    const auto r = std::stoull(v, &pos);
    if (pos != v.size()) throw ConfigError("trailing characters");
    return static_cast<std::size_t>(r);
}

double to_double(const std::string& v)
{
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError("not a number");
    return out;
}

bool to_bool(const std::string& v)
{
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected true or false");
}

}  // namespace

std::string shortest_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

StageSchedule RunConfig::make_stage_schedule() const
{
    ScheduleParams p = schedule;
    if (p.dim == 0) p.dim = 2 * env.state_dim;
    return make_schedule(schedule_mode, env.horizon, p);
}

ConfigEntries parse_entries(const std::string& text, const std::string& source)
{
    ConfigEntries out;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

RunConfig config_from_entries(const ConfigEntries& entries, const std::string& source)
{
    Reader r(entries, source);
    RunConfig c;

    const std::string kind_text = r.take("env.kind");
    EnvKind kind{};
    try {
        kind = parse_env_kind(kind_text);
    } catch (const std::exception& e) {
        r.fail("env.kind", "= '" + kind_text + "': " + e.what());
    }
    c.env = default_spec(kind);
    if (kind == EnvKind::Quadratic) {
        // no published defaults for this task
        for (const char* key : {"env.steps", "env.dt"})
            if (!r.has(key)) r.fail(key, "is required for env.kind = quadratic");
    }

    r.opt("env.state_dim", [&](const std::string& v) { c.env.state_dim = to_size(v); });
    r.opt("env.steps", [&](const std::string& v) { c.env.horizon = to_size(v); });
    r.opt("env.dt", [&](const std::string& v) { c.env.dt = to_double(v); });
    r.opt("env.control_points", [&](const std::string& v) { c.env.control_points = to_size(v); });
    r.opt("env.grid_size", [&](const std::string& v) { c.env.grid_size = to_size(v); });
    r.opt("env.fine_factor", [&](const std::string& v) { c.env.fine_factor = to_size(v); });
    r.opt("env.matrix", [&](const std::string& v) {
        c.env.quadratic_matrix.clear();
        for (const auto& item : split_list(v)) c.env.quadratic_matrix.push_back(to_double(item));
    });
    r.opt("env.radius_min", [&](const std::string& v) { c.env.radius_min = to_double(v); });
    r.opt("env.radius_max", [&](const std::string& v) { c.env.radius_max = to_double(v); });
    r.opt("env.value_min", [&](const std::string& v) { c.env.value_min = to_double(v); });
    r.opt("env.value_max", [&](const std::string& v) { c.env.value_max = to_double(v); });
    r.opt("score_form", [&](const std::string& v) { c.env.score_form = parse_score_form(v); });

    r.opt("schedule.mode", [&](const std::string& v) { c.schedule_mode = parse_schedule_mode(v); });
    r.opt("schedule.episodes", [&](const std::string& v) { c.schedule.total_episodes = to_size(v); });
    r.opt("schedule.epsilon", [&](const std::string& v) { c.schedule.epsilon = to_double(v); });
    r.opt("schedule.delta", [&](const std::string& v) { c.schedule.delta = to_double(v); });
    r.opt("schedule.constant", [&](const std::string& v) { c.schedule.constant = to_double(v); });
    r.opt("schedule.cap", [&](const std::string& v) { c.schedule.cap = to_size(v); });

    r.opt("net.hidden", [&](const std::string& v) {
        c.net.hidden.clear();
        for (const auto& item : split_list(v)) c.net.hidden.push_back(to_size(item));
        for (auto w : c.net.hidden)
            if (w == 0) throw ConfigError("layer widths must be positive");
    });
    r.opt("net.activation", [&](const std::string& v) { c.net.activation = parse_activation(v); });
    r.opt("net.init_scale", [&](const std::string& v) { c.net.init_scale = to_double(v); });
    r.opt("net.weight_bound", [&](const std::string& v) {
        if (v == "none") {
            c.net.weight_bound.reset();
            return;
        }
        const double b = to_double(v);
        if (!(b > 0.0)) throw ConfigError("must be positive or 'none'");
        c.net.weight_bound = b;
    });

    r.opt("optimizer.lr", [&](const std::string& v) { c.fit.adam.learning_rate = to_double(v); });
    r.opt("optimizer.batch", [&](const std::string& v) { c.fit.adam.batch_size = to_size(v); });
    r.opt("optimizer.beta1", [&](const std::string& v) { c.fit.adam.beta1 = to_double(v); });
    r.opt("optimizer.beta2", [&](const std::string& v) { c.fit.adam.beta2 = to_double(v); });
    r.opt("optimizer.eps", [&](const std::string& v) { c.fit.adam.epsilon = to_double(v); });
    r.opt("optimizer.epochs", [&](const std::string& v) { c.fit.epochs = to_size(v); });
    r.opt("optimizer.plateau", [&](const std::string& v) { c.fit.plateau = to_double(v); });
    r.opt("optimizer.smooth_l1_beta", [&](const std::string& v) { c.fit.beta = to_double(v); });
    r.opt("optimizer.warm_start", [&](const std::string& v) { c.fit.warm_start = to_bool(v); });

    r.opt("seed", [&](const std::string& v) { c.seed = std::stoull(v); });
    r.opt("out_dir", [&](const std::string& v) { c.out_dir = v; });
    r.finish();

    // whole-config checks, reported against the field that has to change
    try {
        c.env.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    if (c.env.horizon < 2) r.fail("env.steps", "must be at least 2");
    if (!(c.fit.adam.learning_rate > 0.0)) r.fail("optimizer.lr", "must be positive");
    if (c.fit.adam.batch_size == 0) r.fail("optimizer.batch", "must be positive");
    if (c.fit.epochs == 0) r.fail("optimizer.epochs", "must be positive");
    if (!(c.fit.beta > 0.0)) r.fail("optimizer.smooth_l1_beta", "must be positive");
    if (c.out_dir.empty()) r.fail("out_dir", "must not be empty");
    try {
        (void)c.make_stage_schedule();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": schedule: " + e.what());
    }
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    return config_from_entries(parse_entries(buf.str(), path), path);
}

ConfigEntries config_entries(const RunConfig& c)
{
    ConfigEntries e;
    e.emplace_back("env.kind", to_string(c.env.kind));
    e.emplace_back("env.state_dim", std::to_string(c.env.state_dim));
    e.emplace_back("env.steps", std::to_string(c.env.horizon));
    e.emplace_back("env.dt", shortest_double(c.env.dt));
    switch (c.env.kind) {
    case EnvKind::Surface:
        e.emplace_back("env.control_points", std::to_string(c.env.control_points));
        e.emplace_back("env.radius_min", shortest_double(c.env.radius_min));
        e.emplace_back("env.radius_max", shortest_double(c.env.radius_max));
        break;
    case EnvKind::Grid:
        e.emplace_back("env.grid_size", std::to_string(c.env.grid_size));
        e.emplace_back("env.fine_factor", std::to_string(c.env.fine_factor));
        e.emplace_back("env.value_min", shortest_double(c.env.value_min));
        e.emplace_back("env.value_max", shortest_double(c.env.value_max));
        break;
    case EnvKind::Quadratic:
        if (!c.env.quadratic_matrix.empty()) e.emplace_back("env.matrix", join(c.env.quadratic_matrix));
        break;
    }
    e.emplace_back("score_form", to_string(c.env.score_form));
    e.emplace_back("schedule.mode", to_string(c.schedule_mode));
    e.emplace_back("schedule.episodes", std::to_string(c.schedule.total_episodes));
    e.emplace_back("schedule.epsilon", shortest_double(c.schedule.epsilon));
    e.emplace_back("schedule.delta", shortest_double(c.schedule.delta));
    e.emplace_back("schedule.constant", shortest_double(c.schedule.constant));
    e.emplace_back("schedule.cap", std::to_string(c.schedule.cap));
    e.emplace_back("net.hidden", join(c.net.hidden));
    e.emplace_back("net.activation", to_string(c.net.activation));
    e.emplace_back("net.init_scale", shortest_double(c.net.init_scale));
    e.emplace_back("net.weight_bound", c.net.weight_bound ? shortest_double(*c.net.weight_bound) : "none");
    e.emplace_back("optimizer.lr", shortest_double(c.fit.adam.learning_rate));
    e.emplace_back("optimizer.batch", std::to_string(c.fit.adam.batch_size));
    e.emplace_back("optimizer.beta1", shortest_double(c.fit.adam.beta1));
    e.emplace_back("optimizer.beta2", shortest_double(c.fit.adam.beta2));
    e.emplace_back("optimizer.eps", shortest_double(c.fit.adam.epsilon));
    e.emplace_back("optimizer.epochs", std::to_string(c.fit.epochs));
    e.emplace_back("optimizer.plateau", shortest_double(c.fit.plateau));
    e.emplace_back("optimizer.smooth_l1_beta", shortest_double(c.fit.beta));
    e.emplace_back("optimizer.warm_start", c.fit.warm_start ? "true" : "false");
    e.emplace_back("seed", std::to_string(c.seed));
    e.emplace_back("out_dir", c.out_dir);
    return e;
}

std::string render_entries(const ConfigEntries& entries)
{
    std::string out;
    for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
    return out;
}

}  // namespace dfpo
