// SPDX-License-Identifier: Apache-2.0
#include "dfpo/diffcore.hpp"

#include <algorithm>
#include <cmath>

#include "dfpo/error.hpp"

namespace dfpo {

namespace {

// Samples per reduction chunk in grad_params. Fixed so the floating-point
// summation order is independent of the number of threads.
constexpr std::size_t kChunk = 8;

double activate(Activation act, double z)
{
    switch (act) {
    case Activation::Tanh:
        return std::tanh(z);
    case Activation::Softplus:
        // log(1 + e^z) without overflow
        return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }
    return 0.0;
}

// Derivative expressed through the pre-activation z and activation value a.
double activate_derivative(Activation act, double z, double a)
{
    switch (act) {
    case Activation::Tanh:
        return 1.0 - a * a;
    case Activation::Softplus:
        return 1.0 / (1.0 + std::exp(-z));
    }
    return 0.0;
}

void check_input(const ScoreNet& net, std::span<const double> x)
{
    if (net.widths().empty())
        throw ShapeError("score net has no layers");
    if (x.size() != net.input_dim())
        throw ShapeError("input has length " + std::to_string(x.size()) + ", network expects "
                         + std::to_string(net.input_dim()));
}

// Pre-activations and activations of one forward pass. acts[0] is the input.
struct Tape {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> acts;

    explicit Tape(const ScoreNet& net)
        : pre(net.num_layers()), acts(net.num_layers() + 1)
    {
        const auto& w = net.widths();
        for (std::size_t l = 0; l < net.num_layers(); ++l) pre[l].resize(w[l + 1]);
        for (std::size_t l = 0; l <= net.num_layers(); ++l) acts[l].resize(w[l]);
    }
};

double run_forward(const ScoreNet& net, std::span<const double> x, Tape& tape)
{
    const auto& w = net.widths();
    const auto params = net.parameters();
    std::copy(x.begin(), x.end(), tape.acts[0].begin());
    const std::size_t last = net.num_layers() - 1;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const std::size_t in = w[l];
        const std::size_t out = w[l + 1];
        const double* W = params.data() + net.weight_offset(l);
        const double* b = params.data() + net.bias_offset(l);
        const auto& a_in = tape.acts[l];
        auto& z = tape.pre[l];
        auto& a_out = tape.acts[l + 1];
        for (std::size_t i = 0; i < out; ++i) {
            double acc = b[i];
            const double* row = W + i * in;
            for (std::size_t j = 0; j < in; ++j) acc += row[j] * a_in[j];
            z[i] = acc;
            a_out[i] = (l == last) ? acc : activate(net.activation(), acc);
        }
    }
    return tape.acts.back()[0];
}

// Reverse sweep seeded with d(out) = seed. Accumulates parameter gradients
// into param_grad (if non-empty) and writes the input gradient into
// input_grad (if non-empty).
void run_backward(const ScoreNet& net, const Tape& tape, double seed, std::span<double> param_grad,
                  std::span<double> input_grad)
{
    const auto& w = net.widths();
    const auto params = net.parameters();
    std::vector<double> delta{seed};
    std::vector<double> delta_in;
    for (std::size_t l = net.num_layers(); l-- > 0;) {
        const std::size_t in = w[l];
        const std::size_t out = w[l + 1];
        const double* W = params.data() + net.weight_offset(l);
        const auto& a_in = tape.acts[l];
        if (!param_grad.empty()) {
            double* gW = param_grad.data() + net.weight_offset(l);
            double* gb = param_grad.data() + net.bias_offset(l);
            for (std::size_t i = 0; i < out; ++i) {
                const double d = delta[i];
                gb[i] += d;
                double* row = gW + i * in;
                for (std::size_t j = 0; j < in; ++j) row[j] += d * a_in[j];
            }
        }
        if (l == 0 && input_grad.empty()) break;
        delta_in.assign(in, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            const double d = delta[i];
            const double* row = W + i * in;
            for (std::size_t j = 0; j < in; ++j) delta_in[j] += row[j] * d;
        }
        if (l == 0) {
            std::copy(delta_in.begin(), delta_in.end(), input_grad.begin());
            break;
        }
        const auto& z = tape.pre[l - 1];
        for (std::size_t j = 0; j < in; ++j)
            delta_in[j] *= activate_derivative(net.activation(), z[j], a_in[j]);
        delta.swap(delta_in);
    }
}

void check_batch(const ScoreNet& net, std::span<const LabeledSample> batch)
{
    if (batch.empty())
        throw UsageError("grad_params: empty batch");
    for (const auto& s : batch) check_input(net, s.x);
}

// Returns the sample's unscaled loss.
double accumulate_sample(const ScoreNet& net, const LabeledSample& sample, double beta, double scale,
                         Tape& tape, std::span<double> out)
{
    const double residual = run_forward(net, sample.x, tape) - sample.y;
    const double slope = smooth_l1_derivative(residual, beta) * scale;
    if (slope != 0.0) run_backward(net, tape, slope, out, {});
    return smooth_l1(residual, beta);
}

}  // namespace

std::string to_string(Activation act)
{
    return act == Activation::Tanh ? "tanh" : "softplus";
}

Activation parse_activation(const std::string& name)
{
    if (name == "tanh") return Activation::Tanh;
    if (name == "softplus") return Activation::Softplus;
    throw ConfigError("unknown activation '" + name + "' (expected tanh or softplus)");
}

ScoreNet::ScoreNet(std::vector<std::size_t> widths, Activation act)
    : widths_(std::move(widths)), activation_(act)
{
    if (widths_.size() < 2)
        throw ShapeError("score net needs at least an input and an output width");
    if (widths_.back() != 1)
        throw ShapeError("score net output width must be 1");
    for (auto w : widths_)
        if (w == 0) throw ShapeError("score net layer widths must be positive");
    std::size_t total = 0;
    offsets_.resize(num_layers());
    for (std::size_t l = 0; l < num_layers(); ++l) {
        offsets_[l] = total;
        total += widths_[l + 1] * widths_[l] + widths_[l + 1];
    }
    params_.assign(total, 0.0);
}

ScoreNet ScoreNet::random(std::vector<std::size_t> widths, Activation act, std::mt19937_64& rng,
                          double output_scale)
{
    ScoreNet net(std::move(widths), act);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(net.widths_[l]));
        const double scale = (l + 1 == net.num_layers()) ? output_scale : 1.0;
        std::uniform_real_distribution<double> dist(-bound, bound);
        const std::size_t begin = net.offsets_[l];
        const std::size_t end = net.bias_offset(l) + net.widths_[l + 1];
        for (std::size_t i = begin; i < end; ++i) net.params_[i] = scale * dist(rng);
    }
    return net;
}

std::vector<std::vector<std::size_t>> ScoreNet::parameter_shapes() const
{
    std::vector<std::vector<std::size_t>> shapes;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        shapes.push_back({widths_[l + 1], widths_[l]});
        shapes.push_back({widths_[l + 1]});
    }
    return shapes;
}

void ScoreNet::clip_to_bound()
{
    if (!weight_bound) return;
    const double b = *weight_bound;
    for (auto& v : params_) v = std::clamp(v, -b, b);
}

bool ScoreNet::all_finite() const
{
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

double forward(const ScoreNet& net, std::span<const double> x)
{
    check_input(net, x);
    Tape tape(net);
    return run_forward(net, x, tape);
}

std::vector<double> grad_input(const ScoreNet& net, std::span<const double> x)
{
    std::vector<double> g(net.widths().empty() ? 0 : net.input_dim());
    value_and_grad_input(net, x, g);
    return g;
}

double value_and_grad_input(const ScoreNet& net, std::span<const double> x, std::span<double> grad)
{
    check_input(net, x);
    if (grad.size() != x.size())
        throw ShapeError("gradient buffer length does not match input");
    Tape tape(net);
    const double value = run_forward(net, x, tape);
    run_backward(net, tape, 1.0, {}, grad);
    return value;
}

double smooth_l1(double residual, double beta)
{
    const double a = std::abs(residual);
    return a < beta ? 0.5 * residual * residual / beta : a - 0.5 * beta;
}

double smooth_l1_derivative(double residual, double beta)
{
    if (std::abs(residual) < beta) return residual / beta;
    return residual > 0.0 ? 1.0 : -1.0;
}

double mean_loss(const ScoreNet& net, std::span<const LabeledSample> batch, double beta)
{
    check_batch(net, batch);
    Tape tape(net);
    double total = 0.0;
    for (const auto& s : batch) total += smooth_l1(run_forward(net, s.x, tape) - s.y, beta);
    return total / static_cast<double>(batch.size());
}

std::vector<double> grad_params(const ScoreNet& net, std::span<const LabeledSample> batch, double beta,
                                double* loss)
{
    check_batch(net, batch);
    const std::size_t n = batch.size();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    const double scale = 1.0 / static_cast<double>(n);
    const std::size_t P = net.parameter_count();
    std::vector<double> partial(chunks * P, 0.0);
    std::vector<double> partial_loss(chunks, 0.0);

#pragma omp parallel for schedule(static) if (chunks > 1)
    for (std::size_t c = 0; c < chunks; ++c) {
        Tape tape(net);
        std::span<double> out(partial.data() + c * P, P);
        const std::size_t end = std::min(n, (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i)
            partial_loss[c] += accumulate_sample(net, batch[i], beta, scale, tape, out);
    }

    std::vector<double> grads(partial.begin(), partial.begin() + static_cast<std::ptrdiff_t>(P));
    for (std::size_t c = 1; c < chunks; ++c)
        for (std::size_t k = 0; k < P; ++k) grads[k] += partial[c * P + k];
    if (loss) {
        double total = 0.0;
        for (double l : partial_loss) total += l;
        *loss = total * scale;
    }
    return grads;
}

std::vector<double> grad_params_serial(const ScoreNet& net, std::span<const LabeledSample> batch,
                                       double beta, double* loss)
{
    check_batch(net, batch);
    const double scale = 1.0 / static_cast<double>(batch.size());
    std::vector<double> grads(net.parameter_count(), 0.0);
    Tape tape(net);
    double total = 0.0;
    for (const auto& s : batch) total += accumulate_sample(net, s, beta, scale, tape, grads);
    if (loss) *loss = total * scale;
    return grads;
}

OptimizerState::OptimizerState(const AdamConfig& cfg, std::size_t parameter_count)
    : config(cfg), first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0)
{
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("optimizer learning rate must be positive");
    if (cfg.batch_size == 0) throw ConfigError("optimizer batch size must be positive");
}

void opt_step(ScoreNet& net, OptimizerState& state, std::span<const double> grads)
{
    const std::size_t P = net.parameter_count();
    if (grads.size() != P || state.first_moment.size() != P || state.second_moment.size() != P)
        throw ShapeError("optimizer state or gradient does not match the network parameters");
    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(c.beta1, t);
    const double correct2 = 1.0 - std::pow(c.beta2, t);
    auto params = net.parameters();
    for (std::size_t i = 0; i < P; ++i) {
        const double g = grads[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g * g;
        if (m == 0.0) continue;
        const double mhat = m / correct1;
        const double vhat = v / correct2;
        params[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
    net.clip_to_bound();
}

double finite_diff_check(const ScoreNet& net, std::span<const double> x, double h)
{
    const auto analytic = grad_input(net, x);
    std::vector<double> probe(x.begin(), x.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = forward(net, probe);
        probe[i] = orig - h;
        const double down = forward(net, probe);
        probe[i] = orig;
        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max(std::abs(analytic[i]), std::abs(fd));
        if (scale < 1e-12) continue;
        worst = std::max(worst, std::abs(analytic[i] - fd) / scale);
    }
    return worst;
}

}  // namespace dfpo
