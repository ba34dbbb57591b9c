// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dfpo {

enum class Activation { Tanh, Softplus };

std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

/// Scalar-output feed-forward network g(x) used as the learned score.
///
/// Parameters live in one flat buffer. Layer l contributes a row-major
/// weight block of shape (widths[l+1], widths[l]) followed by a bias block
/// of length widths[l+1]. Hidden layers apply the activation; the output
/// layer is affine.
class ScoreNet {
public:
    ScoreNet() = default;

    /// Zero-initialised network. widths.front() is the input width and
    /// widths.back() must be 1.
    explicit ScoreNet(std::vector<std::size_t> widths, Activation act = Activation::Tanh);

    /// Uniform fan-in initialisation U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    /// The output layer is additionally multiplied by output_scale.
    static ScoreNet random(std::vector<std::size_t> widths, Activation act, std::mt19937_64& rng,
                           double output_scale = 1.0);

    std::size_t input_dim() const { return widths_.front(); }
    std::size_t num_layers() const { return widths_.size() - 1; }
    const std::vector<std::size_t>& widths() const { return widths_; }
    Activation activation() const { return activation_; }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }

    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const
    {
        return offsets_[layer] + widths_[layer + 1] * widths_[layer];
    }

    /// Shapes of every parameter block in storage order, e.g. {{64,32},{64},{64,64},...}.
    std::vector<std::vector<std::size_t>> parameter_shapes() const;

    /// Optional per-entry magnitude bound enforced by clip_to_bound().
    std::optional<double> weight_bound;
    void clip_to_bound();

    bool all_finite() const;

    friend bool operator==(const ScoreNet&, const ScoreNet&) = default;

private:
    std::vector<std::size_t> widths_;
    Activation activation_ = Activation::Tanh;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

enum class Provenance { TrueScore, Bootstrapped };

struct LabeledSample {
    std::vector<double> x;
    double y = 0.0;
    int stage = 1;
    Provenance provenance = Provenance::TrueScore;
};

double forward(const ScoreNet& net, std::span<const double> x);

/// Gradient of g with respect to its input, by a reverse sweep.
std::vector<double> grad_input(const ScoreNet& net, std::span<const double> x);

/// Forward value and input gradient from a single pass.
double value_and_grad_input(const ScoreNet& net, std::span<const double> x, std::span<double> grad);

double smooth_l1(double residual, double beta);
double smooth_l1_derivative(double residual, double beta);

/// Mean smooth-L1 loss of (forward(x) - y) over a batch.
double mean_loss(const ScoreNet& net, std::span<const LabeledSample> batch, double beta);

/// Gradient of the mean smooth-L1 loss with respect to every parameter,
/// laid out like ScoreNet::parameters(). Samples are reduced in fixed-size
/// chunks across OpenMP threads; the summation order does not depend on the
/// thread count. If loss is non-null it receives the mean loss at the
/// current parameters.
std::vector<double> grad_params(const ScoreNet& net, std::span<const LabeledSample> batch, double beta,
                                double* loss = nullptr);

/// Reference implementation: one sample at a time, in order.
std::vector<double> grad_params_serial(const ScoreNet& net, std::span<const LabeledSample> batch,
                                       double beta, double* loss = nullptr);

struct AdamConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment accumulators for the adaptive first-order update.
struct OptimizerState {
    AdamConfig config;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;

    OptimizerState() = default;
    OptimizerState(const AdamConfig& cfg, std::size_t parameter_count);
};

/// One bias-corrected adaptive-moment update. Zero gradients leave the
/// parameters untouched.
void opt_step(ScoreNet& net, OptimizerState& state, std::span<const double> grads);

/// Max over coordinates of |analytic - central difference| / max(|analytic|, |fd|).
/// Coordinates where both sides are below 1e-12 contribute 0.
double finite_diff_check(const ScoreNet& net, std::span<const double> x, double h = 1e-5);

}  // namespace dfpo
