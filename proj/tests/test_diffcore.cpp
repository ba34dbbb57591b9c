// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <omp.h>

#include <cmath>
#include <random>

#include "dfpo/diffcore.hpp"
#include "dfpo/error.hpp"
#include "support.hpp"

using namespace dfpo;
using dfpo::test::net_with;

namespace {

// Central differences of the mean loss with respect to every parameter.
std::vector<double> fd_param_grad(ScoreNet net, std::span<const LabeledSample> batch, double beta, double h = 1e-6)
{
    std::vector<double> g(net.parameter_count());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double orig = net.parameters()[i];
        net.parameters()[i] = orig + h;
        const double up = mean_loss(net, batch, beta);
        net.parameters()[i] = orig - h;
        const double down = mean_loss(net, batch, beta);
        net.parameters()[i] = orig;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

double rel_norm_err(const std::vector<double>& a, const std::vector<double>& b)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

std::vector<LabeledSample> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t dim)
{
    std::vector<LabeledSample> batch(n);
    std::normal_distribution<double> d(0.0, 1.0);
    for (auto& s : batch) {
        s.x = dfpo::test::normal_vector(rng, dim);
        s.y = 3.0 * d(rng);
    }
    return batch;
}

}  // namespace

TEST_CASE("forward on hand-built networks")
{
    SUBCASE("zero network")
    {
        ScoreNet net({3, 5, 1});
        CHECK(forward(net, std::vector<double>{1.0, -2.0, 3.0}) == 0.0);
        for (double g : grad_input(net, std::vector<double>{1.0, -2.0, 3.0})) CHECK(g == 0.0);
    }
    SUBCASE("affine layer")
    {
        const auto net = net_with({2, 1}, {2.0, -1.0, 0.5});
        CHECK(forward(net, std::vector<double>{1.0, 1.0}) == doctest::Approx(1.5).epsilon(1e-15));
        const auto g = grad_input(net, std::vector<double>{0.3, -9.0});
        CHECK(g[0] == 2.0);
        CHECK(g[1] == -1.0);
    }
    SUBCASE("one tanh unit")
    {
        const auto net = net_with({2, 1, 1}, {1.0, 0.0, 0.0, 1.0, 0.0});
        const std::vector<double> x{0.5, 7.0};
        CHECK(forward(net, x) == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
        CHECK(forward(net, x) == doctest::Approx(0.46212).epsilon(1e-5));
        const auto g = grad_input(net, x);
        const double t = std::tanh(0.5);
        CHECK(g[0] == doctest::Approx(1.0 - t * t).epsilon(1e-15));
        CHECK(g[0] == doctest::Approx(0.78644).epsilon(1e-5));
        CHECK(g[1] == 0.0);
    }
    SUBCASE("input length is checked")
    {
        ScoreNet net({3, 1});
        CHECK_THROWS_AS(forward(net, std::vector<double>{1.0}), ShapeError);
        CHECK_THROWS_AS(grad_input(net, std::vector<double>{1.0, 2.0}), ShapeError);
    }
}

TEST_CASE("network construction rejects bad widths")
{
    CHECK_THROWS_AS(ScoreNet({3, 2}), ShapeError);
    CHECK_THROWS_AS(ScoreNet({3, 0, 1}), ShapeError);
    CHECK_THROWS_AS(ScoreNet({1}), ShapeError);
}

TEST_CASE("forward and input gradient are bitwise repeatable")
{
    std::mt19937_64 rng(3);
    const auto net = ScoreNet::random({4, 16, 16, 1}, Activation::Tanh, rng);
    const auto x = dfpo::test::normal_vector(rng, 4);
    const double v = forward(net, x);
    const auto g = grad_input(net, x);
    for (int i = 0; i < 5; ++i) {
        CHECK(forward(net, x) == v);
        CHECK(grad_input(net, x) == g);
    }
    std::vector<double> g2(4);
    CHECK(value_and_grad_input(net, x, g2) == v);
    CHECK(g2 == g);
}

TEST_CASE("smooth L1 loss")
{
    CHECK(smooth_l1(0.0, 1.0) == 0.0);
    CHECK(smooth_l1(0.5, 1.0) == 0.125);
    CHECK(smooth_l1(2.0, 1.0) == 1.5);
    CHECK(smooth_l1(-2.0, 1.0) == 1.5);

    SUBCASE("value and slope agree at the joint")
    {
        for (double beta : {0.1, 1.0, 3.0}) {
            const double below = std::nextafter(beta, 0.0);
            CHECK(smooth_l1(below, beta) == doctest::Approx(smooth_l1(beta, beta)).epsilon(1e-14));
            CHECK(smooth_l1_derivative(below, beta) == doctest::Approx(smooth_l1_derivative(beta, beta)).epsilon(1e-14));
            CHECK(smooth_l1_derivative(-below, beta) == doctest::Approx(-1.0).epsilon(1e-14));
        }
    }
}

TEST_CASE("parameter gradients of the mean loss")
{
    SUBCASE("exact fit gives zero gradient")
    {
        std::mt19937_64 rng(11);
        const auto net = ScoreNet::random({3, 8, 1}, Activation::Tanh, rng);
        auto batch = random_batch(rng, 5, 3);
        for (auto& s : batch) s.y = forward(net, s.x);
        for (double g : grad_params(net, batch, 1.0)) CHECK(g == 0.0);
    }
    SUBCASE("linear branch: bias gradient is the sign of the residual")
    {
        const auto net = net_with({2, 1}, {1.0, 0.0, 0.0});
        const std::vector<LabeledSample> batch{{{0.0, 0.0}, 2.0, 1, Provenance::TrueScore}};
        const auto g = grad_params(net, batch, 1.0);
        CHECK(g[0] == 0.0);
        CHECK(g[1] == 0.0);
        CHECK(g[2] == -1.0);
    }
    SUBCASE("random 3-sample batch matches central differences")
    {
        std::mt19937_64 rng(5);
        const auto net = ScoreNet::random({2, 6, 1}, Activation::Tanh, rng);
        const auto batch = random_batch(rng, 3, 2);
        CHECK(rel_norm_err(grad_params(net, batch, 1.0), fd_param_grad(net, batch, 1.0)) < 1e-6);
    }
    SUBCASE("batch gradient is the mean of per-sample gradients")
    {
        std::mt19937_64 rng(6);
        const auto net = ScoreNet::random({4, 12, 12, 1}, Activation::Softplus, rng);
        const auto batch = random_batch(rng, 41, 4);
        std::vector<double> mean(net.parameter_count(), 0.0);
        for (const auto& s : batch) {
            const auto g = grad_params(net, std::span<const LabeledSample>(&s, 1), 1.0);
            for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i] / static_cast<double>(batch.size());
        }
        CHECK(rel_norm_err(grad_params(net, batch, 1.0), mean) < 1e-10);
    }
    SUBCASE("empty batch is a usage error")
    {
        ScoreNet net({2, 1});
        CHECK_THROWS_AS(grad_params(net, {}, 1.0), UsageError);
    }
}

TEST_CASE("parallel parameter gradient against the serial reference")
{
    std::mt19937_64 rng(21);
    const auto net = ScoreNet::random({6, 32, 32, 1}, Activation::Tanh, rng);
    const auto batch = random_batch(rng, 203, 6);
    double loss_par = 0.0, loss_ser = 0.0;
    const auto par = grad_params(net, batch, 1.0, &loss_par);
    const auto ser = grad_params_serial(net, batch, 1.0, &loss_ser);
    CHECK(rel_norm_err(par, ser) < 1e-13);
    CHECK(loss_par == doctest::Approx(loss_ser).epsilon(1e-13));
    CHECK(loss_par == doctest::Approx(mean_loss(net, batch, 1.0)).epsilon(1e-13));

    SUBCASE("result does not depend on the thread count")
    {
        const int before = omp_get_max_threads();
        omp_set_num_threads(1);
        const auto one = grad_params(net, batch, 1.0);
        omp_set_num_threads(4);
        const auto four = grad_params(net, batch, 1.0);
        omp_set_num_threads(before);
        CHECK(one == four);
    }
}

TEST_CASE("adaptive-moment optimizer step")
{
    SUBCASE("zero gradient leaves parameters unchanged")
    {
        std::mt19937_64 rng(1);
        auto net = ScoreNet::random({3, 4, 1}, Activation::Tanh, rng);
        const auto before = net;
        OptimizerState st(AdamConfig{}, net.parameter_count());
        opt_step(net, st, std::vector<double>(net.parameter_count(), 0.0));
        CHECK(net == before);
    }
    SUBCASE("first step with a unit gradient moves by about lr")
    {
        auto net = net_with({1, 1}, {0.7, 0.0});
        AdamConfig cfg;
        cfg.learning_rate = 1e-3;
        OptimizerState st(cfg, net.parameter_count());
        opt_step(net, st, std::vector<double>{1.0, 0.0});
        // m = 0.1, v = 0.001; bias correction gives m_hat = v_hat = 1
        const double expected = 0.7 - 1e-3 * 1.0 / (1.0 + 1e-8);
        CHECK(net.parameters()[0] == doctest::Approx(expected).epsilon(1e-14));
        CHECK(st.step == 1);
    }
    SUBCASE("two identical steps move monotonically")
    {
        auto net = net_with({1, 1}, {0.0, 0.0});
        OptimizerState st(AdamConfig{}, 2);
        opt_step(net, st, std::vector<double>{0.5, -0.5});
        const double w1 = net.parameters()[0], b1 = net.parameters()[1];
        opt_step(net, st, std::vector<double>{0.5, -0.5});
        CHECK(st.step == 2);
        CHECK(net.parameters()[0] < w1);
        CHECK(w1 < 0.0);
        CHECK(net.parameters()[1] > b1);
    }
    SUBCASE("shape mismatch")
    {
        auto net = net_with({1, 1}, {0.0, 0.0});
        OptimizerState st(AdamConfig{}, 2);
        CHECK_THROWS_AS(opt_step(net, st, std::vector<double>{1.0}), ShapeError);
    }
    SUBCASE("optional weight bound clips entries")
    {
        auto net = net_with({1, 1}, {0.0, 0.0});
        net.weight_bound = 1e-4;
        AdamConfig cfg;
        cfg.learning_rate = 0.1;
        OptimizerState st(cfg, 2);
        opt_step(net, st, std::vector<double>{1.0, -1.0});
        CHECK(net.parameters()[0] == -1e-4);
        CHECK(net.parameters()[1] == 1e-4);
    }
}

TEST_CASE("finite-difference check of the input gradient")
{
    CHECK(finite_diff_check(ScoreNet({3, 4, 1}), std::vector<double>{1, 2, 3}) == 0.0);
    CHECK(finite_diff_check(net_with({2, 1}, {2.0, -1.0, 0.5}), std::vector<double>{0.1, 0.2}) < 1e-9);

    SUBCASE("random two-hidden-layer tanh net, 100 inputs")
    {
        std::mt19937_64 rng(99);
        const auto net = ScoreNet::random({4, 16, 16, 1}, Activation::Tanh, rng);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) worst = std::max(worst, finite_diff_check(net, dfpo::test::normal_vector(rng, 4)));
        CHECK(worst < 1e-5);
    }
    SUBCASE("random nets up to width 32 and depth 3")
    {
        std::mt19937_64 rng(100);
        std::uniform_int_distribution<std::size_t> width(1, 32), depth(1, 3);
        double worst = 0.0;
        for (int n = 0; n < 20; ++n) {
            std::vector<std::size_t> widths{width(rng)};
            const auto layers = depth(rng);
            for (std::size_t l = 0; l < layers; ++l) widths.push_back(width(rng));
            widths.push_back(1);
            const auto net = ScoreNet::random(widths, n % 2 ? Activation::Softplus : Activation::Tanh, rng);
            for (int i = 0; i < 100; ++i)
                worst = std::max(worst, finite_diff_check(net, dfpo::test::normal_vector(rng, widths.front())));
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("random initialisation")
{
    std::mt19937_64 a(8), b(8);
    const auto n1 = ScoreNet::random({4, 8, 1}, Activation::Tanh, a, 1e-2);
    const auto n2 = ScoreNet::random({4, 8, 1}, Activation::Tanh, b, 1e-2);
    CHECK(n1 == n2);
    CHECK(n1.all_finite());
    // output layer is scaled down; hidden layer keeps the fan-in bound
    const auto w_out = n1.weight_offset(1);
    for (std::size_t i = w_out; i < n1.parameter_count(); ++i) CHECK(std::abs(n1.parameters()[i]) <= 1e-2 / std::sqrt(8.0));
    for (std::size_t i = 0; i < n1.bias_offset(0); ++i) CHECK(std::abs(n1.parameters()[i]) <= 0.5);
    CHECK(n1.parameter_shapes() == std::vector<std::vector<std::size_t>>{{8, 4}, {8}, {1, 8}, {1}});
}

TEST_CASE("activation names")
{
    CHECK(parse_activation("tanh") == Activation::Tanh);
    CHECK(parse_activation(to_string(Activation::Softplus)) == Activation::Softplus);
    CHECK_THROWS_AS(parse_activation("relu"), ConfigError);
}
