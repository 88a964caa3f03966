#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fsd/sivloss.hpp"

using namespace fsd;

namespace {

std::vector<double> random_depths(std::mt19937_64& rng, size_t n, double lo = 0.1,
                                  double hi = 100.0) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    std::vector<double> out(n);
    for (auto& d : out) d = std::exp(u(rng));
    return out;
}

double rel_diff(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

}  // namespace

TEST_CASE("alpha of a perfect prediction is zero") {
    const std::vector<double> gt{1.0, 2.5, 40.0};
    const auto pair = DepthPair::from_samples(gt, gt);
    CHECK(alpha(pair) == 0.0);
}

TEST_CASE("alpha of a doubled prediction is minus log 2") {
    const std::vector<double> gt{1.0, 2.5, 40.0};
    std::vector<double> pred;
    for (double g : gt) pred.push_back(2.0 * g);
    const auto pair = DepthPair::from_samples(pred, gt);
    CHECK(alpha(pair) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    CHECK(alpha(pair) == doctest::Approx(-0.693147).epsilon(1e-6));
}

TEST_CASE("alpha is the negated mean log-difference") {
    const auto pair = DepthPair::from_log_diffs(std::vector<double>{1.0, 2.0});
    CHECK(alpha(pair) == doctest::Approx(-1.5).epsilon(1e-15));
}

TEST_CASE("loss forms on the two-sample worked example") {
    const auto pair = DepthPair::from_log_diffs(std::vector<double>{1.0, 2.0});
    // variance form: 2.5 - 2.25
    CHECK(loss_linear(pair) == doctest::Approx(0.25).epsilon(1e-15));
    // alignment form: (1/2)(0.25 + 0.25)
    CHECK(loss_alpha_oracle(pair) == doctest::Approx(0.25).epsilon(1e-15));
    // pairwise form: (1/8)(0 + 1 + 1 + 0)
    CHECK(loss_pairwise_oracle(pair) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("perfect and uniformly scaled predictions have zero loss") {
    const std::vector<double> gt{0.7, 3.0, 12.0, 48.0};
    CHECK(loss_linear(DepthPair::from_samples(gt, gt)) == 0.0);
    for (double c : {0.1, 2.0, 10.0}) {
        std::vector<double> pred;
        for (double g : gt) pred.push_back(c * g);
        const double l = loss_linear(DepthPair::from_samples(pred, gt));
        CHECK(l >= 0.0);
        CHECK(l < 1e-12);
    }
}

TEST_CASE("single valid pixel has zero loss and zero gradient") {
    const auto pair = DepthPair::from_log_diffs(std::vector<double>{0.83});
    CHECK(loss_linear(pair) == doctest::Approx(0.0).scale(1e-18));
    const auto g = loss_gradient(pair);
    CHECK(std::abs(g[0]) < 1e-18);
}

TEST_CASE("empty valid set is rejected everywhere") {
    const DepthPair empty;
    CHECK_THROWS_AS(alpha(empty), std::invalid_argument);
    CHECK_THROWS_AS(loss_linear(empty), std::invalid_argument);
    CHECK_THROWS_AS(loss_alpha_oracle(empty), std::invalid_argument);
    CHECK_THROWS_AS(loss_pairwise_oracle(empty), std::invalid_argument);
    CHECK_THROWS_AS(loss_gradient(empty), std::invalid_argument);
}

TEST_CASE("scale invariance holds to 1e-9 absolute") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t n = 2 + rng() % 511;
        const auto gt = random_depths(rng, n);
        const auto pred = random_depths(rng, n);
        const double base = loss_linear(DepthPair::from_samples(pred, gt));
        for (double c : {0.1, 1.0, 10.0}) {
            std::vector<double> scaled;
            for (double p : pred) scaled.push_back(c * p);
            const double l = loss_linear(DepthPair::from_samples(scaled, gt));
            CHECK(std::abs(l - base) < 1e-9);
        }
    }
}

TEST_CASE("the three loss routes agree on random instances") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = 1 + rng() % 200;
        const auto pair =
            DepthPair::from_samples(random_depths(rng, n), random_depths(rng, n));
        const double lin = loss_linear(pair);
        CHECK(rel_diff(lin, loss_alpha_oracle(pair)) < 1e-9);
        CHECK(rel_diff(lin, loss_pairwise_oracle(pair)) < 1e-9);
    }
}

TEST_CASE("alpha form matches the linear form to 1e-12 on small instances") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t n = 1 + rng() % 64;
        const auto pair =
            DepthPair::from_samples(random_depths(rng, n), random_depths(rng, n));
        CHECK(rel_diff(loss_linear(pair), loss_alpha_oracle(pair)) < 1e-12);
    }
}

TEST_CASE("gradient on the worked example") {
    const auto pair = DepthPair::from_log_diffs(std::vector<double>{1.0, 2.0});
    const auto g = loss_gradient(pair);
    CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("constant log-difference has zero gradient") {
    const auto pair = DepthPair::from_log_diffs(std::vector<double>(17, 0.4));
    for (double g : loss_gradient(pair)) CHECK(std::abs(g) < 1e-15);
}

TEST_CASE("gradient matches central finite differences") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> d(37);
        for (auto& v : d) v = u(rng);
        const auto pair = DepthPair::from_log_diffs(d);
        const auto grad = loss_gradient(pair);
        for (size_t i = 0; i < d.size(); ++i) {
            auto bump = d;
            bump[i] = d[i] + h;
            const double up = loss_linear(DepthPair::from_log_diffs(bump));
            bump[i] = d[i] - h;
            const double down = loss_linear(DepthPair::from_log_diffs(bump));
            const double fd = (up - down) / (2.0 * h);
            // the invariance direction finite-differences to pure noise, so
            // pair the relative bound with a small absolute floor
            CHECK(std::abs(grad[i] - fd) <=
                  1e-9 + 1e-6 * std::max(std::abs(grad[i]), std::abs(fd)));
        }
    }
}

TEST_CASE("gradient sums to zero over the valid set") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 2 + rng() % 300;
        const auto pair =
            DepthPair::from_samples(random_depths(rng, n), random_depths(rng, n));
        double sum = 0.0;
        for (double g : loss_gradient(pair)) sum += g;
        CHECK(std::abs(sum) < 1e-12);
    }
}

TEST_CASE("gradient w.r.t. prediction applies the 1/p chain factor") {
    const std::vector<double> gt{2.0, 8.0};
    const std::vector<double> pred{4.0, 8.0};
    const auto pair = DepthPair::from_samples(pred, gt);
    const auto gd = loss_gradient(pair);
    const auto gp = loss_gradient_wrt_pred(pair);
    CHECK(gp[0] == doctest::Approx(gd[0] / 4.0).epsilon(1e-15));
    CHECK(gp[1] == doctest::Approx(gd[1] / 8.0).epsilon(1e-15));
}

TEST_CASE("invalid pixels never influence loss or gradient") {
    // sparse gt: valid pixels only at chosen indices
    SparseDepthMap gt(8, 4);
    gt.set(1, 0, 2.0);
    gt.set(5, 1, 7.0);
    gt.set(2, 3, 19.0);
    std::vector<double> pred(gt.depth.size(), 1.0);
    pred[gt.index(1, 0)] = 2.2;
    pred[gt.index(5, 1)] = 6.5;
    pred[gt.index(2, 3)] = 25.0;

    const auto base_pair = DepthPair::from_grid(pred, gt);
    const double base_loss = loss_linear(base_pair);
    const auto base_grad = loss_gradient(base_pair);

    // poison every invalid pixel with adversarial values
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(1e-12, 1e12);
    auto poisoned = pred;
    for (size_t i = 0; i < poisoned.size(); ++i)
        if (!gt.valid[i]) poisoned[i] = u(rng);
    const auto poisoned_pair = DepthPair::from_grid(poisoned, gt);

    CHECK(loss_linear(poisoned_pair) == base_loss);  // bitwise equality
    const auto poisoned_grad = loss_gradient(poisoned_pair);
    REQUIRE(poisoned_grad.size() == base_grad.size());
    for (size_t i = 0; i < base_grad.size(); ++i) CHECK(poisoned_grad[i] == base_grad[i]);
    CHECK(alpha(poisoned_pair) == alpha(base_pair));
}

TEST_CASE("tiny depths are clamped and counted") {
    const std::vector<double> gt{1.0, 2.0};
    const std::vector<double> pred{1e-9, 2.0};
    const auto pair = DepthPair::from_samples(pred, gt);
    CHECK(pair.clamped == 1);
    CHECK(std::isfinite(loss_linear(pair)));
    // clamped prediction behaves exactly like kMinDepth
    const std::vector<double> clamped_pred{DepthPair::kMinDepth, 2.0};
    CHECK(loss_linear(pair) == loss_linear(DepthPair::from_samples(clamped_pred, gt)));
}

TEST_CASE("batch loss is the mean of per-image losses") {
    const auto a = DepthPair::from_log_diffs(std::vector<double>{1.0, 2.0});   // 0.25
    const auto b = DepthPair::from_log_diffs(std::vector<double>{0.0, 0.0});   // 0
    const std::vector<DepthPair> batch{a, b};
    CHECK(batch_loss(batch) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK_THROWS_AS(batch_loss(std::vector<DepthPair>{}), std::invalid_argument);
}
