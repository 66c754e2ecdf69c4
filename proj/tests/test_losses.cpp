#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "drsc/losses.hpp"
#include "gradcheck.hpp"

using namespace drsc;
using drsc::testing::random_leaf;

namespace {

Var<double> vec(std::vector<double> v) {
    const std::size_t n = v.size();
    return Var<double>(Tensor<double>({n}, std::move(v)), true);
}

TEST(Losses, UniformLogitsGiveLog25) {
    Var<double> logits(Tensor<double>({3, 25}, 0.7), true);
    EXPECT_NEAR(classification_loss(logits, {0, 12, 24}).item(), std::log(25.0), 1e-9);
}

TEST(Losses, CrossEntropyShiftInvariantAndVanishingAtLargeMargin) {
    std::mt19937_64 rng(1);
    auto logits = random_leaf({4, 25}, rng);
    const std::vector<int> labels{3, 0, 24, 7};
    const double base = classification_loss(logits, labels).item();
    auto shifted = Tensor<double>(logits.value());
    for (auto& v : shifted.storage()) v += 123.25;
    EXPECT_NEAR(classification_loss(constant(shifted), labels).item(), base, 1e-9);

    Tensor<double> margin({1, 25}, 0.0);
    margin.at(0, 5) = 800.0;
    EXPECT_LT(classification_loss(constant(margin), {5}).item(), 1e-300);
    EXPECT_THROW(classification_loss(constant(margin), {25}), std::out_of_range);
}

TEST(Losses, KlClosedForm) {
    Var<double> mu(Tensor<double>({2, 3}, 1.0), true);
    Var<double> logvar(Tensor<double>({2, 3}, 0.0), true);
    EXPECT_EQ(kl_loss(mu, logvar).item(), 0.5);
    EXPECT_EQ(kl_loss(constant(Tensor<double>({2, 3}, 0.0)), constant(Tensor<double>({2, 3}, 0.0))).item(), 0.0);
    // mu=0, sigma^2=e: 0.5 * (e - 1 - 1)
    EXPECT_NEAR(kl_loss(constant(Tensor<double>({1, 1}, 0.0)), constant(Tensor<double>({1, 1}, 1.0))).item(),
                0.5 * (std::numbers::e - 2.0), 1e-12);
}

TEST(Losses, AdversarialAtZeroScores) {
    auto real = vec({1, 2, 3});
    auto fake = vec({0, 0, 1});
    auto zero_disc = [](const Var<double>&) { return constant(Tensor<double>({4, 1}, 0.0)); };
    EXPECT_NEAR(adversarial_loss(real, fake, zero_disc, AdversarialSide::discriminator_step).item(), 2 * std::log(2.0), 1e-9);
    EXPECT_NEAR(adversarial_loss(real, fake, zero_disc, AdversarialSide::generator_step).item(), std::log(2.0), 1e-9);
}

TEST(Losses, AdversarialDiscriminatorStepDetachesFake) {
    auto real = vec({1, 2});
    auto fake = vec({3, 4});
    auto w = vec({0.5, -0.25});
    auto disc = [&](const Var<double>& x) { return sum_all(mul(x, w)); };
    auto loss = adversarial_loss(real, fake, disc, AdversarialSide::discriminator_step);
    backward(loss);
    EXPECT_EQ(fake.grad()[0], 0.0);
    EXPECT_EQ(real.grad()[0], 0.0);
    EXPECT_NE(w.grad()[0], 0.0);

    fake.zero_grad();
    w.zero_grad();
    backward(adversarial_loss(real, fake, disc, AdversarialSide::generator_step));
    EXPECT_NE(fake.grad()[0], 0.0);
}

TEST(Losses, CycleAndDistributionExamples) {
    auto t = vec({1, 2}), t_hat = vec({1, 1}), m = vec({4, 5, 6});
    EXPECT_DOUBLE_EQ(cycle_consist_loss(t, m, t_hat, m, Criterion::l1).item(), 0.5);
    EXPECT_DOUBLE_EQ(distribution_loss(vec({1, 0}), vec({0, 1}), Criterion::cosine).item(), 1.0);
    EXPECT_DOUBLE_EQ(distribution_loss(vec({1, 2}), vec({1, 2}), Criterion::l2).item(), 0.0);
    EXPECT_THROW(distribution_loss(vec({1, 2}), vec({1, 2, 3}), Criterion::l1), std::invalid_argument);
    EXPECT_EQ(parse_criterion("L2"), Criterion::l2);
    EXPECT_THROW(parse_criterion("L3"), std::invalid_argument);
}

TEST(Losses, AllTermsNonNegative) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = random_leaf({3, 4, 5}, rng), b = random_leaf({3, 4, 5}, rng);
        for (Criterion c : {Criterion::l1, Criterion::l2, Criterion::cosine}) EXPECT_GE(distance(a, b, c).item(), 0.0);
        EXPECT_GE(kl_loss(random_leaf({3, 4}, rng), random_leaf({3, 4}, rng)).item(), 0.0);
        EXPECT_GE(classification_loss(random_leaf({3, 25}, rng, 5.0), {1, 2, 3}).item(), 0.0);
        auto s = random_leaf({3, 1}, rng, 4.0);
        EXPECT_GE(mean_softplus(s, 1.0).item(), 0.0);
        EXPECT_GE(mean_softplus(s, -1.0).item(), 0.0);
    }
}

}  // namespace
