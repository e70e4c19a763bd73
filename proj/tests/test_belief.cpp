#include <gtest/gtest.h>

#include <cmath>

#include "opacity/belief.hpp"

using namespace opacity;

namespace {
ObservationChannel channel(double eps, double lambda) { return {eps, lambda, 1.0, 1e8}; }
}  // namespace

TEST(Posterior, SymmetricSignalReturnsEvenOdds) {
    for (double s : {0.01, 0.3, 2.0, 50.0}) EXPECT_DOUBLE_EQ(posterior_binary(0.5, 0.5, s), 0.5);
}

TEST(Posterior, MatchesHighPrecisionDensityRatio) {
    // tests/oracles/closed_form_oracles.py, 50-digit density ratio
    EXPECT_NEAR(posterior_binary(0.8, 0.3, 0.5), 0.58727268700593452094, 1e-12);
}

TEST(Posterior, UninformativeChannelReturnsPrior) {
    const auto ch = channel(1.0, 1e8);
    for (double x : {-3.0, 0.0, 0.8, 5.0}) EXPECT_NEAR(posterior_binary(x, 0.3, ch), 0.3, 1e-6);
}

TEST(Posterior, RejectsNonFiniteSignal) {
    EXPECT_THROW(posterior_binary(std::nan(""), 0.3, 0.5), NumericalError);
    EXPECT_THROW(posterior_binary(INFINITY, 0.3, 0.5), NumericalError);
}

TEST(Posterior, StaysInsideUnitIntervalForExtremeSignals) {
    EXPECT_GE(posterior_binary(-1e3, 0.4, 0.1), 0.0);
    EXPECT_LE(posterior_binary(1e3, 0.4, 0.1), 1.0);
}

TEST(Posterior, MlrpOnThousandPointGrid) {
    for (double eps : {0.001, 0.04, 1.0})
        for (double lam : {1.0, 16.0, 1e4}) {
            const auto rep = check_mlrp(0.4, channel(eps, lam), -3.0, 4.0, 1000);
            EXPECT_TRUE(rep.pass()) << eps << " " << lam << " violations " << rep.violations;
        }
}

TEST(Sampling, DeterministicGivenSeed) {
    const auto a = sample_posteriors(0.4, channel(0.01, 1.0), 100000, 42);
    const auto b = sample_posteriors(0.4, channel(0.01, 1.0), 100000, 42);
    EXPECT_EQ(a.draws, b.draws);
    const auto c = sample_posteriors(0.4, channel(0.01, 1.0), 100000, 43);
    EXPECT_NE(a.draws, c.draws);
}

TEST(Sampling, IndependentOfThreadCount) {
    const auto a = sample_posteriors(0.4, channel(0.01, 1.0), 300000, 5, Conditioning::unconditional, 1);
    const auto b = sample_posteriors(0.4, channel(0.01, 1.0), 300000, 5, Conditioning::unconditional, 4);
    EXPECT_EQ(a.draws, b.draws);
    EXPECT_EQ(a.signals, b.signals);
}

TEST(Sampling, MartingaleAtMillionDraws) {
    const auto s = sample_posteriors(0.4, channel(0.01, 1.0), 1000000, 11);
    const auto st = summarize(s.draws);
    EXPECT_LE(std::abs(st.mean() - 0.4), 3.0 * st.stddev() / 1000.0);
}

TEST(Sampling, MartingaleAcrossChannels) {
    std::uint64_t seed = 100;
    for (double q : {0.2, 0.5, 0.8})
        for (double lam : {1.0, 9.0, 1e3}) {
            const auto s = sample_posteriors(q, channel(0.04, lam), 200000, ++seed);
            const auto st = summarize(s.draws);
            EXPECT_LE(std::abs(st.mean() - q), 4.0 * st.standard_error()) << q << " " << lam;
        }
}

TEST(Sampling, ConditionalDrawsFixTheta) {
    const auto s1 = sample_posteriors(0.4, channel(0.01, 1.0), 5000, 3, Conditioning::given_theta1);
    for (auto t : s1.thetas) EXPECT_EQ(t, 1);
    const auto s0 = sample_posteriors(0.4, channel(0.01, 1.0), 5000, 3, Conditioning::given_theta0);
    EXPECT_LT(summarize(s0.draws).mean(), summarize(s1.draws).mean());
}

TEST(Sampling, MixtureOfConditionalsReproducesUnconditionalLaw) {
    const std::size_t n = 100000;
    const double q = 0.4;
    const auto ch = channel(0.04, 1.0);
    const auto s1 = sample_posteriors(q, ch, n, 21, Conditioning::given_theta1);
    const auto s0 = sample_posteriors(q, ch, n, 22, Conditioning::given_theta0);
    const auto u = sample_posteriors(q, ch, n, 23);
    std::vector<double> mix;
    const auto k1 = static_cast<std::size_t>(q * n);
    mix.insert(mix.end(), s1.draws.begin(), s1.draws.begin() + static_cast<long>(k1));
    mix.insert(mix.end(), s0.draws.begin(), s0.draws.begin() + static_cast<long>(n - k1));
    EXPECT_LT(ks_distance(mix, u.draws), ks_threshold(mix.size(), u.draws.size()));
}

TEST(Sampling, HugeOpacityCollapsesDrawsToPrior) {
    // s = 1e6: the log-likelihood ratio moves by about |x| / s^2 <= 1e-5
    const ObservationChannel opaque{1.0, 1e12, 1.0, 1e12};
    const auto s = sample_posteriors(0.4, opaque, 10000, 4);
    for (double b : s.draws) EXPECT_NEAR(b, 0.4, 1e-5);
}

TEST(Garble, IdentityAndBoundary) {
    const auto ch = channel(0.01, 4.0);
    EXPECT_EQ(garble(ch, 4.0), ch);
    EXPECT_EQ(garble(ch, ch.lambda_max).lambda, 1e8);
}

TEST(Garble, RejectsLowerOpacity) {
    try {
        garble(channel(0.01, 4.0), 2.0);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("not a garbling"), std::string::npos);
    }
}

TEST(Garble, CompositionMatchesDirectGarbling) {
    const auto base = channel(0.01, 1.0);
    const auto chained = sample_garbled_posteriors(0.4, base, {1.0, 2.0, 4.0}, 100000, 31);
    const auto direct = sample_posteriors(0.4, base.with_lambda(4.0), 100000, 32);
    EXPECT_LT(ks_distance(chained.draws, direct.draws), ks_threshold(100000, 100000));
}

TEST(Garble, KsDetectsDifferentOpacity) {
    const auto a = sample_posteriors(0.4, channel(0.01, 1.0), 100000, 31);
    const auto b = sample_posteriors(0.4, channel(0.01, 4.0), 100000, 32);
    EXPECT_GT(ks_distance(a.draws, b.draws), ks_threshold(100000, 100000));
}

TEST(Battery, StandardHasAtLeastTenConvexMembers) {
    const auto bat = ConvexTestBattery::standard(0.4);
    EXPECT_GE(bat.size(), 10u);
}

TEST(Battery, RejectsNonConvexMember) {
    EXPECT_THROW(ConvexTestBattery({{"concave", [](double b) { return -b * b; }}}), ConfigError);
}

TEST(ConvexOrder, IdenticalChannelsPass) {
    const auto a = sample_posteriors(0.4, channel(0.01, 1.0), 50000, 8);
    const auto rep = verify_convex_order(a, a, ConvexTestBattery::standard(0.4));
    EXPECT_TRUE(rep.all_pass());
    for (const auto& e : rep.entries) EXPECT_EQ(e.mean_fine, e.mean_coarse);
}

TEST(ConvexOrder, CoarseAtMaximalOpacitySitsAtJensenMinimum) {
    const auto bat = ConvexTestBattery::standard(0.4);
    const auto fine = sample_posteriors(0.4, channel(0.01, 1.0), 100000, 1);
    const auto coarse = sample_posteriors(0.4, ObservationChannel{0.01, 1e14, 1.0, 1e14}, 100000, 2);
    const auto rep = verify_convex_order(fine, coarse, bat);
    EXPECT_TRUE(rep.all_pass());
    for (std::size_t i = 0; i < bat.size(); ++i) EXPECT_NEAR(rep.entries[i].mean_coarse, bat.tests()[i].f(0.4), 1e-6);
}

TEST(ConvexOrder, BlackwellPairPassesAtMillionDraws) {
    const auto fine = sample_posteriors(0.4, channel(0.01, 1.0), 1000000, 7);
    const auto coarse = sample_posteriors(0.4, channel(0.01, 4.0), 1000000, 8);
    const auto rep = verify_convex_order(fine, coarse, ConvexTestBattery::standard(0.4));
    EXPECT_TRUE(rep.all_pass());
}

TEST(ConvexOrder, ReversedPairIsDetected) {
    const auto fine = sample_posteriors(0.4, channel(0.04, 1.0), 200000, 7);
    const auto coarse = sample_posteriors(0.4, channel(0.04, 16.0), 200000, 8);
    const auto rep = verify_convex_order(coarse, fine, ConvexTestBattery::standard(0.4));
    EXPECT_FALSE(rep.all_pass());
}

TEST(ConvexOrder, MismatchedPriorsRejected) {
    const auto a = sample_posteriors(0.4, channel(0.01, 1.0), 1000, 1);
    const auto b = sample_posteriors(0.5, channel(0.01, 1.0), 1000, 1);
    EXPECT_THROW(verify_convex_order(a, b, ConvexTestBattery::standard(0.4)), ConfigError);
}
