#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dal/rng.hpp"
#include "dal/stats.hpp"

using namespace dal::stats;

namespace {

// The six per-subject accuracy columns of the reference results table,
// w/o vs w/ overt for each decoding method (n = 8 subjects each).
const std::vector<double> kDalWo = {37.06, 35.04, 36.72, 54.08, 39.33, 36.36, 39.33, 50.03};
const std::vector<double> kDalW = {42.59, 41.22, 45.67, 58.83, 49.77, 46.16, 47.15, 55.86};
const std::vector<double> kCspWo = {32.43, 29.77, 33.72, 43.76, 23.51, 29.45, 23.86, 44.25};
const std::vector<double> kCspW = {29.92, 25.66, 27.63, 33.24, 26.97, 23.69, 27.14, 33.89};
const std::vector<double> kEenWo = {32.94, 32.90, 33.05, 39.31, 33.55, 32.72, 35.21, 33.38};
const std::vector<double> kEenW = {30.74, 34.04, 32.07, 38.82, 32.23, 33.38, 35.69, 32.24};

} // namespace

TEST_CASE("normal cdf and quantile invert each other") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    // the textbook two-sided 5% point
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));

    // the upper limit stays below 6: cdf values that close to 1 lose tail
    // precision to double representation, which is not the quantile's fault
    for (double z = -6.0; z <= 5.5; z += 0.25) {
        const double p = normal_cdf(z);
        CHECK(normal_quantile(p) == doctest::Approx(z).epsilon(1e-9).scale(1.0));
    }
    // symmetry where 1-p is exactly representable to working precision
    for (double p : {0.001, 0.02, 0.2, 0.4}) {
        CHECK(normal_quantile(1.0 - p) == doctest::Approx(-normal_quantile(p)).epsilon(1e-12));
    }
    // deep lower tail (the r > 5 branch): invert through the erfc-based cdf
    for (double p : {1e-12, 1e-7, 1e-3}) {
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
    }
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
    CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);
}

TEST_CASE("regularized incomplete beta obeys its reflection identity") {
    const double as[] = {0.5, 1.0, 2.5, 7.0, 40.0};
    const double xs[] = {0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99};
    for (double a : as)
        for (double b : as)
            for (double x : xs) {
                const double lhs = reg_inc_beta(a, b, x) + reg_inc_beta(b, a, 1.0 - x);
                INFO("a=", a, " b=", b, " x=", x);
                CHECK(lhs == doctest::Approx(1.0).epsilon(1e-12));
            }

    CHECK(reg_inc_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(reg_inc_beta(2.0, 3.0, 1.0) == 1.0);
    // monotone in x
    double prev = 0.0;
    for (double x = 0.05; x < 1.0; x += 0.05) {
        const double v = reg_inc_beta(3.0, 1.5, x);
        CHECK(v > prev);
        prev = v;
    }
    // I_x(1,1) is the identity
    CHECK(reg_inc_beta(1.0, 1.0, 0.375) == doctest::Approx(0.375).epsilon(1e-14));
    CHECK_THROWS_AS(reg_inc_beta(-1.0, 2.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(reg_inc_beta(1.0, 2.0, 1.5), std::invalid_argument);
}

TEST_CASE("distribution tails match the frozen reference values") {
    // frozen from an established reference statistics implementation
    CHECK(f_survival(1.5, 1, 4) == doctest::Approx(0.2878641347266907).epsilon(1e-12));
    CHECK(f_survival(3.2, 5, 94) == doctest::Approx(0.010333766671110882).epsilon(1e-12));
    CHECK(t_survival(2.5, 7) == doctest::Approx(0.040992218585752874).epsilon(1e-12));
    CHECK(t_survival(1.1, 19) == doctest::Approx(0.28507446020539556).epsilon(1e-12));

    CHECK(f_survival(0.0, 3, 10) == 1.0);
    CHECK(t_survival(0.0, 9) == 1.0);
    // symmetric in t, monotone decreasing in |t| and in F
    CHECK(t_survival(-2.5, 7) == doctest::Approx(t_survival(2.5, 7)).epsilon(1e-15));
    CHECK(f_survival(2.0, 3, 10) < f_survival(1.0, 3, 10));
    CHECK(t_survival(3.0, 9) < t_survival(1.0, 9));
    CHECK_THROWS_AS(f_survival(1.0, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(f_survival(-0.5, 1, 4), std::invalid_argument);
    CHECK_THROWS_AS(t_survival(1.0, 0), std::invalid_argument);
}

TEST_CASE("shapiro-wilk matches the frozen reference fixtures") {
    SUBCASE("n=8 near-normal fixture") {
        const std::vector<double> x8 = {2.3, 1.9, 3.1, 2.7, 2.2, 2.8, 3.6, 1.7};
        auto r = shapiro_wilk(x8);
        INFO("W=", r.statistic, " p=", r.p_value);
        CHECK(r.statistic == doctest::Approx(0.9738764165753678).epsilon(1e-3));
        CHECK(r.p_value == doctest::Approx(0.9265691057762171).epsilon(1e-3));
        CHECK_FALSE(r.significant);
    }

    SUBCASE("n=20 mildly skewed fixture") {
        const std::vector<double> x20 = {0.71, 1.62, 0.44, 2.95, 1.08, 0.17, 1.91,
                                         0.83, 1.36, 0.29, 2.21, 0.95, 1.47, 0.61,
                                         3.40, 1.12, 0.52, 1.78, 0.38, 2.63};
        auto r = shapiro_wilk(x20);
        INFO("W=", r.statistic, " p=", r.p_value);
        CHECK(r.statistic == doctest::Approx(0.9271938472313566).epsilon(1e-3));
        CHECK(r.p_value == doctest::Approx(0.13634576640450652).epsilon(1e-3));
    }

    SUBCASE("strongly bimodal sample is rejected hard") {
        const std::vector<double> xb = {0.0,   0.013,   -0.011, 0.007,   0.002,
                                        -0.005, 0.009,  -0.003, 0.011,  -0.008,
                                        100.0, 100.013, 99.989, 100.007, 100.002,
                                        99.995, 100.009, 99.997, 100.011, 99.992};
        auto r = shapiro_wilk(xb);
        INFO("W=", r.statistic, " p=", r.p_value);
        CHECK(r.statistic == doctest::Approx(0.6412628295647087).epsilon(1e-3));
        CHECK(r.p_value < 0.01);
        CHECK(r.significant);
    }

    SUBCASE("W stays in (0, 1]") {
        dal::Rng rng(2718);
        for (int n : {3, 4, 5, 8, 11, 12, 50, 500}) {
            std::vector<double> x(static_cast<size_t>(n));
            for (double& v : x) v = rng.normal();
            auto r = shapiro_wilk(x);
            INFO("n=", n);
            CHECK(r.statistic > 0.0);
            CHECK(r.statistic <= 1.0);
            CHECK(r.p_value >= 0.0);
            CHECK(r.p_value <= 1.0);
        }
    }

    SUBCASE("three evenly spaced points are exactly normal-scoring") {
        auto r = shapiro_wilk({1.0, 2.0, 3.0});
        CHECK(r.statistic == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.p_value == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("order does not matter") {
        auto fwd = shapiro_wilk({2.3, 1.9, 3.1, 2.7, 2.2, 2.8, 3.6, 1.7});
        auto rev = shapiro_wilk({1.7, 3.6, 2.8, 2.2, 2.7, 3.1, 1.9, 2.3});
        CHECK(fwd.statistic == rev.statistic);
        CHECK(fwd.p_value == rev.p_value);
    }

    SUBCASE("degenerate inputs are rejected") {
        try {
            shapiro_wilk({4.2, 4.2, 4.2, 4.2, 4.2});
            FAIL("expected zero-variance error");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("zero variance") != std::string::npos);
        }
        CHECK_THROWS_AS(shapiro_wilk({1.0, 2.0}), std::invalid_argument);
        CHECK_THROWS_AS(shapiro_wilk(std::vector<double>(5001, 0.0)), std::invalid_argument);
    }
}

TEST_CASE("levene detects unequal spread and flags degenerate layouts") {
    SUBCASE("identical spread patterns give F exactly zero") {
        auto r = levene({{1.0, 2.0, 3.0}, {11.0, 12.0, 13.0}});
        CHECK(r.statistic == 0.0);
        CHECK(r.p_value == 1.0);
        CHECK_FALSE(r.degenerate);
        CHECK_FALSE(r.significant);
    }

    SUBCASE("the frozen two-group fixture") {
        auto r = levene({{0.0, 0.1, -0.1}, {0.0, 10.0, -10.0}});
        // hand computation: z-groups {0, .1, .1} and {0, 10, 10};
        // SSB = 65.34, SSW = 66.6|, F = 65.34/(66.67/4) = 3.92, df (1,4)
        CHECK(r.statistic == doctest::Approx(3.9200079992000805).epsilon(1e-9));
        CHECK(r.p_value == doctest::Approx(0.11881505500692922).epsilon(1e-9));
        CHECK_FALSE(r.significant); // df (1,4) is far too small for this F
    }

    SUBCASE("permuting within a group changes nothing") {
        auto r1 = levene({{0.5, 2.0, 1.0, 3.5}, {4.0, 9.0, 6.0, 5.0}});
        auto r2 = levene({{3.5, 1.0, 2.0, 0.5}, {9.0, 4.0, 5.0, 6.0}});
        CHECK(r1.statistic == doctest::Approx(r2.statistic).epsilon(1e-12));
        CHECK(r1.p_value == doctest::Approx(r2.p_value).epsilon(1e-12));
    }

    SUBCASE("all-constant groups are degenerate, not an error") {
        auto r = levene({{5.0, 5.0}, {7.0, 7.0, 7.0}});
        CHECK(r.statistic == 0.0);
        CHECK(r.p_value == 1.0);
        CHECK(r.degenerate);
    }

    SUBCASE("a genuinely larger spread is flagged when df allows") {
        // 10 tight values vs 10 spread values: df (1,18) has real power
        std::vector<double> tight, wide;
        dal::Rng rng(99);
        for (int i = 0; i < 10; ++i) {
            tight.push_back(0.05 * rng.normal());
            wide.push_back(5.0 * rng.normal());
        }
        auto r = levene({tight, wide});
        CHECK(r.p_value < 0.05);
        CHECK(r.significant);
    }

    SUBCASE("input validation") {
        CHECK_THROWS_AS(levene({{1.0, 2.0}}), std::invalid_argument);
        CHECK_THROWS_AS(levene({{1.0, 2.0}, {3.0}}), std::invalid_argument);
    }
}

TEST_CASE("one-way anova reproduces the hand-worked example") {
    SUBCASE("groups {1,2,3} and {2,3,4}") {
        auto r = one_way_anova({{1.0, 2.0, 3.0}, {2.0, 3.0, 4.0}});
        // SSB = 1.5 (means 2 and 3 about grand mean 2.5), SSW = 4, df (1,4)
        CHECK(r.statistic == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(r.p_value == doctest::Approx(0.2878641347266907).epsilon(1e-10));
        CHECK(r.n_per_group == std::vector<int>{3, 3});
    }

    SUBCASE("identical groups give F = 0, p = 1") {
        auto r = one_way_anova({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
        CHECK(r.statistic == 0.0);
        CHECK(r.p_value == 1.0);
    }

    SUBCASE("F is invariant under a common affine map") {
        const std::vector<std::vector<double>> g = {{1.0, 2.0, 3.0, 2.5},
                                                    {2.0, 3.0, 4.0, 3.1},
                                                    {0.5, 1.5, 2.5, 1.9}};
        std::vector<std::vector<double>> h = g;
        for (auto& grp : h)
            for (double& v : grp) v = -2.5 * v + 7.0;
        auto rg = one_way_anova(g);
        auto rh = one_way_anova(h);
        CHECK(rg.statistic == doctest::Approx(rh.statistic).epsilon(1e-9));
        CHECK(rg.p_value == doctest::Approx(rh.p_value).epsilon(1e-9));
    }

    SUBCASE("degenerate within-group variance is an error") {
        try {
            one_way_anova({{1.0, 1.0, 1.0}, {2.0, 2.0, 2.0}});
            FAIL("expected degeneracy error");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("degenerate within-group variance") !=
                  std::string::npos);
        }
    }

    SUBCASE("null calibration: rejection rate near 5%") {
        // 10,000 replicates of 4 null groups x 8 normal values
        dal::Rng rng(20260816);
        const int replicates = 10000;
        int rejects = 0;
        std::vector<std::vector<double>> groups(4, std::vector<double>(8));
        for (int rep = 0; rep < replicates; ++rep) {
            for (auto& g : groups)
                for (double& v : g) v = rng.normal();
            if (one_way_anova(groups).p_value < 0.05) ++rejects;
        }
        const double rate = static_cast<double>(rejects) / replicates;
        INFO("rejection rate ", rate);
        CHECK(rate >= 0.04);
        CHECK(rate <= 0.06);
    }
}

TEST_CASE("bonferroni pairwise t-tests reproduce the frozen contrasts") {
    SUBCASE("the three w/o-vs-w/ contrasts from the reference table") {
        auto results = bonferroni_pairwise(
            {{kDalWo, kDalW}, {kCspWo, kCspW}, {kEenWo, kEenW}}, true);
        REQUIRE(results.size() == 3);

        CHECK(results[0].statistic == doctest::Approx(-9.797865910391089).epsilon(1e-9));
        CHECK(results[0].p_value == doctest::Approx(2.4473199042296863e-05).epsilon(1e-9));
        CHECK(*results[0].adjusted_p == doctest::Approx(7.341959712689059e-05).epsilon(1e-9));
        CHECK(results[0].significant); // the autoencoder's gain is real

        CHECK(results[1].statistic == doctest::Approx(2.1501788919032263).epsilon(1e-9));
        CHECK(results[1].p_value == doctest::Approx(0.06859550499990878).epsilon(1e-9));
        CHECK(*results[1].adjusted_p == doctest::Approx(0.20578651499972633).epsilon(1e-9));
        CHECK_FALSE(results[1].significant);

        CHECK(results[2].statistic == doctest::Approx(1.1876325713264364).epsilon(1e-9));
        CHECK(results[2].p_value == doctest::Approx(0.2737096197815474).epsilon(1e-9));
        CHECK(*results[2].adjusted_p == doctest::Approx(0.8211288593446422).epsilon(1e-9));
        CHECK_FALSE(results[2].significant);

        for (const auto& r : results) {
            CHECK(*r.adjusted_p >= r.p_value);
            CHECK(r.n_per_group == std::vector<int>{8, 8});
        }
    }

    SUBCASE("identical samples give t = 0, p = 1") {
        const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
        auto results = bonferroni_pairwise({{a, a}}, true);
        CHECK(results[0].statistic == 0.0);
        CHECK(results[0].p_value == 1.0);
        CHECK(*results[0].adjusted_p == 1.0);
    }

    SUBCASE("the Bonferroni product is capped at 1") {
        // a weak contrast among m=3: raw p ~ 0.6, adjusted would be ~1.9
        const std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0};
        const std::vector<double> b = {0.9, 2.1, 2.95, 4.05, 5.0};
        auto results = bonferroni_pairwise({{a, b}, {a, b}, {a, b}}, true);
        for (const auto& r : results) {
            INFO("raw p ", r.p_value);
            CHECK(r.p_value > 1.0 / 3.0);
            CHECK(*r.adjusted_p == 1.0);
        }
    }

    SUBCASE("constant nonzero differences are an error") {
        const std::vector<double> a = {1.0, 2.0, 3.0};
        const std::vector<double> b = {2.0, 3.0, 4.0}; // d = -1 everywhere
        try {
            bonferroni_pairwise({{a, b}}, true);
            FAIL("expected zero-variance error");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("zero variance") != std::string::npos);
        }
    }

    SUBCASE("paired mode insists on aligned lengths") {
        CHECK_THROWS_AS(bonferroni_pairwise({{{1.0, 2.0, 3.0}, {1.0, 2.0}}}, true),
                        std::invalid_argument);
    }

    SUBCASE("unpaired mode is sign-symmetric and null on equal groups") {
        const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
        const std::vector<double> b = {2.5, 3.5, 4.5, 5.5};
        auto ab = bonferroni_pairwise({{a, b}}, false);
        auto ba = bonferroni_pairwise({{b, a}}, false);
        CHECK(ab[0].statistic == doctest::Approx(-ba[0].statistic).epsilon(1e-12));
        CHECK(ab[0].p_value == doctest::Approx(ba[0].p_value).epsilon(1e-12));
        CHECK(ab[0].name == "two_sample_t");

        auto eq = bonferroni_pairwise({{a, a}}, false);
        CHECK(eq[0].statistic == 0.0);
        CHECK(eq[0].p_value == 1.0);
        // unpaired mode allows different lengths
        CHECK_NOTHROW(bonferroni_pairwise({{{1.0, 2.0, 3.0}, {1.0, 2.0}}}, false));
    }
}

TEST_CASE("the battery runs the tests in the paper's order") {
    const std::vector<std::string> names = {"dal_wo", "dal_w", "csp_wo",
                                            "csp_w",  "een_wo", "een_w"};
    const std::vector<std::vector<double>> groups = {kDalWo, kDalW, kCspWo,
                                                     kCspW,  kEenWo, kEenW};
    auto report = run_battery(names, groups, {{0, 1}, {2, 3}, {4, 5}});

    REQUIRE(report.normality.size() == 6);
    REQUIRE(report.pairwise.size() == 3);

    // only the autoencoder's w/o-vs-w/ contrast survives the correction
    CHECK(report.pairwise[0].significant);
    CHECK_FALSE(report.pairwise[1].significant);
    CHECK_FALSE(report.pairwise[2].significant);
    CHECK(report.pairwise[0].groups == std::vector<std::string>{"dal_wo", "dal_w"});

    CHECK(report.homoscedasticity.name == "levene");
    CHECK(report.anova.name == "anova");
    CHECK(report.anova.groups == names);

    // JSON keeps the section order: 6 normality rows, levene, anova, 3 pairwise
    const auto j = report.to_json();
    REQUIRE(j.at("tests").size() == 11);
    for (int i = 0; i < 6; ++i) CHECK(j.at("tests")[i].at("name") == "shapiro_wilk");
    CHECK(j.at("tests")[6].at("name") == "levene");
    CHECK(j.at("tests")[7].at("name") == "anova");
    for (int i = 8; i < 11; ++i) CHECK(j.at("tests")[i].at("name") == "paired_t");
    CHECK(j.contains("normality_ok"));
    CHECK(j.contains("homoscedasticity_ok"));

    // flags mirror the individual results
    bool all_normal = true;
    for (const auto& r : report.normality) all_normal = all_normal && r.p_value >= 0.05;
    CHECK(report.normality_ok == all_normal);
    CHECK(report.homoscedasticity_ok == (report.homoscedasticity.p_value >= 0.05));

    // every reported p lies in [0,1] and decisions are monotone with 0.05
    for (const auto& t : j.at("tests")) {
        const double p = t.at("p_value").get<double>();
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        if (!t.at("adjusted_p").is_null())
            CHECK(t.at("adjusted_p").get<double>() >= p);
    }

    CHECK_THROWS_AS(run_battery({"a"}, groups, {}), std::invalid_argument);
    CHECK_THROWS_AS(run_battery(names, groups, {{0, 9}}), std::invalid_argument);
}
