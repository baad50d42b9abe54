#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace dal::stats {

// ---------------------------------------------------------------------------
// distribution plumbing

// Standard normal CDF, via erfc.
double normal_cdf(double z);

// Standard normal quantile (AS 241, PPND16); p must lie strictly in (0,1).
double normal_quantile(double p);

// Regularized incomplete beta I_x(a,b), evaluated by the Lentz continued
// fraction with the symmetric switch at x = (a+1)/(a+b+2); a,b > 0, x in [0,1].
double reg_inc_beta(double a, double b, double x);

// P(F >= f) for an F(df1, df2) variable: I_{df2/(df2+df1 f)}(df2/2, df1/2).
double f_survival(double f, int df1, int df2);

// Two-sided t-test p-value: I_{df/(df+t^2)}(df/2, 1/2).
double t_survival(double t, int df);

// ---------------------------------------------------------------------------
// test results

struct TestResult {
    std::string name;                  // e.g. "shapiro_wilk", "levene", "anova", "paired_t"
    std::vector<std::string> groups;   // group labels involved
    std::vector<int> n_per_group;      // sample sizes, matching `groups`
    double statistic = 0.0;
    double p_value = 1.0;
    std::optional<double> adjusted_p;  // set when multiple-comparison corrected
    bool significant = false;          // decision at 0.05 on adjusted p when present
    bool degenerate = false;           // e.g. Levene with all |x - mean| zero

    nlohmann::json to_json() const;
};

// Shapiro-Wilk normality test (Royston's AS R94 approximation), 3 <= n <= 5000.
TestResult shapiro_wilk(const std::vector<double>& x);

// Classic mean-centered Levene: one-way ANOVA F on z_ij = |x_ij - mean_i|.
// All z identically zero is degenerate: F = 0, p = 1, degenerate flag set.
TestResult levene(const std::vector<std::vector<double>>& groups);

// One-way ANOVA, F = (SSB/(k-1)) / (SSW/(N-k)).
TestResult one_way_anova(const std::vector<std::vector<double>>& groups);

// Two-sided t-test per pair with Bonferroni adjustment m = pairs.size().
// paired=true: t = mean(d)/(sd(d)/sqrt(n)) on d = a - b, df = n-1 (requires
// equal lengths). paired=false: pooled two-sample t, df = n_a + n_b - 2.
// Differences with zero variance are an error unless they are identically
// zero, which is the defined t = 0, p = 1 case.
std::vector<TestResult> bonferroni_pairwise(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs, bool paired);

// ---------------------------------------------------------------------------
// the full battery, in the paper's order

struct StatReport {
    std::vector<TestResult> normality;  // Shapiro-Wilk, one per group
    TestResult homoscedasticity;        // Levene across all groups
    TestResult anova;                   // one-way ANOVA across all groups
    std::vector<TestResult> pairwise;   // Bonferroni-adjusted paired t-tests
    bool normality_ok = false;          // every group's Shapiro-Wilk p >= 0.05
    bool homoscedasticity_ok = false;   // Levene p >= 0.05

    // "tests" array keeps the battery order: normality first, then Levene,
    // ANOVA, and the corrected pairwise comparisons.
    nlohmann::json to_json() const;
};

// Runs normality -> homoscedasticity -> ANOVA -> pairwise on named groups.
// `paired_contrasts` are index pairs into `groups` (paired t across aligned
// entries, e.g. the same subjects under two conditions).
StatReport run_battery(const std::vector<std::string>& group_names,
                       const std::vector<std::vector<double>>& groups,
                       const std::vector<std::pair<int, int>>& paired_contrasts);

} // namespace dal::stats
