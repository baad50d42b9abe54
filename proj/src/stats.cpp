#include "dal/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace dal::stats {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

double mean_of(const std::vector<double>& x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// sum of squared deviations from the mean
double ss_about_mean(const std::vector<double>& x) {
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss;
}

bool decide(const TestResult& r) {
    return (r.adjusted_p ? *r.adjusted_p : r.p_value) < 0.05;
}

// F statistic and degrees of freedom of a one-way layout; the caller decides
// how to handle SSW = 0.
struct FStat {
    double ssb = 0.0, ssw = 0.0;
    int df1 = 0, df2 = 0;
};

FStat one_way_layout(const std::vector<std::vector<double>>& groups) {
    const int k = static_cast<int>(groups.size());
    int64_t n_total = 0;
    double grand_sum = 0.0;
    for (const auto& g : groups) {
        n_total += static_cast<int64_t>(g.size());
        grand_sum = std::accumulate(g.begin(), g.end(), grand_sum);
    }
    const double grand_mean = grand_sum / static_cast<double>(n_total);

    FStat f;
    f.df1 = k - 1;
    f.df2 = static_cast<int>(n_total) - k;
    for (const auto& g : groups) {
        const double m = mean_of(g);
        f.ssb += static_cast<double>(g.size()) * (m - grand_mean) * (m - grand_mean);
        for (double v : g) f.ssw += (v - m) * (v - m);
    }
    return f;
}

} // namespace

// ---------------------------------------------------------------------------
// normal distribution

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
    require(p > 0.0 && p < 1.0,
            "normal_quantile: p must lie strictly in (0,1), got " + std::to_string(p));
    // Wichura's algorithm AS 241, PPND16: maximum error ~1e-16
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            q * (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                      6.7265770927008700853e4) *
                         r +
                     4.5921953931549871457e4) *
                        r +
                    1.3731693765509461125e4) *
                       r +
                   1.9715909503065514427e3) *
                      r +
                  1.3314166789178437745e2) *
                     r +
                 3.3871328727963666080e0);
        const double den =
            ((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) *
                    r +
                2.1213794301586595867e4) *
                   r +
               5.3941960214247511077e3) *
                  r +
              6.8718700749205790830e2) *
                 r +
             4.2313330701600911252e1) *
                r +
            1.0;
        return num / den;
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) *
                     r +
                 1.27045825245236838258e0) *
                    r +
                3.64784832476320460504e0) *
                   r +
               5.76949722146069140550e0) *
                  r +
              4.63033784615654529590e0) *
                 r +
             1.42343711074968357734e0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) *
                     r +
                 1.48103976427480074590e-1) *
                    r +
                6.89767334985100004550e-1) *
                   r +
               1.67638483018380384940e0) *
                  r +
              2.05319162663775882187e0) *
                 r +
             1.0);
        value = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) *
                     r +
                 2.65321895265761230930e-2) *
                    r +
                2.96560571828504891230e-1) *
                   r +
               1.78482653991729133580e0) *
                  r +
              5.46378491116411436990e0) *
                 r +
             6.65790464350110377720e0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) *
                     r +
                 7.86869131145613259100e-4) *
                    r +
                1.48753612908506148525e-2) *
                   r +
               1.36929880922735805310e-1) *
                  r +
              5.99832206555887937690e-1) *
                 r +
             1.0);
        value = num / den;
    }
    return q < 0.0 ? -value : value;
}

// ---------------------------------------------------------------------------
// regularized incomplete beta

namespace {

// continued fraction for I_x(a,b), modified Lentz
double beta_cf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    constexpr double tiny = 1e-300;

    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 10.0 * eps) return h;
    }
    throw std::runtime_error("reg_inc_beta: continued fraction did not converge for a = " +
                             std::to_string(a) + ", b = " + std::to_string(b) +
                             ", x = " + std::to_string(x));
}

} // namespace

double reg_inc_beta(double a, double b, double x) {
    require(a > 0.0 && b > 0.0, "reg_inc_beta: a and b must be positive");
    require(x >= 0.0 && x <= 1.0, "reg_inc_beta: x must lie in [0,1], got " + std::to_string(x));
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;

    const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                  a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double f_survival(double f, int df1, int df2) {
    require(df1 >= 1 && df2 >= 1, "f_survival: degrees of freedom must be >= 1");
    require(f >= 0.0, "f_survival: F must be nonnegative, got " + std::to_string(f));
    const double d1 = df1, d2 = df2;
    return reg_inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

double t_survival(double t, int df) {
    require(df >= 1, "t_survival: degrees of freedom must be >= 1");
    const double d = df;
    return reg_inc_beta(d / 2.0, 0.5, d / (d + t * t));
}

// ---------------------------------------------------------------------------
// Shapiro-Wilk, Royston's AS R94 approximation

TestResult shapiro_wilk(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    require(n >= 3 && n <= 5000,
            "shapiro_wilk: sample size must lie in [3, 5000], got " + std::to_string(n));

    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    require(sorted.front() < sorted.back(), "shapiro_wilk: zero variance sample");

    // expected normal order statistics (Blom scores) and their normalization
    std::vector<double> m(static_cast<size_t>(n));
    double ssq_m = 0.0;
    for (int i = 0; i < n; ++i) {
        m[static_cast<size_t>(i)] = normal_quantile((i + 1 - 0.375) / (n + 0.25));
        ssq_m += m[static_cast<size_t>(i)] * m[static_cast<size_t>(i)];
    }

    std::vector<double> a(static_cast<size_t>(n));
    if (n == 3) {
        a[0] = -std::numbers::sqrt2 / 2.0;
        a[1] = 0.0;
        a[2] = -a[0];
    } else {
        const double u = 1.0 / std::sqrt(static_cast<double>(n));
        const double rm = std::sqrt(ssq_m);
        const double an = m[static_cast<size_t>(n - 1)] / rm + 0.221157 * u - 0.147981 * u * u -
                          2.071190 * u * u * u + 4.434685 * u * u * u * u -
                          2.706056 * u * u * u * u * u;
        double phi;
        int i1; // first index (0-based) of the plain rescaled block
        if (n > 5) {
            const double an1 = m[static_cast<size_t>(n - 2)] / rm + 0.042981 * u -
                               0.293762 * u * u - 1.752461 * u * u * u +
                               5.682633 * u * u * u * u - 3.582633 * u * u * u * u * u;
            phi = (ssq_m - 2.0 * m[static_cast<size_t>(n - 1)] * m[static_cast<size_t>(n - 1)] -
                   2.0 * m[static_cast<size_t>(n - 2)] * m[static_cast<size_t>(n - 2)]) /
                  (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            a[static_cast<size_t>(n - 1)] = an;
            a[static_cast<size_t>(n - 2)] = an1;
            a[0] = -an;
            a[1] = -an1;
            i1 = 2;
        } else {
            phi = (ssq_m - 2.0 * m[static_cast<size_t>(n - 1)] * m[static_cast<size_t>(n - 1)]) /
                  (1.0 - 2.0 * an * an);
            a[static_cast<size_t>(n - 1)] = an;
            a[0] = -an;
            i1 = 1;
        }
        const double rphi = std::sqrt(phi);
        for (int i = i1; i < n - i1; ++i) a[static_cast<size_t>(i)] = m[static_cast<size_t>(i)] / rphi;
    }

    double num = 0.0;
    for (int i = 0; i < n; ++i) num += a[static_cast<size_t>(i)] * sorted[static_cast<size_t>(i)];
    const double w = std::min(1.0, num * num / ss_about_mean(sorted));

    // p-value transform
    double p;
    if (n == 3) {
        constexpr double pi6 = 6.0 / std::numbers::pi;
        constexpr double stqr = 1.047197551196598; // asin(sqrt(3/4))
        p = std::clamp(pi6 * (std::asin(std::sqrt(w)) - stqr), 0.0, 1.0);
    } else {
        double z;
        if (n <= 11) {
            const double nd = n;
            const double gamma = 0.459 * nd - 2.273;
            const double wt = -std::log(gamma - std::log1p(-w));
            const double mu = 0.5440 - 0.39978 * nd + 0.025054 * nd * nd - 0.0006714 * nd * nd * nd;
            const double sigma =
                std::exp(1.3822 - 0.77857 * nd + 0.062767 * nd * nd - 0.0020322 * nd * nd * nd);
            z = (wt - mu) / sigma;
        } else {
            const double lnn = std::log(static_cast<double>(n));
            const double wt = std::log1p(-w);
            const double mu =
                -1.5861 - 0.31082 * lnn - 0.083751 * lnn * lnn + 0.0038915 * lnn * lnn * lnn;
            const double sigma = std::exp(-0.4803 - 0.082676 * lnn + 0.0030302 * lnn * lnn);
            z = (wt - mu) / sigma;
        }
        p = std::isfinite(z) ? normal_cdf(-z) : 1.0; // W == 1 drives z to -inf
    }

    TestResult r;
    r.name = "shapiro_wilk";
    r.n_per_group = {n};
    r.statistic = w;
    r.p_value = p;
    r.significant = decide(r);
    return r;
}

// ---------------------------------------------------------------------------
// Levene and ANOVA

namespace {

void check_groups(const std::vector<std::vector<double>>& groups, const char* who) {
    require(groups.size() >= 2, std::string(who) + ": need at least 2 groups");
    for (const auto& g : groups)
        require(g.size() >= 2, std::string(who) + ": every group needs at least 2 values");
}

std::vector<int> group_sizes(const std::vector<std::vector<double>>& groups) {
    std::vector<int> sizes;
    for (const auto& g : groups) sizes.push_back(static_cast<int>(g.size()));
    return sizes;
}

} // namespace

TestResult levene(const std::vector<std::vector<double>>& groups) {
    check_groups(groups, "levene");

    std::vector<std::vector<double>> z(groups.size());
    double z_total = 0.0;
    for (size_t i = 0; i < groups.size(); ++i) {
        const double m = mean_of(groups[i]);
        for (double v : groups[i]) {
            z[i].push_back(std::abs(v - m));
            z_total += z[i].back();
        }
    }

    TestResult r;
    r.name = "levene";
    r.n_per_group = group_sizes(groups);
    if (z_total == 0.0) {
        // every group is constant: spread is trivially equal
        r.statistic = 0.0;
        r.p_value = 1.0;
        r.degenerate = true;
        r.significant = false;
        return r;
    }

    const FStat f = one_way_layout(z);
    if (f.ssw == 0.0) {
        // all within-group deviations identical; no spread in z to test
        r.statistic = 0.0;
        r.p_value = 1.0;
        r.degenerate = true;
        r.significant = false;
        return r;
    }
    r.statistic = (f.ssb / f.df1) / (f.ssw / f.df2);
    r.p_value = f_survival(r.statistic, f.df1, f.df2);
    r.significant = decide(r);
    return r;
}

TestResult one_way_anova(const std::vector<std::vector<double>>& groups) {
    check_groups(groups, "one_way_anova");
    const FStat f = one_way_layout(groups);
    require(f.ssw > 0.0, "one_way_anova: degenerate within-group variance");

    TestResult r;
    r.name = "anova";
    r.n_per_group = group_sizes(groups);
    r.statistic = (f.ssb / f.df1) / (f.ssw / f.df2);
    r.p_value = f_survival(r.statistic, f.df1, f.df2);
    r.significant = decide(r);
    return r;
}

// ---------------------------------------------------------------------------
// pairwise t-tests with Bonferroni correction

std::vector<TestResult> bonferroni_pairwise(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs, bool paired) {
    require(!pairs.empty(), "bonferroni_pairwise: need at least one pair");
    const double m = static_cast<double>(pairs.size());

    std::vector<TestResult> results;
    for (const auto& [a, b] : pairs) {
        TestResult r;
        r.name = paired ? "paired_t" : "two_sample_t";
        r.n_per_group = {static_cast<int>(a.size()), static_cast<int>(b.size())};

        double t;
        int df;
        if (paired) {
            require(a.size() == b.size(),
                    "bonferroni_pairwise: paired test needs equal lengths, got " +
                        std::to_string(a.size()) + " and " + std::to_string(b.size()));
            require(a.size() >= 2, "bonferroni_pairwise: need at least 2 pairs of values");
            const int n = static_cast<int>(a.size());
            std::vector<double> d(a.size());
            for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
            const double md = mean_of(d);
            const double sd = std::sqrt(ss_about_mean(d) / (n - 1));
            df = n - 1;
            if (sd == 0.0) {
                require(md == 0.0, "bonferroni_pairwise: zero variance in the differences with "
                                   "nonzero mean; t is undefined");
                t = 0.0;
            } else {
                t = md / (sd / std::sqrt(static_cast<double>(n)));
            }
        } else {
            require(a.size() >= 2 && b.size() >= 2,
                    "bonferroni_pairwise: need at least 2 values per group");
            const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
            df = na + nb - 2;
            const double pooled = (ss_about_mean(a) + ss_about_mean(b)) / df;
            const double delta = mean_of(a) - mean_of(b);
            if (pooled == 0.0) {
                require(delta == 0.0, "bonferroni_pairwise: zero variance in both groups with "
                                      "different means; t is undefined");
                t = 0.0;
            } else {
                t = delta / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
            }
        }

        r.statistic = t;
        r.p_value = t_survival(t, df);
        r.adjusted_p = std::min(1.0, m * r.p_value);
        r.significant = decide(r);
        results.push_back(std::move(r));
    }
    return results;
}

// ---------------------------------------------------------------------------
// serialization and the ordered battery

nlohmann::json TestResult::to_json() const {
    json j;
    j["name"] = name;
    j["groups"] = groups;
    j["n_per_group"] = n_per_group;
    j["statistic"] = statistic;
    j["p_value"] = p_value;
    j["adjusted_p"] = adjusted_p ? json(*adjusted_p) : json(nullptr);
    j["significant"] = significant;
    j["degenerate"] = degenerate;
    return j;
}

nlohmann::json StatReport::to_json() const {
    json tests = json::array();
    for (const auto& t : normality) tests.push_back(t.to_json());
    tests.push_back(homoscedasticity.to_json());
    tests.push_back(anova.to_json());
    for (const auto& t : pairwise) tests.push_back(t.to_json());

    json j;
    j["normality_ok"] = normality_ok;
    j["homoscedasticity_ok"] = homoscedasticity_ok;
    j["tests"] = std::move(tests);
    return j;
}

StatReport run_battery(const std::vector<std::string>& group_names,
                       const std::vector<std::vector<double>>& groups,
                       const std::vector<std::pair<int, int>>& paired_contrasts) {
    require(group_names.size() == groups.size(),
            "run_battery: group name count does not match group count");
    const int k = static_cast<int>(groups.size());

    StatReport report;
    report.normality_ok = true;
    for (int i = 0; i < k; ++i) {
        TestResult r = shapiro_wilk(groups[static_cast<size_t>(i)]);
        r.groups = {group_names[static_cast<size_t>(i)]};
        report.normality_ok = report.normality_ok && r.p_value >= 0.05;
        report.normality.push_back(std::move(r));
    }

    report.homoscedasticity = levene(groups);
    report.homoscedasticity.groups = group_names;
    report.homoscedasticity_ok = report.homoscedasticity.p_value >= 0.05;

    report.anova = one_way_anova(groups);
    report.anova.groups = group_names;

    std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
    for (auto [ia, ib] : paired_contrasts) {
        require(ia >= 0 && ia < k && ib >= 0 && ib < k,
                "run_battery: contrast index out of range");
        pairs.emplace_back(groups[static_cast<size_t>(ia)], groups[static_cast<size_t>(ib)]);
    }
    if (!pairs.empty()) {
        report.pairwise = bonferroni_pairwise(pairs, true);
        for (size_t i = 0; i < report.pairwise.size(); ++i) {
            const auto [ia, ib] = paired_contrasts[i];
            report.pairwise[i].groups = {group_names[static_cast<size_t>(ia)],
                                         group_names[static_cast<size_t>(ib)]};
        }
    }
    return report;
}

} // namespace dal::stats
