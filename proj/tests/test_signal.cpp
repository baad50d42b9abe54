#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "dal/signal.hpp"

using namespace dal::prep;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double hz, double fs, int n, double amp = 1.0, double phase = 0.0) {
    std::vector<double> v(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = amp * std::sin(2 * kPi * hz * i / fs + phase);
    return v;
}

double rms(const std::vector<double>& x, int from, int to) {
    double s = 0;
    for (int i = from; i < to; ++i) s += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
    return std::sqrt(s / (to - from));
}

} // namespace

TEST_CASE("notch magnitude response meets the design spec analytically") {
    const Biquad bq = design_notch(60.0, 30.0, 1000.0);
    // zero at the center: attenuation far beyond 30 dB
    CHECK(magnitude_at(bq, 60.0, 1000.0) < std::pow(10.0, -30.0 / 20.0));
    // passband ripple at half and double the center frequency under 1 dB
    CHECK(magnitude_at(bq, 30.0, 1000.0) > std::pow(10.0, -1.0 / 20.0));
    CHECK(magnitude_at(bq, 120.0, 1000.0) > std::pow(10.0, -1.0 / 20.0));
    CHECK(magnitude_at(bq, 30.0, 1000.0) <= 1.0 + 1e-9);
    // unit gain at DC
    CHECK(magnitude_at(bq, 0.0, 1000.0) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(design_notch(600.0, 30.0, 1000.0), std::invalid_argument);
    CHECK_THROWS_AS(design_notch(60.0, -1.0, 1000.0), std::invalid_argument);
}

TEST_CASE("butterworth lowpass response") {
    const auto low = design_butter_lowpass(4, 115.2, 1000.0);
    REQUIRE(low.size() == 2);
    CHECK(magnitude_at(low, 0.0, 1000.0) == doctest::Approx(1.0).epsilon(1e-12));
    // -3 dB at the cutoff, strongly attenuated an octave above
    CHECK(magnitude_at(low, 115.2, 1000.0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
    CHECK(magnitude_at(low, 230.4, 1000.0) < 0.07);
    CHECK(magnitude_at(low, 5.0, 1000.0) == doctest::Approx(1.0).epsilon(1e-6));

    CHECK_THROWS_AS(design_butter_lowpass(3, 100.0, 1000.0), std::invalid_argument);
}

TEST_CASE("notch filter removes 60 Hz, passes DC and 10 Hz") {
    const double fs = 1000.0;
    const int n = 2000;

    // pure 60 Hz line component collapses to under 3% in the steady region
    auto line = sine(60.0, fs, n);
    std::vector<double> x = line;
    notch_filter(x, 1, n, fs, 60.0, 30.0);
    const double in_rms = rms(line, 500, 1500);
    CHECK(rms(x, 500, 1500) <= 0.03 * in_rms);

    // DC passes through the whole record, edges included
    std::vector<double> dc(n, 0.75);
    notch_filter(dc, 1, n, fs, 60.0, 30.0);
    for (double v : dc) CHECK(std::abs(v - 0.75) < 1e-6);

    // 10 Hz amplitude survives within 5%
    auto slow = sine(10.0, fs, n);
    std::vector<double> y = slow;
    notch_filter(y, 1, n, fs, 60.0, 30.0);
    const double a_in = rms(slow, 250, 1750);
    const double a_out = rms(y, 250, 1750);
    CHECK(std::abs(a_out - a_in) / a_in < 0.05);

    // filtering is per channel: a two-channel buffer treats rows independently
    std::vector<double> two;
    two.insert(two.end(), line.begin(), line.end());
    auto slow2 = sine(10.0, fs, n);
    two.insert(two.end(), slow2.begin(), slow2.end());
    notch_filter(two, 2, n, fs, 60.0, 30.0);
    std::vector<double> ch0(two.begin(), two.begin() + n);
    std::vector<double> ch1(two.begin() + n, two.end());
    CHECK(rms(ch0, 500, 1500) <= 0.03 * in_rms);
    CHECK(std::abs(rms(ch1, 250, 1750) - a_in) / a_in < 0.05);
}

TEST_CASE("resample lengths and fidelity") {
    const int n = 2000;
    auto x = sine(5.0, 1000.0, n);

    int t_same = 0;
    auto same = resample(x, 1, n, 1000.0, 1000.0, t_same);
    CHECK(t_same == n);
    for (int i = 0; i < n; ++i) CHECK(same[static_cast<size_t>(i)] == doctest::Approx(x[static_cast<size_t>(i)]));

    int t_out = 0;
    auto y = resample(x, 1, n, 1000.0, 256.0, t_out);
    CHECK(t_out == 512);

    // correlation against the analytically resampled sinusoid
    auto oracle = sine(5.0, 256.0, 512);
    double num = 0, da = 0, db = 0;
    for (int i = 0; i < 512; ++i) {
        num += y[static_cast<size_t>(i)] * oracle[static_cast<size_t>(i)];
        da += y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
        db += oracle[static_cast<size_t>(i)] * oracle[static_cast<size_t>(i)];
    }
    CHECK(num / std::sqrt(da * db) > 0.999);

    int t_bad = 0;
    CHECK_THROWS_AS(resample(x, 1, n, 1000.0, 2000.0, t_bad), std::invalid_argument);
}

TEST_CASE("task window extraction") {
    std::vector<double> x(2048);
    for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
    int t = 0;
    auto w = extract_task_window(x, 1, 2048, 256.0, 2.0, t);
    CHECK(t == 512);
    CHECK(w.size() == 512);
    CHECK(w[0] == doctest::Approx(0));
    CHECK(w[511] == doctest::Approx(511));

    std::vector<double> exact(512, 1.5);
    auto e = extract_task_window(exact, 1, 512, 256.0, 2.0, t);
    CHECK(e == exact);

    std::vector<double> tiny(511, 0.0);
    CHECK_THROWS_AS(extract_task_window(tiny, 1, 511, 256.0, 2.0, t), std::invalid_argument);
}

TEST_CASE("zscore normalization") {
    const int n = 512;
    auto x = sine(7.0, 256.0, n, 3.0, 0.4);
    for (auto& v : x) v += 2.5;
    std::vector<double> a = x;
    zscore_normalize(a, 1, n);
    double mean = 0;
    for (double v : a) mean += v;
    mean /= n;
    CHECK(std::abs(mean) < 1e-10);
    double var = 0;
    for (double v : a) var += (v - mean) * (v - mean);
    CHECK(std::abs(std::sqrt(var / n) - 1.0) < 1e-6);

    // constant channel becomes a zero row
    std::vector<double> c(n, 42.0);
    zscore_normalize(c, 1, n);
    for (double v : c) CHECK(v == 0.0);

    // affine invariance: a*x + b normalizes to the same output (a > 0)
    std::vector<double> b = x;
    for (auto& v : b) v = 1.7 * v - 3.2;
    zscore_normalize(b, 1, n);
    for (int i = 0; i < n; ++i)
        CHECK(b[static_cast<size_t>(i)] == doctest::Approx(a[static_cast<size_t>(i)]).epsilon(1e-9));
}

TEST_CASE("full chain yields 58x512 and is deterministic") {
    const int channels = 58, samples = 2000;
    std::vector<float> raw(static_cast<size_t>(channels) * samples);
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < samples; ++i)
            raw[static_cast<size_t>(c) * samples + i] = static_cast<float>(
                std::sin(2 * kPi * (8.0 + c * 0.3) * i / 1000.0) +
                0.5 * std::sin(2 * kPi * 60.0 * i / 1000.0) + 0.01 * c);

    PrepConfig cfg;
    auto a = preprocess_trial(raw.data(), channels, samples, 1000.0, cfg);
    CHECK(a.size() == static_cast<size_t>(channels) * 512);

    // per-channel standardization holds at the output
    for (int c = 0; c < 3; ++c) {
        double mean = 0;
        for (int i = 0; i < 512; ++i) mean += a[static_cast<size_t>(c) * 512 + i];
        CHECK(std::abs(mean / 512) < 1e-6);
    }

    auto b = preprocess_trial(raw.data(), channels, samples, 1000.0, cfg);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
