#include "dal/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dal::prep {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Steady-state filter state for a unit-level input (direct form II
// transposed); scaled by the first sample so constants pass untouched.
void steady_state_zi(const Biquad& q, double x0, double& z1, double& z2) {
    const double g = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    z2 = (q.b2 - q.a2 * g) * x0;
    z1 = (q.b1 - q.a1 * g + q.b2 - q.a2 * g) * x0;
}

void filter_forward(const Biquad& q, std::vector<double>& x) {
    double z1, z2;
    steady_state_zi(q, x.empty() ? 0.0 : x.front(), z1, z2);
    for (double& v : x) {
        const double y = q.b0 * v + z1;
        z1 = q.b1 * v - q.a1 * y + z2;
        z2 = q.b2 * v - q.a2 * y;
        v = y;
    }
}

constexpr int kPadLen = 9; // 3 * filter length, as in common zero-phase practice

} // namespace

Biquad design_notch(double f0, double q, double fs) {
    require(fs > 0, "notch: sampling rate must be positive");
    require(f0 > 0 && f0 < fs / 2, "notch: center frequency must sit below Nyquist");
    require(q > 0, "notch: Q must be positive");
    const double w0 = 2.0 * std::numbers::pi * f0 / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double c = std::cos(w0);
    const double a0 = 1.0 + alpha;
    return Biquad{1.0 / a0, -2.0 * c / a0, 1.0 / a0, -2.0 * c / a0, (1.0 - alpha) / a0};
}

Biquad design_bandpass(double f0, double q, double fs) {
    require(fs > 0, "bandpass: sampling rate must be positive");
    require(f0 > 0 && f0 < fs / 2, "bandpass: center frequency must sit below Nyquist");
    require(q > 0, "bandpass: Q must be positive");
    const double w0 = 2.0 * std::numbers::pi * f0 / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double c = std::cos(w0);
    const double a0 = 1.0 + alpha;
    return Biquad{alpha / a0, 0.0, -alpha / a0, -2.0 * c / a0, (1.0 - alpha) / a0};
}

std::vector<Biquad> design_butter_lowpass(int order, double fc, double fs) {
    require(order >= 2 && order % 2 == 0, "butterworth: order must be a positive even number");
    require(fc > 0 && fc < fs / 2, "butterworth: cutoff must sit below Nyquist");
    // prewarped bilinear transform of the analog prototype pole pairs
    const double k = 1.0 / std::tan(std::numbers::pi * fc / fs);
    std::vector<Biquad> sections;
    for (int i = 0; i < order / 2; ++i) {
        const double phi =
            (2.0 * i + 1.0) * std::numbers::pi / (2.0 * order); // pole pair angle
        const double a1a = 2.0 * std::sin(phi);                 // s^2 + a1a*s + 1
        const double d0 = k * k + a1a * k + 1.0;
        sections.push_back(Biquad{1.0 / d0, 2.0 / d0, 1.0 / d0, (2.0 - 2.0 * k * k) / d0,
                                  (k * k - a1a * k + 1.0) / d0});
    }
    return sections;
}

double magnitude_at(const Biquad& bq, double f, double fs) {
    const std::complex<double> z = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
    const auto num = bq.b0 + bq.b1 * z + bq.b2 * z * z;
    const auto den = 1.0 + bq.a1 * z + bq.a2 * z * z;
    return std::abs(num / den);
}

double magnitude_at(const std::vector<Biquad>& sections, double f, double fs) {
    double m = 1.0;
    for (const auto& s : sections) m *= magnitude_at(s, f, fs);
    return m;
}

void filtfilt(const Biquad& bq, std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    if (n == 0) return;
    const int pad = std::min(kPadLen, n - 1);

    // odd reflection about both endpoints
    std::vector<double> ext;
    ext.reserve(x.size() + 2 * static_cast<size_t>(pad));
    for (int i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[static_cast<size_t>(i)]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (int i = 1; i <= pad; ++i)
        ext.push_back(2.0 * x.back() - x[static_cast<size_t>(n - 1 - i)]);

    filter_forward(bq, ext);
    std::reverse(ext.begin(), ext.end());
    filter_forward(bq, ext);
    std::reverse(ext.begin(), ext.end());

    std::copy_n(ext.begin() + pad, n, x.begin());
}

void filtfilt(const std::vector<Biquad>& sections, std::vector<double>& x) {
    for (const auto& s : sections) filtfilt(s, x);
}

void PrepConfig::validate(double fs_in) const {
    require(notch_hz > 0 && notch_hz < fs_in / 2, "prep: notch frequency must sit below Nyquist");
    require(notch_q > 0, "prep: notch Q must be positive");
    require(target_fs > 0 && target_fs <= fs_in, "prep: target rate must not exceed input rate");
    require(window_s > 0, "prep: window must be positive");
    const double w = window_s * target_fs;
    require(std::abs(w - std::round(w)) < 1e-9, "prep: window_s * target_fs must be integral");
}

int PrepConfig::window_samples() const {
    return static_cast<int>(std::round(window_s * target_fs));
}

void notch_filter(std::vector<double>& sig, int channels, int samples, double fs, double f0,
                  double q) {
    require(channels > 0 && samples > 0, "notch: empty signal");
    require(static_cast<size_t>(channels) * static_cast<size_t>(samples) == sig.size(),
            "notch: buffer does not match channels*samples");
    const Biquad bq = design_notch(f0, q, fs);
    std::vector<double> row(static_cast<size_t>(samples));
    for (int c = 0; c < channels; ++c) {
        auto* base = sig.data() + static_cast<size_t>(c) * samples;
        std::copy_n(base, samples, row.begin());
        filtfilt(bq, row);
        std::copy_n(row.begin(), samples, base);
    }
}

std::vector<double> resample(const std::vector<double>& sig, int channels, int samples,
                             double fs_in, double fs_out, int& samples_out) {
    require(channels > 0 && samples > 0, "resample: empty signal");
    require(static_cast<size_t>(channels) * static_cast<size_t>(samples) == sig.size(),
            "resample: buffer does not match channels*samples");
    require(fs_out > 0 && fs_in > 0, "resample: rates must be positive");
    require(fs_out <= fs_in, "resample: target rate above input rate");

    if (fs_out == fs_in) {
        samples_out = samples;
        return sig;
    }

    const auto low = design_butter_lowpass(4, 0.45 * fs_out, fs_in);
    samples_out = static_cast<int>(std::llround(static_cast<double>(samples) * fs_out / fs_in));
    std::vector<double> out(static_cast<size_t>(channels) * samples_out);
    std::vector<double> row(static_cast<size_t>(samples));
    const double step = fs_in / fs_out;
    for (int c = 0; c < channels; ++c) {
        std::copy_n(sig.data() + static_cast<size_t>(c) * samples, samples, row.begin());
        filtfilt(low, row);
        double* dst = out.data() + static_cast<size_t>(c) * samples_out;
        for (int i = 0; i < samples_out; ++i) {
            const double t = i * step;
            const int j = std::min(static_cast<int>(t), samples - 1);
            const int j1 = std::min(j + 1, samples - 1);
            const double frac = t - j;
            dst[i] = row[static_cast<size_t>(j)] +
                     frac * (row[static_cast<size_t>(j1)] - row[static_cast<size_t>(j)]);
        }
    }
    return out;
}

std::vector<double> extract_task_window(const std::vector<double>& sig, int channels,
                                        int samples, double fs, double window_s,
                                        int& samples_out) {
    require(channels > 0 && samples > 0, "window: empty signal");
    require(static_cast<size_t>(channels) * static_cast<size_t>(samples) == sig.size(),
            "window: buffer does not match channels*samples");
    const double w = window_s * fs;
    require(std::abs(w - std::round(w)) < 1e-9, "window: non-integral sample count");
    const int want = static_cast<int>(std::round(w));
    require(want <= samples, "window: trial has " + std::to_string(samples) +
                                 " samples, needs " + std::to_string(want));
    samples_out = want;
    if (want == samples) return sig;
    std::vector<double> out(static_cast<size_t>(channels) * want);
    for (int c = 0; c < channels; ++c)
        std::copy_n(sig.data() + static_cast<size_t>(c) * samples, want,
                    out.data() + static_cast<size_t>(c) * want);
    return out;
}

void zscore_normalize(std::vector<double>& sig, int channels, int samples) {
    require(channels > 0 && samples > 0, "zscore: empty signal");
    require(static_cast<size_t>(channels) * static_cast<size_t>(samples) == sig.size(),
            "zscore: buffer does not match channels*samples");
    for (int c = 0; c < channels; ++c) {
        double* row = sig.data() + static_cast<size_t>(c) * samples;
        double s = 0;
        for (int i = 0; i < samples; ++i) s += row[i];
        const double mean = s / samples;
        double varsum = 0;
        for (int i = 0; i < samples; ++i) {
            const double d = row[i] - mean;
            varsum += d * d;
        }
        const double sd = std::sqrt(varsum / samples);
        if (sd < 1e-12) {
            std::fill_n(row, samples, 0.0);
        } else {
            const double inv = 1.0 / sd;
            for (int i = 0; i < samples; ++i) row[i] = (row[i] - mean) * inv;
        }
    }
}

std::vector<float> preprocess_trial(const float* raw, int channels, int samples, double fs_in,
                                    const PrepConfig& cfg) {
    cfg.validate(fs_in);
    std::vector<double> sig(static_cast<size_t>(channels) * samples);
    for (size_t i = 0; i < sig.size(); ++i) sig[i] = raw[i];

    notch_filter(sig, channels, samples, fs_in, cfg.notch_hz, cfg.notch_q);
    int t1 = 0;
    sig = resample(sig, channels, samples, fs_in, cfg.target_fs, t1);
    int t2 = 0;
    sig = extract_task_window(sig, channels, t1, cfg.target_fs, cfg.window_s, t2);
    if (cfg.zscore) zscore_normalize(sig, channels, t2);

    std::vector<float> out(sig.size());
    for (size_t i = 0; i < sig.size(); ++i) out[i] = static_cast<float>(sig[i]);
    return out;
}

} // namespace dal::prep
