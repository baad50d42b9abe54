#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "dal/dataset.hpp"
#include "dal/rng.hpp"
#include "dal/signal.hpp"
#include "dal/words.hpp"

namespace dal::data {

namespace {

constexpr double kPi = std::numbers::pi;

// Carrier bands for the four word classes, spread across mu/beta/low-gamma so
// the class templates occupy distinct spectral niches.
constexpr double kClassCarriersHz[kNumWords] = {8.0, 14.0, 21.0, 30.0};
constexpr int kComponentsPerClass = 2;
constexpr double kLineHz = 60.0;
constexpr double kLineAmplitude = 0.5;     // x noise RMS
constexpr double kCommonNoiseWeight = 0.4; // shared pink source across channels
constexpr double kEnvelopeRampS = 0.25;    // imagined-task onset/offset ramps
constexpr double kBurstLenS = 0.5;         // articulation burst length
constexpr int kBurstChannels = 12;         // frontal-ish subset carrying the burst

// Paul Kellet's économique pink-noise filter over unit white noise.
struct PinkFilter {
    double b0 = 0, b1 = 0, b2 = 0;
    double step(double w) {
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        return b0 + b1 + b2 + w * 0.1848;
    }
};

std::vector<double> pink_noise(Rng& rng, int n) {
    PinkFilter f;
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = f.step(rng.normal());
    double p = 0;
    for (double x : v) p += x * x;
    const double rms = std::sqrt(p / n);
    if (rms > 0)
        for (auto& x : v) x /= rms;
    return v;
}

// Gaussian channel weights smoothed along the cap so neighbouring electrodes
// load together, normalized to unit L2 norm.
std::vector<double> smooth_spatial_pattern(Rng& rng, int channels) {
    std::vector<double> raw(static_cast<size_t>(channels));
    for (auto& v : raw) v = rng.normal();
    std::vector<double> out(static_cast<size_t>(channels), 0.0);
    const int half = 2;
    for (int c = 0; c < channels; ++c) {
        double s = 0;
        int cnt = 0;
        for (int d = -half; d <= half; ++d) {
            const int j = c + d;
            if (j < 0 || j >= channels) continue;
            s += raw[static_cast<size_t>(j)];
            ++cnt;
        }
        out[static_cast<size_t>(c)] = s / cnt;
    }
    double norm = 0;
    for (double v : out) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (auto& v : out) v /= norm;
    return out;
}

// Narrowband component: bandpass-filtered white noise, unit RMS.
std::vector<double> narrowband(Rng& rng, int n, double f0, double bandwidth, double fs) {
    const double q = f0 / std::max(bandwidth, 0.1);
    const prep::Biquad bp = prep::design_bandpass(f0, q, fs);
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.normal();
    // two passes sharpen the skirts; phase is irrelevant for a random carrier
    prep::filtfilt(bp, v);
    prep::filtfilt(bp, v);
    double p = 0;
    for (double x : v) p += x * x;
    const double rms = std::sqrt(p / n);
    if (rms > 0)
        for (auto& x : v) x /= rms;
    return v;
}

double raised_cosine_envelope(double t, double total_s, double ramp_s) {
    if (t < 0 || t > total_s) return 0.0;
    if (t < ramp_s) return 0.5 * (1.0 - std::cos(kPi * t / ramp_s));
    if (t > total_s - ramp_s) return 0.5 * (1.0 - std::cos(kPi * (total_s - t) / ramp_s));
    return 1.0;
}

// Tukey-windowed burst weight at sample t for a burst covering [start, start+len).
double burst_window(double t, double start, double len) {
    if (t < start || t >= start + len) return 0.0;
    const double u = (t - start) / len; // 0..1
    const double taper = 0.25;
    if (u < taper) return 0.5 * (1.0 - std::cos(kPi * u / taper));
    if (u > 1.0 - taper) return 0.5 * (1.0 - std::cos(kPi * (1.0 - u) / taper));
    return 1.0;
}

struct SubjectLatents {
    std::vector<std::vector<float>> templates; // [class][channel*samples]
    std::vector<double> burst_weights;         // per-channel articulation loading
};

SubjectLatents build_latents(const GenConfig& cfg, uint64_t subject_seed) {
    const int n = cfg.samples();
    Rng base(cfg.seed, subject_seed);
    Rng tpl = base.split(1);

    SubjectLatents lat;
    lat.templates.resize(kNumWords);
    for (int c = 0; c < kNumWords; ++c) {
        std::vector<double> z(static_cast<size_t>(cfg.channels) * n, 0.0);
        for (int k = 0; k < kComponentsPerClass; ++k) {
            double f = kClassCarriersHz[c];
            f += (k == 0) ? tpl.uniform(-1.0, 1.0) : tpl.uniform(4.0, 8.0);
            f = std::clamp(f, 4.0, 40.0);
            const auto course = narrowband(tpl, n, f, cfg.template_bandwidth, cfg.fs);
            const auto pattern = smooth_spatial_pattern(tpl, cfg.channels);
            for (int ch = 0; ch < cfg.channels; ++ch) {
                const double w = pattern[static_cast<size_t>(ch)];
                double* dst = z.data() + static_cast<size_t>(ch) * n;
                for (int t = 0; t < n; ++t) dst[t] += w * course[static_cast<size_t>(t)];
            }
        }
        // unit average channel power so snr_db gains mean what they say
        double p = 0;
        for (double v : z) p += v * v;
        const double rms = std::sqrt(p / static_cast<double>(z.size()));
        lat.templates[static_cast<size_t>(c)].resize(z.size());
        for (size_t i = 0; i < z.size(); ++i)
            lat.templates[static_cast<size_t>(c)][i] =
                static_cast<float>(rms > 0 ? z[i] / rms : z[i]);
    }

    lat.burst_weights.assign(static_cast<size_t>(cfg.channels), 0.0);
    auto w = smooth_spatial_pattern(tpl, kBurstChannels);
    for (int ch = 0; ch < std::min(kBurstChannels, cfg.channels); ++ch)
        lat.burst_weights[static_cast<size_t>(ch)] =
            std::abs(w[static_cast<size_t>(ch)]) * std::sqrt(static_cast<double>(kBurstChannels));
    return lat;
}

EEGTrial synth_trial(const GenConfig& cfg, const SubjectLatents& lat, Rng& rng, int label,
                     Condition cond, int subject_id, int trial_index) {
    const int n = cfg.samples();
    const int channels = cfg.channels;
    const double snr_db =
        cond == Condition::imagined ? cfg.imagined_snr_db : cfg.overt_snr_db;
    const double gain = std::pow(10.0, snr_db / 20.0) * rng.uniform(0.9, 1.1);
    const double line_phase = rng.uniform(0.0, 2.0 * kPi);

    double burst_start = 0, burst_len = 0, burst_amp = 0;
    std::vector<double> burst;
    if (cond == Condition::overt) {
        burst_len = std::min(kBurstLenS, 0.5 * cfg.window_s);
        const double margin = 0.1 * cfg.window_s;
        const double hi = cfg.window_s - burst_len - margin;
        burst_start = hi > margin ? rng.uniform(margin, hi) : margin;
        burst_amp = cfg.artifact_amplitude;
        burst.resize(static_cast<size_t>(n));
        for (auto& v : burst) v = rng.normal();
    }

    const auto common = pink_noise(rng, n);
    const double indiv_w = std::sqrt(1.0 - kCommonNoiseWeight * kCommonNoiseWeight);

    // per-sample terms shared by every channel, hoisted out of the channel loop
    std::vector<double> line(static_cast<size_t>(n)), env(static_cast<size_t>(n), 1.0),
        bwin(static_cast<size_t>(n), 0.0);
    for (int t = 0; t < n; ++t) {
        const double ts = static_cast<double>(t) / cfg.fs;
        line[static_cast<size_t>(t)] = kLineAmplitude * std::sin(2.0 * kPi * kLineHz * ts + line_phase);
        if (cond == Condition::imagined)
            env[static_cast<size_t>(t)] = raised_cosine_envelope(ts, cfg.window_s, kEnvelopeRampS);
        else
            bwin[static_cast<size_t>(t)] = burst_window(ts, burst_start, burst_len);
    }

    EEGTrial trial;
    trial.channels = channels;
    trial.samples = n;
    trial.values.resize(static_cast<size_t>(channels) * n);
    trial.label = label;
    trial.condition = cond;
    trial.subject_id = subject_id;
    trial.trial_index = trial_index;

    const float* z = lat.templates[static_cast<size_t>(label)].data();
    for (int ch = 0; ch < channels; ++ch) {
        const auto noise = pink_noise(rng, n);
        float* dst = trial.row(ch);
        const float* zrow = z + static_cast<size_t>(ch) * n;
        const double bw = burst_amp * lat.burst_weights[static_cast<size_t>(ch)];
        for (int t = 0; t < n; ++t) {
            const size_t u = static_cast<size_t>(t);
            double v = gain * env[u] * zrow[t];
            v += kCommonNoiseWeight * common[u] + indiv_w * noise[u];
            v += line[u];
            if (bw > 0) v += bw * bwin[u] * burst[u];
            dst[t] = static_cast<float>(v);
        }
    }
    return trial;
}

} // namespace

const char* condition_name(Condition c) {
    return c == Condition::imagined ? "imagined" : "overt";
}

void GenConfig::validate() const {
    if (n_subjects < 1) throw std::invalid_argument("gen config: n_subjects must be >= 1");
    if (trials_per_word < 1)
        throw std::invalid_argument("gen config: trials_per_word must be >= 1");
    if (channels < 1) throw std::invalid_argument("gen config: channels must be >= 1");
    if (fs < 1) throw std::invalid_argument("gen config: fs must be >= 1");
    if (window_s <= 0) throw std::invalid_argument("gen config: window_s must be positive");
    if (template_bandwidth <= 0)
        throw std::invalid_argument("gen config: template_bandwidth must be positive");
    if (artifact_amplitude < 0)
        throw std::invalid_argument("gen config: artifact_amplitude must be >= 0");
    if (overt_snr_db < imagined_snr_db)
        throw std::invalid_argument(
            "gen config: overt_snr_db must be >= imagined_snr_db (the generative premise)");
}

int GenConfig::samples() const { return static_cast<int>(std::lround(window_s * fs)); }

std::vector<std::vector<float>> class_templates(const GenConfig& cfg, uint64_t subject_seed) {
    cfg.validate();
    return build_latents(cfg, subject_seed).templates;
}

PairedDataset generate_subject_dataset(const GenConfig& cfg, uint64_t subject_seed) {
    cfg.validate();
    const SubjectLatents lat = build_latents(cfg, subject_seed);

    Rng base(cfg.seed, subject_seed);
    Rng noise = base.split(2);

    PairedDataset ds;
    ds.subject_id = static_cast<int>(subject_seed);
    ds.fs = cfg.fs;
    ds.words = select_words(demo_word_pool(), kNumWords);
    ds.seed = cfg.seed;
    ds.subject_seed = subject_seed;
    ds.policy = PairPolicy::by_index;

    // label-major trial order, imagined block first — this is also the order
    // the rng stream is consumed in, so layout and determinism are coupled.
    for (Condition cond : {Condition::imagined, Condition::overt}) {
        auto& block = cond == Condition::imagined ? ds.imagined : ds.overt;
        block.reserve(static_cast<size_t>(kNumWords) * cfg.trials_per_word);
        for (int label = 0; label < kNumWords; ++label)
            for (int k = 0; k < cfg.trials_per_word; ++k)
                block.push_back(
                    synth_trial(cfg, lat, noise, label, cond, ds.subject_id, k));
    }

    ds.pairing = pair_trials(ds, PairPolicy::by_index, 0);
    return ds;
}

int nearest_template_label(const EEGTrial& trial,
                           const std::vector<std::vector<float>>& templates) {
    int best = 0;
    double best_corr = -1.0;
    const size_t m = trial.values.size();
    for (size_t c = 0; c < templates.size(); ++c) {
        if (templates[c].size() != m)
            throw std::invalid_argument("nearest_template_label: template/trial shape mismatch");
        double num = 0, ta = 0, tb = 0;
        for (size_t i = 0; i < m; ++i) {
            num += static_cast<double>(trial.values[i]) * templates[c][i];
            ta += static_cast<double>(trial.values[i]) * trial.values[i];
            tb += static_cast<double>(templates[c][i]) * templates[c][i];
        }
        const double denom = std::sqrt(ta * tb);
        const double corr = denom > 0 ? std::abs(num) / denom : 0.0;
        if (corr > best_corr) {
            best_corr = corr;
            best = static_cast<int>(c);
        }
    }
    return best;
}

} // namespace dal::data
