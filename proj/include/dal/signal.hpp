#pragma once

#include <vector>

namespace dal::prep {

// Normalized biquad (a0 = 1), direct form II transposed.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

// RBJ cookbook notch: unit gain at DC and Nyquist, zero at f0.
Biquad design_notch(double f0, double q, double fs);

// RBJ cookbook bandpass with 0 dB peak gain at f0.
Biquad design_bandpass(double f0, double q, double fs);

// Butterworth lowpass as cascaded biquads via bilinear transform with
// frequency prewarping. Order must be even (pole pairs only).
std::vector<Biquad> design_butter_lowpass(int order, double fc, double fs);

// Single-pass magnitude response at frequency f.
double magnitude_at(const Biquad& bq, double f, double fs);
double magnitude_at(const std::vector<Biquad>& sections, double f, double fs);

// Zero-phase filtering: odd-reflection padding plus steady-state initial
// conditions, forward and backward passes. In-place.
void filtfilt(const Biquad& bq, std::vector<double>& x);
void filtfilt(const std::vector<Biquad>& sections, std::vector<double>& x);

struct PrepConfig {
    double notch_hz = 60.0;
    double notch_q = 30.0;
    int target_fs = 256;
    double window_s = 2.0;
    bool zscore = true;

    void validate(double fs_in) const;
    int window_samples() const;
};

// All signal buffers are row-major [channels][samples].

void notch_filter(std::vector<double>& sig, int channels, int samples, double fs, double f0,
                  double q);

// Zero-phase lowpass at 0.45*fs_out followed by linear-interpolated
// resampling onto the new rate's sample grid; T' = round(T*fs_out/fs_in).
std::vector<double> resample(const std::vector<double>& sig, int channels, int samples,
                             double fs_in, double fs_out, int& samples_out);

// Keeps the first window_s seconds of every channel.
std::vector<double> extract_task_window(const std::vector<double>& sig, int channels,
                                        int samples, double fs, double window_s,
                                        int& samples_out);

// Per-channel standardization; channels with std < 1e-12 become zero rows.
void zscore_normalize(std::vector<double>& sig, int channels, int samples);

// Full chain: notch -> resample -> window -> zscore. Returns float32 data of
// shape [channels, window_s*target_fs].
std::vector<float> preprocess_trial(const float* raw, int channels, int samples, double fs_in,
                                    const PrepConfig& cfg);

} // namespace dal::prep
