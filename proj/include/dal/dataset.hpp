#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dal::data {

inline constexpr int kNumWords = 4;

enum class Condition { imagined, overt };

const char* condition_name(Condition c);

struct EEGTrial {
    int channels = 0;
    int samples = 0;
    std::vector<float> values; // [channels][samples]
    int label = 0;             // word index, 0..3
    Condition condition = Condition::imagined;
    int subject_id = 0;
    int trial_index = 0; // within (label, condition)

    float* row(int c) { return values.data() + static_cast<size_t>(c) * samples; }
    const float* row(int c) const { return values.data() + static_cast<size_t>(c) * samples; }
};

enum class PairPolicy { by_index, random_within_class };

struct GenConfig {
    int n_subjects = 8;
    int trials_per_word = 50;
    int channels = 58;
    int fs = 1000;
    double window_s = 2.0;
    double imagined_snr_db = -16.0;
    double overt_snr_db = -6.0;
    double template_bandwidth = 2.0; // Hz, width of each latent component
    double artifact_amplitude = 4.0; // articulation burst scale, x noise RMS
    uint64_t seed = 1;

    void validate() const;
    int samples() const;
};

struct PairedDataset {
    int subject_id = 0;
    int fs = 0;
    std::vector<std::string> words;   // the four class names
    std::vector<EEGTrial> imagined;   // label-major order
    std::vector<EEGTrial> overt;      // label-major order
    std::vector<int> pairing;         // imagined index -> overt index
    PairPolicy policy = PairPolicy::by_index;
    uint64_t seed = 0;                // generator seed pair, kept for the manifest
    uint64_t subject_seed = 0;
};

// Band-limited class templates shared between the two conditions;
// [class][channel*samples], unit average channel power.
std::vector<std::vector<float>> class_templates(const GenConfig& cfg, uint64_t subject_seed);

// Draws one subject's paired trials. Deterministic in (cfg.seed, subject_seed).
PairedDataset generate_subject_dataset(const GenConfig& cfg, uint64_t subject_seed);

// Label of the template with the highest absolute correlation to the trial.
int nearest_template_label(const EEGTrial& trial,
                           const std::vector<std::vector<float>>& templates);

// Rebuilds the pairing table under the given policy.
std::vector<int> pair_trials(const PairedDataset& ds, PairPolicy policy, uint64_t seed);

// Directory format: manifest.json + imagined.f32 + overt.f32 + labels.csv.
void write_dataset(const PairedDataset& ds, const std::string& dir);
PairedDataset read_dataset(const std::string& dir);

} // namespace dal::data
