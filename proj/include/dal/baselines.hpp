#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dal/adam.hpp"
#include "dal/dataset.hpp"
#include "dal/linalg.hpp"
#include "dal/model.hpp"
#include "dal/rng.hpp"

namespace dal::bl {

// ---------------------------------------------------------------------------
// CSP: one-vs-rest spatial filters over trial covariances

// Non-owning view of one trial's samples, row-major [channel][sample].
struct TrialView {
    const float* data = nullptr;
    int channels = 0;
    int samples = 0;
};

inline TrialView view(const data::EEGTrial& t) {
    return {t.values.data(), t.channels, t.samples};
}

// XX^T / trace(XX^T) accumulated in double.
lin::Mat normalized_covariance(const TrialView& t);

struct CSPModel {
    int channels = 0;
    int m = 0;                     // filters per class: m/2 largest + m/2 smallest
    std::vector<lin::Mat> filters; // per class, channels x m, columns are filters
    std::vector<std::vector<double>> eigenvalues; // per class, full spectrum, descending
};

// One-vs-rest fit: for class c, solve Sigma_c v = lambda (Sigma_c + Sigma_rest) v
// over trace-normalized average covariances, with 1e-6*trace diagonal loading
// on the composite. Filters whiten: w^T (Sigma_c + Sigma_rest) w = 1.
CSPModel csp_fit(const std::vector<std::vector<TrialView>>& trials_by_class, int m = 4);

// Per class bank: project, per-filter variance, normalize within the bank,
// log. Ratios are floored at 1e-12 before the log. Length = classes * m.
std::vector<double> csp_features(const TrialView& trial, const CSPModel& model);

// ---------------------------------------------------------------------------
// LDA with a shared shrunk covariance

struct LDAModel {
    lin::Mat means;             // classes x features
    lin::Mat cov;               // shared covariance after shrinkage
    lin::Mat chol;              // cached Cholesky factor of cov
    std::vector<double> priors; // class frequencies
    double gamma = 0.1;
};

// gamma in [0,1] shrinks the pooled covariance toward (trace/d) * I.
LDAModel lda_fit(const std::vector<std::vector<double>>& features,
                 const std::vector<int>& labels, double gamma = 0.1);

struct LDAPrediction {
    int label = 0;
    std::vector<double> scores; // per-class linear discriminants
};

// Argmax of the linear discriminants; ties break toward the lowest label.
LDAPrediction lda_predict(const LDAModel& model, const std::vector<double>& x);

// ---------------------------------------------------------------------------
// EEGNet: the DAL encoder's geometry with a dense softmax head and no decoder

template <class T>
struct EEGNetParams {
    // The encoder tensors live in a DALParams so the forward passes are the
    // same code paths the autoencoder uses; the decoder slots stay untouched.
    model::DALParams<T> core;

    std::vector<std::pair<std::string, ad::Tensor<T>*>> named_trainables();
    std::vector<std::pair<std::string, const ad::Tensor<T>*>> named_trainables() const;
    std::vector<std::pair<std::string, ad::Tensor<T>*>> named_buffers();
    std::vector<std::pair<std::string, const ad::Tensor<T>*>> named_buffers() const;
    std::vector<ad::Tensor<T>> trainables();
    bool all_finite() const;
};

template <class T>
EEGNetParams<T> init_eegnet_params(const model::DALConfig& cfg, uint64_t seed);

// Trainable scalar count, the "small number of parameters" anchor.
template <class T>
int64_t eegnet_param_count(EEGNetParams<T>& p);

// Softmax probabilities [N, n_classes].
template <class T>
ad::Tensor<T> eegnet_forward(const ad::Tensor<T>& x, EEGNetParams<T>& p,
                             const model::DALConfig& cfg, ad::Mode mode, Rng& dropout_rng);

// One Adam step on the cross-entropy alone; returns the batch CE. Throws
// when the loss is non-finite.
template <class T>
double eegnet_train_step(const ad::Tensor<T>& x, const ad::Tensor<T>& onehot,
                         EEGNetParams<T>& p, const model::DALConfig& cfg, ad::Adam<T>& opt,
                         Rng& dropout_rng);

template <class T>
std::vector<int> eegnet_predict(const ad::Tensor<T>& x, EEGNetParams<T>& p,
                                const model::DALConfig& cfg);

void save_eegnet(const EEGNetParams<float>& p, const model::DALConfig& cfg,
                 const std::string& dir);
std::pair<EEGNetParams<float>, model::DALConfig> load_eegnet(const std::string& dir);

// ---------------------------------------------------------------------------
// CSP-LDA serialization (same manifest + params.f32 layout as the networks)

void save_csp_lda(const CSPModel& csp, const LDAModel& lda, const std::string& dir);
std::pair<CSPModel, LDAModel> load_csp_lda(const std::string& dir);

// ---------------------------------------------------------------------------
// The "w/ overt speech" condition for baselines: training-set augmentation

// Returns the training trials for a fold given the imagined-trial indices:
// the imagined trials themselves, plus — when use_overt is set — each one's
// paired overt trial under the dataset's pairing, carrying the same label.
// Validation folds never pass through here; they stay imagined-only.
std::vector<const data::EEGTrial*> baseline_with_overt(const data::PairedDataset& ds,
                                                       const std::vector<int>& imagined_indices,
                                                       bool use_overt);

} // namespace dal::bl
