#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dal/adam.hpp"
#include "dal/ops.hpp"
#include "dal/rng.hpp"
#include "dal/tensor.hpp"
#include "json.hpp"

namespace dal::model {

enum class ReconLoss { l1, l2 };

// Architecture hyperparameters. Every width, kernel, stride, and loss knob
// lives here; the forward passes derive all shapes from this struct alone.
struct DALConfig {
    int channels = 58;
    int samples = 512;
    int n_classes = 4;
    int F1 = 8;             // temporal filter count
    int Dm = 2;             // spatial depth multiplier
    int F2 = 16;            // pointwise output depth
    int temporal_kernel = 3;
    int sep_kernel = 16;
    int pool1 = 4;
    int pool2 = 8;
    int dec_kernel1 = 24;
    int dec_stride1 = 8;
    int dec_kernel2 = 4;
    int dec_stride2 = 4;
    double dropout_p = 0.25;
    double alpha = 0.9; // CE weight in the combined objective
    ReconLoss recon_loss = ReconLoss::l1;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    void validate() const;

    // derived lengths along the temporal axis
    int bottleneck_len() const { return samples / (pool1 * pool2); } // encoder output
    int mid_len() const { return samples / pool1; }                  // post-block-1 tap
    int feature_len() const { return F2 * bottleneck_len(); }        // flattened
    int dec1_full() const { return (bottleneck_len() - 1) * dec_stride1 + dec_kernel1; }
    int dec2_full() const { return (mid_len() - 1) * dec_stride2 + dec_kernel2; }
};

// Optimization knobs (unstated in the architecture source; defaults here,
// overridable through the run config, never hard-coded at call sites).
struct TrainConfig {
    int epochs = 100;
    int batch_size = 16;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 1;
};

// All learnable tensors plus batch-norm running statistics. Tensors share
// their storage, so copies of this struct alias the same parameters.
template <class T>
struct DALParams {
    // encoder block 1
    ad::Tensor<T> conv1_w, conv1_b; // temporal conv [F1,1,1,tk], [F1]
    ad::Tensor<T> bn1_g, bn1_b;
    ad::Tensor<T> dw_spatial_w; // spatial depthwise [F1*Dm, channels, 1]
    ad::Tensor<T> bn2_g, bn2_b;
    // encoder block 2
    ad::Tensor<T> dw_sep_w; // separable depthwise [F1*Dm, 1, sep_kernel]
    ad::Tensor<T> pw_sep_w; // separable pointwise [F2, F1*Dm]
    ad::Tensor<T> bn3_g, bn3_b;
    // classifier
    ad::Tensor<T> fc_w, fc_b; // [feature_len, n_classes], [n_classes]
    // decoder
    ad::Tensor<T> dec1_w; // transpose conv [F2, F2, 1, dec_kernel1]
    ad::Tensor<T> bn4_g, bn4_b;
    ad::Tensor<T> dec2_w; // transpose conv [F2+F1*Dm, F2, 1, dec_kernel2]
    ad::Tensor<T> bn5_g, bn5_b;
    ad::Tensor<T> dec_spatial_w; // transpose conv [F2, F1, channels, 1]
    ad::Tensor<T> out_pw_w;      // pointwise [1, 2*F1]
    // batch-norm running statistics (state, not trained)
    ad::Tensor<T> bn1_rm, bn1_rv, bn2_rm, bn2_rv, bn3_rm, bn3_rv;
    ad::Tensor<T> bn4_rm, bn4_rv, bn5_rm, bn5_rv;

    // fixed-order registries; the checkpoint blob layout follows them
    std::vector<std::pair<std::string, ad::Tensor<T>*>> named_trainables();
    std::vector<std::pair<std::string, const ad::Tensor<T>*>> named_trainables() const;
    std::vector<std::pair<std::string, ad::Tensor<T>*>> named_buffers();
    std::vector<std::pair<std::string, const ad::Tensor<T>*>> named_buffers() const;

    std::vector<ad::Tensor<T>> trainables();         // full set, for the optimizer
    std::vector<ad::Tensor<T>> encoder_trainables(); // encoder + classifier only
    std::vector<ad::Tensor<T>> decoder_trainables();
    bool all_finite() const;
};

// Glorot-uniform weights, unit gamma, zero beta/bias, zero/unit running stats.
template <class T>
DALParams<T> init_dal_params(const DALConfig& cfg, uint64_t seed);

template <class T>
struct EncoderOut {
    ad::Tensor<T> feature_map; // [N, F2, 1, bottleneck_len]
    ad::Tensor<T> skip1;       // [N, F1, channels, samples], post-BN temporal tap
    ad::Tensor<T> skip2;       // [N, F1*Dm, 1, mid_len], post-block-1 tap
};

template <class T>
EncoderOut<T> encoder_forward(const ad::Tensor<T>& x, DALParams<T>& p, const DALConfig& cfg,
                              ad::Mode mode, Rng& dropout_rng);

template <class T>
struct ClassifierOut {
    ad::Tensor<T> logits; // [N, n_classes]
    ad::Tensor<T> probs;  // softmax rows
};

template <class T>
ClassifierOut<T> classifier_forward(const ad::Tensor<T>& feature_map, DALParams<T>& p,
                                    const DALConfig& cfg);

template <class T>
ad::Tensor<T> decoder_forward(const ad::Tensor<T>& feature_map, const ad::Tensor<T>& skip1,
                              const ad::Tensor<T>& skip2, DALParams<T>& p,
                              const DALConfig& cfg, ad::Mode mode);

struct LossBreakdown {
    double ce = 0;
    double recon = 0;
    double total = 0;
    double alpha = 1;
};

// total = alpha*CE + (1-alpha)*recon. recon/overt_target may be undefined
// only when alpha == 1; alpha < 1 without a pairing is an error.
template <class T>
std::pair<ad::Tensor<T>, LossBreakdown> combined_loss(const ad::Tensor<T>& logits,
                                                      const ad::Tensor<T>& onehot,
                                                      const ad::Tensor<T>& recon,
                                                      const ad::Tensor<T>& overt_target,
                                                      double alpha, ReconLoss kind);

// Training-mode descriptor for the two published variants.
struct DALVariant {
    DALConfig config;
    bool use_overt = true;
    std::string name; // "dal_w" | "dal_wo"
};

DALVariant dal_variant(const DALConfig& cfg, bool use_overt);

// One optimizer step over a batch. overt may be undefined when the variant
// ignores it. Throws with the diverging term named if the loss is non-finite.
template <class T>
LossBreakdown dal_train_step(const ad::Tensor<T>& imagined, const ad::Tensor<T>& onehot,
                             const ad::Tensor<T>& overt, DALParams<T>& p,
                             const DALVariant& variant, ad::Adam<T>& opt, Rng& dropout_rng);

// Eval-mode class predictions (argmax of logits).
template <class T>
std::vector<int> dal_predict(const ad::Tensor<T>& x, DALParams<T>& p, const DALConfig& cfg);

// Checkpoint directory: manifest.json (config echo + registry with offsets)
// + params.f32 (raw little-endian float32, registry order). Writes are
// atomic (temp name + rename). Loading validates names, shapes, offsets,
// and the blob byte count against the manifest's config.
void save_checkpoint(const DALParams<float>& p, const DALConfig& cfg, const std::string& dir);
std::pair<DALParams<float>, DALConfig> load_checkpoint(const std::string& dir);

// Config round-trip used by every checkpoint kind that embeds the geometry.
nlohmann::json config_to_json(const DALConfig& c);
DALConfig config_from_json(const nlohmann::json& j);

} // namespace dal::model
