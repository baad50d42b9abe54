#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dal/model.hpp"

#include "json.hpp"

namespace dal::model {

using ad::Mode;
using ad::Tensor;
namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// config

void DALConfig::validate() const {
    auto req = [](bool ok, const std::string& msg) {
        if (!ok) throw std::invalid_argument("dal config: " + msg);
    };
    req(channels >= 1, "channels must be >= 1");
    req(samples >= 1, "samples must be >= 1");
    req(n_classes >= 2, "n_classes must be >= 2");
    req(F1 >= 1 && Dm >= 1 && F2 >= 1, "filter counts must be >= 1");
    req(temporal_kernel >= 1 && sep_kernel >= 1, "kernel widths must be >= 1");
    req(pool1 >= 1 && pool2 >= 1, "pool widths must be >= 1");
    req(dec_kernel1 >= 1 && dec_kernel2 >= 1 && dec_stride1 >= 1 && dec_stride2 >= 1,
        "decoder kernels and strides must be >= 1");
    req(samples % (pool1 * pool2) == 0,
        "samples (" + std::to_string(samples) + ") must be divisible by pool1*pool2 (" +
            std::to_string(pool1 * pool2) + ")");
    req(dropout_p >= 0 && dropout_p < 1, "dropout_p must be in [0,1)");
    req(alpha >= 0 && alpha <= 1, "alpha must be in [0,1]");
    req(bn_eps >= 0, "bn_eps must be >= 0");
    req(bn_momentum >= 0 && bn_momentum <= 1, "bn_momentum must be in [0,1]");
    req(dec1_full() >= mid_len(),
        "decoder stage 1 output " + std::to_string(dec1_full()) +
            " is shorter than the skip tap " + std::to_string(mid_len()) +
            "; increase dec_kernel1/dec_stride1");
    req(dec2_full() >= samples, "decoder stage 2 output " + std::to_string(dec2_full()) +
                                    " is shorter than the input length " +
                                    std::to_string(samples) +
                                    "; increase dec_kernel2/dec_stride2");
}

// ---------------------------------------------------------------------------
// parameter registry

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> DALParams<T>::named_trainables() {
    return {
        {"enc.conv1.w", &conv1_w},       {"enc.conv1.b", &conv1_b},
        {"enc.bn1.gamma", &bn1_g},       {"enc.bn1.beta", &bn1_b},
        {"enc.dw_spatial.w", &dw_spatial_w},
        {"enc.bn2.gamma", &bn2_g},       {"enc.bn2.beta", &bn2_b},
        {"enc.dw_sep.w", &dw_sep_w},     {"enc.pw_sep.w", &pw_sep_w},
        {"enc.bn3.gamma", &bn3_g},       {"enc.bn3.beta", &bn3_b},
        {"clf.fc.w", &fc_w},             {"clf.fc.b", &fc_b},
        {"dec.tconv1.w", &dec1_w},
        {"dec.bn4.gamma", &bn4_g},       {"dec.bn4.beta", &bn4_b},
        {"dec.tconv2.w", &dec2_w},
        {"dec.bn5.gamma", &bn5_g},       {"dec.bn5.beta", &bn5_b},
        {"dec.tconv_spatial.w", &dec_spatial_w},
        {"dec.out_pw.w", &out_pw_w},
    };
}

template <class T>
std::vector<std::pair<std::string, const Tensor<T>*>> DALParams<T>::named_trainables() const {
    auto entries = const_cast<DALParams<T>*>(this)->named_trainables();
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    out.reserve(entries.size());
    for (auto& [name, t] : entries) out.emplace_back(name, t);
    return out;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> DALParams<T>::named_buffers() {
    return {
        {"enc.bn1.running_mean", &bn1_rm}, {"enc.bn1.running_var", &bn1_rv},
        {"enc.bn2.running_mean", &bn2_rm}, {"enc.bn2.running_var", &bn2_rv},
        {"enc.bn3.running_mean", &bn3_rm}, {"enc.bn3.running_var", &bn3_rv},
        {"dec.bn4.running_mean", &bn4_rm}, {"dec.bn4.running_var", &bn4_rv},
        {"dec.bn5.running_mean", &bn5_rm}, {"dec.bn5.running_var", &bn5_rv},
    };
}

template <class T>
std::vector<std::pair<std::string, const Tensor<T>*>> DALParams<T>::named_buffers() const {
    auto entries = const_cast<DALParams<T>*>(this)->named_buffers();
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    out.reserve(entries.size());
    for (auto& [name, t] : entries) out.emplace_back(name, t);
    return out;
}

template <class T>
std::vector<Tensor<T>> DALParams<T>::trainables() {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_trainables()) out.push_back(*t);
    return out;
}

template <class T>
std::vector<Tensor<T>> DALParams<T>::encoder_trainables() {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_trainables())
        if (name.rfind("dec.", 0) != 0) out.push_back(*t);
    return out;
}

template <class T>
std::vector<Tensor<T>> DALParams<T>::decoder_trainables() {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_trainables())
        if (name.rfind("dec.", 0) == 0) out.push_back(*t);
    return out;
}

template <class T>
bool DALParams<T>::all_finite() const {
    for (const auto& [name, t] : named_trainables())
        if (!t->all_finite()) return false;
    for (const auto& [name, t] : named_buffers())
        if (!t->all_finite()) return false;
    return true;
}

// ---------------------------------------------------------------------------
// initialization

namespace {

template <class T>
Tensor<T> glorot(ad::Shape shape, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<T> v(static_cast<size_t>(shape.numel()));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>::from(std::move(shape), std::move(v), true);
}

} // namespace

template <class T>
DALParams<T> init_dal_params(const DALConfig& cfg, uint64_t seed) {
    cfg.validate();
    using S = ad::Shape;
    Rng rng(seed, 11);
    const int spatial_depth = cfg.F1 * cfg.Dm;
    DALParams<T> p;

    p.conv1_w = glorot<T>(S({cfg.F1, 1, 1, cfg.temporal_kernel}), cfg.temporal_kernel,
                          cfg.F1 * cfg.temporal_kernel, rng);
    p.conv1_b = Tensor<T>::zeros(S({cfg.F1}), true);
    p.bn1_g = Tensor<T>::full(S({cfg.F1}), T(1), true);
    p.bn1_b = Tensor<T>::zeros(S({cfg.F1}), true);
    p.dw_spatial_w =
        glorot<T>(S({spatial_depth, cfg.channels, 1}), cfg.channels, cfg.Dm * cfg.channels, rng);
    p.bn2_g = Tensor<T>::full(S({spatial_depth}), T(1), true);
    p.bn2_b = Tensor<T>::zeros(S({spatial_depth}), true);

    p.dw_sep_w = glorot<T>(S({spatial_depth, 1, cfg.sep_kernel}), cfg.sep_kernel,
                           cfg.sep_kernel, rng);
    p.pw_sep_w = glorot<T>(S({cfg.F2, spatial_depth}), spatial_depth, cfg.F2, rng);
    p.bn3_g = Tensor<T>::full(S({cfg.F2}), T(1), true);
    p.bn3_b = Tensor<T>::zeros(S({cfg.F2}), true);

    p.fc_w = glorot<T>(S({cfg.feature_len(), cfg.n_classes}), cfg.feature_len(),
                       cfg.n_classes, rng);
    p.fc_b = Tensor<T>::zeros(S({cfg.n_classes}), true);

    p.dec1_w = glorot<T>(S({cfg.F2, cfg.F2, 1, cfg.dec_kernel1}), cfg.F2 * cfg.dec_kernel1,
                         cfg.F2 * cfg.dec_kernel1, rng);
    p.bn4_g = Tensor<T>::full(S({cfg.F2}), T(1), true);
    p.bn4_b = Tensor<T>::zeros(S({cfg.F2}), true);
    const int cat1_depth = cfg.F2 + spatial_depth;
    p.dec2_w = glorot<T>(S({cat1_depth, cfg.F2, 1, cfg.dec_kernel2}),
                         cat1_depth * cfg.dec_kernel2, cfg.F2 * cfg.dec_kernel2, rng);
    p.bn5_g = Tensor<T>::full(S({cfg.F2}), T(1), true);
    p.bn5_b = Tensor<T>::zeros(S({cfg.F2}), true);
    p.dec_spatial_w = glorot<T>(S({cfg.F2, cfg.F1, cfg.channels, 1}), cfg.F2 * cfg.channels,
                                cfg.F1 * cfg.channels, rng);
    p.out_pw_w = glorot<T>(S({1, 2 * cfg.F1}), 2 * cfg.F1, 1, rng);

    p.bn1_rm = Tensor<T>::zeros(S({cfg.F1}));
    p.bn1_rv = Tensor<T>::full(S({cfg.F1}), T(1));
    p.bn2_rm = Tensor<T>::zeros(S({spatial_depth}));
    p.bn2_rv = Tensor<T>::full(S({spatial_depth}), T(1));
    p.bn3_rm = Tensor<T>::zeros(S({cfg.F2}));
    p.bn3_rv = Tensor<T>::full(S({cfg.F2}), T(1));
    p.bn4_rm = Tensor<T>::zeros(S({cfg.F2}));
    p.bn4_rv = Tensor<T>::full(S({cfg.F2}), T(1));
    p.bn5_rm = Tensor<T>::zeros(S({cfg.F2}));
    p.bn5_rv = Tensor<T>::full(S({cfg.F2}), T(1));
    return p;
}

// ---------------------------------------------------------------------------
// forward passes

template <class T>
EncoderOut<T> encoder_forward(const Tensor<T>& x, DALParams<T>& p, const DALConfig& cfg,
                              Mode mode, Rng& dropout_rng) {
    ad::check(x.defined() && x.shape().ndim() == 4 && x.shape()[1] == 1 &&
                  x.shape()[2] == cfg.channels && x.shape()[3] == cfg.samples,
              "encoder: input must be [N,1," + std::to_string(cfg.channels) + "," +
                  std::to_string(cfg.samples) + "], got " +
                  (x.defined() ? x.shape().str() : std::string("undefined")));
    const T eps = static_cast<T>(cfg.bn_eps);
    const T mom = static_cast<T>(cfg.bn_momentum);

    // block 1: temporal filtering, then spatial mixing across the full cap
    ad::ConvSpec t1;
    t1.kh = 1;
    t1.kw = cfg.temporal_kernel;
    t1.in_depth = 1;
    t1.out_depth = cfg.F1;
    t1.same_pad_w();
    auto h = ad::conv2d(x, p.conv1_w, p.conv1_b, t1);
    h = ad::batch_norm(h, p.bn1_g, p.bn1_b, p.bn1_rm, p.bn1_rv, eps, mom, mode);
    auto skip1 = h;

    ad::ConvSpec sp;
    sp.kh = cfg.channels;
    sp.kw = 1;
    sp.in_depth = cfg.F1;
    sp.depth_multiplier = cfg.Dm;
    sp.out_depth = cfg.F1 * cfg.Dm;
    h = ad::depthwise_conv2d(h, p.dw_spatial_w, sp);
    h = ad::batch_norm(h, p.bn2_g, p.bn2_b, p.bn2_rm, p.bn2_rv, eps, mom, mode);
    h = ad::elu(h);
    h = ad::avg_pool_w(h, cfg.pool1, cfg.pool1);
    h = ad::dropout(h, cfg.dropout_p, mode, dropout_rng);
    auto skip2 = h;

    // block 2: depthwise/pointwise separable refinement
    ad::ConvSpec sep;
    sep.kh = 1;
    sep.kw = cfg.sep_kernel;
    sep.in_depth = cfg.F1 * cfg.Dm;
    sep.depth_multiplier = 1;
    sep.out_depth = cfg.F1 * cfg.Dm;
    sep.same_pad_w();
    h = ad::depthwise_conv2d(h, p.dw_sep_w, sep);
    h = ad::pointwise_conv2d(h, p.pw_sep_w);
    h = ad::batch_norm(h, p.bn3_g, p.bn3_b, p.bn3_rm, p.bn3_rv, eps, mom, mode);
    h = ad::elu(h);
    h = ad::avg_pool_w(h, cfg.pool2, cfg.pool2);
    h = ad::dropout(h, cfg.dropout_p, mode, dropout_rng);

    return {h, skip1, skip2};
}

template <class T>
ClassifierOut<T> classifier_forward(const Tensor<T>& feature_map, DALParams<T>& p,
                                    const DALConfig& cfg) {
    auto flat = ad::flatten2(feature_map);
    ad::check(flat.shape()[1] == cfg.feature_len(),
              "classifier: flattened feature length " + std::to_string(flat.shape()[1]) +
                  " does not match config feature_len " + std::to_string(cfg.feature_len()));
    auto logits = ad::dense(flat, p.fc_w, p.fc_b);
    auto probs = ad::softmax_rows(logits);
    return {logits, probs};
}

template <class T>
Tensor<T> decoder_forward(const Tensor<T>& feature_map, const Tensor<T>& skip1,
                          const Tensor<T>& skip2, DALParams<T>& p, const DALConfig& cfg,
                          Mode mode) {
    ad::check(feature_map.defined() && skip1.defined() && skip2.defined(),
              "decoder: undefined input");
    const int n = feature_map.shape()[0];
    ad::check(skip1.shape()[0] == n && skip2.shape()[0] == n,
              "decoder: batch mismatch between feature map and skip taps");
    ad::check(feature_map.shape() == ad::Shape({n, cfg.F2, 1, cfg.bottleneck_len()}),
              "decoder: feature map shape " + feature_map.shape().str() + " does not match config");
    ad::check(skip2.shape() == ad::Shape({n, cfg.F1 * cfg.Dm, 1, cfg.mid_len()}),
              "decoder: skip2 shape " + skip2.shape().str() + " does not match config");
    ad::check(skip1.shape() == ad::Shape({n, cfg.F1, cfg.channels, cfg.samples}),
              "decoder: skip1 shape " + skip1.shape().str() + " does not match config");
    const T eps = static_cast<T>(cfg.bn_eps);
    const T mom = static_cast<T>(cfg.bn_momentum);

    // stage 1: stretch the bottleneck back to the block-1 tap length
    ad::ConvSpec d1;
    d1.kh = 1;
    d1.kw = cfg.dec_kernel1;
    d1.stride_w = cfg.dec_stride1;
    d1.in_depth = cfg.F2;
    d1.out_depth = cfg.F2;
    d1.output_crop_w = cfg.mid_len(); // trim the stride overhang to the tap length
    auto h = ad::transpose_conv2d(feature_map, p.dec1_w, d1);
    h = ad::batch_norm(h, p.bn4_g, p.bn4_b, p.bn4_rm, p.bn4_rv, eps, mom, mode);
    h = ad::elu(h);
    h = ad::concat_depth(h, skip2);

    // stage 2: recover the full temporal length, then the spatial layout
    ad::ConvSpec d2;
    d2.kh = 1;
    d2.kw = cfg.dec_kernel2;
    d2.stride_w = cfg.dec_stride2;
    d2.in_depth = cfg.F2 + cfg.F1 * cfg.Dm;
    d2.out_depth = cfg.F2;
    d2.output_crop_w = cfg.samples;
    h = ad::transpose_conv2d(h, p.dec2_w, d2);
    h = ad::batch_norm(h, p.bn5_g, p.bn5_b, p.bn5_rm, p.bn5_rv, eps, mom, mode);
    h = ad::elu(h);

    ad::ConvSpec ds;
    ds.kh = cfg.channels;
    ds.kw = 1;
    ds.in_depth = cfg.F2;
    ds.out_depth = cfg.F1;
    h = ad::transpose_conv2d(h, p.dec_spatial_w, ds);
    h = ad::concat_depth(h, skip1);
    return ad::pointwise_conv2d(h, p.out_pw_w);
}

// ---------------------------------------------------------------------------
// loss

template <class T>
std::pair<Tensor<T>, LossBreakdown> combined_loss(const Tensor<T>& logits,
                                                  const Tensor<T>& onehot,
                                                  const Tensor<T>& recon,
                                                  const Tensor<T>& overt_target, double alpha,
                                                  ReconLoss kind) {
    ad::check(alpha >= 0 && alpha <= 1, "combined loss: alpha must be in [0,1]");
    auto ce = ad::softmax_cross_entropy(logits, onehot);

    LossBreakdown out;
    out.alpha = alpha;
    out.ce = static_cast<double>(ce.item());

    if (alpha == 1.0) {
        // pure classification; a reconstruction, if supplied, is reported only
        if (recon.defined() && overt_target.defined()) {
            ad::NoGradGuard ng;
            auto r = kind == ReconLoss::l1 ? ad::l1_loss(recon, overt_target)
                                           : ad::l2_loss(recon, overt_target);
            out.recon = static_cast<double>(r.item());
        }
        out.total = out.ce;
        return {ce, out};
    }

    ad::check(recon.defined() && overt_target.defined(),
              "combined loss: alpha < 1 requires a reconstruction and its paired overt target");
    auto r = kind == ReconLoss::l1 ? ad::l1_loss(recon, overt_target)
                                   : ad::l2_loss(recon, overt_target);
    out.recon = static_cast<double>(r.item());
    auto total = ad::add_scaled(ce, r, static_cast<T>(alpha), static_cast<T>(1.0 - alpha));
    out.total = alpha * out.ce + (1.0 - alpha) * out.recon;
    return {total, out};
}

DALVariant dal_variant(const DALConfig& cfg, bool use_overt) {
    DALVariant v;
    v.config = cfg;
    v.use_overt = use_overt;
    if (!use_overt) v.config.alpha = 1.0; // decoder leaves the objective entirely
    v.name = use_overt ? "dal_w" : "dal_wo";
    return v;
}

// ---------------------------------------------------------------------------
// training step and prediction

template <class T>
LossBreakdown dal_train_step(const Tensor<T>& imagined, const Tensor<T>& onehot,
                             const Tensor<T>& overt, DALParams<T>& p, const DALVariant& variant,
                             ad::Adam<T>& opt, Rng& dropout_rng) {
    const DALConfig& cfg = variant.config;
    opt.zero_grad();

    auto enc = encoder_forward(imagined, p, cfg, Mode::train, dropout_rng);
    auto clf = classifier_forward(enc.feature_map, p, cfg);

    Tensor<T> recon, target;
    if (variant.use_overt) {
        ad::check(overt.defined(), "dal train step: the w/ variant needs the paired overt batch");
        recon = decoder_forward(enc.feature_map, enc.skip1, enc.skip2, p, cfg, Mode::train);
        target = overt;
    }
    auto [total, loss] = combined_loss(clf.logits, onehot, recon, target, cfg.alpha,
                                       cfg.recon_loss);

    if (!std::isfinite(loss.ce))
        throw std::runtime_error("dal train step: cross-entropy term diverged (ce=" +
                                 std::to_string(loss.ce) + ")");
    if (!std::isfinite(loss.recon))
        throw std::runtime_error("dal train step: reconstruction term diverged (recon=" +
                                 std::to_string(loss.recon) + ")");

    ad::backward(total);
    opt.step();
    return loss;
}

template <class T>
std::vector<int> dal_predict(const Tensor<T>& x, DALParams<T>& p, const DALConfig& cfg) {
    ad::NoGradGuard ng;
    Rng unused(0);
    auto enc = encoder_forward(x, p, cfg, Mode::eval, unused);
    auto clf = classifier_forward(enc.feature_map, p, cfg);
    const int n = clf.logits.shape()[0];
    const int k = clf.logits.shape()[1];
    const T* lp = clf.logits.ptr();
    std::vector<int> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const T* row = lp + static_cast<int64_t>(i) * k;
        labels[static_cast<size_t>(i)] =
            static_cast<int>(std::max_element(row, row + k) - row);
    }
    return labels;
}

// ---------------------------------------------------------------------------
// checkpoints

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts need byte swapping");

json config_to_json(const DALConfig& c) {
    json j;
    j["channels"] = c.channels;
    j["samples"] = c.samples;
    j["n_classes"] = c.n_classes;
    j["F1"] = c.F1;
    j["Dm"] = c.Dm;
    j["F2"] = c.F2;
    j["temporal_kernel"] = c.temporal_kernel;
    j["sep_kernel"] = c.sep_kernel;
    j["pool1"] = c.pool1;
    j["pool2"] = c.pool2;
    j["dec_kernel1"] = c.dec_kernel1;
    j["dec_stride1"] = c.dec_stride1;
    j["dec_kernel2"] = c.dec_kernel2;
    j["dec_stride2"] = c.dec_stride2;
    j["dropout_p"] = c.dropout_p;
    j["alpha"] = c.alpha;
    j["recon_loss"] = c.recon_loss == ReconLoss::l1 ? "l1" : "l2";
    j["bn_eps"] = c.bn_eps;
    j["bn_momentum"] = c.bn_momentum;
    return j;
}

DALConfig config_from_json(const json& j) {
    DALConfig c;
    auto geti = [&](const char* k) {
        if (!j.contains(k))
            throw std::runtime_error("checkpoint manifest: missing config key '" +
                                     std::string(k) + "'");
        return j.at(k).get<int>();
    };
    auto getd = [&](const char* k) {
        if (!j.contains(k))
            throw std::runtime_error("checkpoint manifest: missing config key '" +
                                     std::string(k) + "'");
        return j.at(k).get<double>();
    };
    c.channels = geti("channels");
    c.samples = geti("samples");
    c.n_classes = geti("n_classes");
    c.F1 = geti("F1");
    c.Dm = geti("Dm");
    c.F2 = geti("F2");
    c.temporal_kernel = geti("temporal_kernel");
    c.sep_kernel = geti("sep_kernel");
    c.pool1 = geti("pool1");
    c.pool2 = geti("pool2");
    c.dec_kernel1 = geti("dec_kernel1");
    c.dec_stride1 = geti("dec_stride1");
    c.dec_kernel2 = geti("dec_kernel2");
    c.dec_stride2 = geti("dec_stride2");
    c.dropout_p = getd("dropout_p");
    c.alpha = getd("alpha");
    c.bn_eps = getd("bn_eps");
    c.bn_momentum = getd("bn_momentum");
    const std::string rl = j.value("recon_loss", "l1");
    if (rl == "l1")
        c.recon_loss = ReconLoss::l1;
    else if (rl == "l2")
        c.recon_loss = ReconLoss::l2;
    else
        throw std::runtime_error("checkpoint manifest: unknown recon_loss '" + rl + "'");
    return c;
}

namespace {

// registry order: all trainables, then all buffers
std::vector<std::pair<std::string, const ad::Tensor<float>*>> full_registry(
    const DALParams<float>& p) {
    auto regs = p.named_trainables();
    for (auto& e : p.named_buffers()) regs.push_back(e);
    return regs;
}

std::vector<std::pair<std::string, ad::Tensor<float>*>> full_registry(DALParams<float>& p) {
    auto regs = p.named_trainables();
    for (auto& e : p.named_buffers()) regs.push_back(e);
    return regs;
}

void atomic_write(const fs::path& path, const std::string& bytes) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

} // namespace

void save_checkpoint(const DALParams<float>& p, const DALConfig& cfg, const std::string& dir) {
    const fs::path root(dir);
    fs::create_directories(root);

    json manifest;
    manifest["format_version"] = 1;
    manifest["config"] = config_to_json(cfg);

    std::string blob;
    json regs = json::array();
    int64_t offset = 0;
    for (const auto& [name, t] : full_registry(p)) {
        if (!t->defined())
            throw std::invalid_argument("save checkpoint: parameter '" + name +
                                        "' is undefined");
        json e;
        e["name"] = name;
        e["shape"] = t->shape().d;
        e["offset"] = offset;
        regs.push_back(e);
        const auto span = t->data();
        blob.append(reinterpret_cast<const char*>(span.data()), span.size() * sizeof(float));
        offset += t->numel();
    }
    manifest["params"] = regs;
    manifest["total_floats"] = offset;
    manifest["blob"] = "params.f32";

    atomic_write(root / "manifest.json", manifest.dump(2) + "\n");
    atomic_write(root / "params.f32", blob);
}

std::pair<DALParams<float>, DALConfig> load_checkpoint(const std::string& dir) {
    const fs::path root(dir);
    json manifest;
    {
        std::ifstream in(root / "manifest.json");
        if (!in)
            throw std::runtime_error("cannot open: " + (root / "manifest.json").string());
        try {
            in >> manifest;
        } catch (const json::parse_error& e) {
            throw std::runtime_error("checkpoint manifest: " + std::string(e.what()));
        }
    }
    if (!manifest.contains("config") || !manifest.contains("params"))
        throw std::runtime_error("checkpoint manifest: missing config or params section");
    const DALConfig cfg = config_from_json(manifest["config"]);
    cfg.validate();

    // expected registry comes from the config alone
    DALParams<float> p = init_dal_params<float>(cfg, 0);
    auto regs = full_registry(p);

    const auto& entries = manifest["params"];
    if (entries.size() != regs.size())
        throw std::runtime_error("checkpoint manifest: expected " +
                                 std::to_string(regs.size()) + " parameters, found " +
                                 std::to_string(entries.size()));
    int64_t offset = 0;
    for (size_t i = 0; i < regs.size(); ++i) {
        const auto& [name, t] = regs[i];
        const auto& e = entries[i];
        if (e.at("name").get<std::string>() != name)
            throw std::runtime_error("checkpoint manifest: parameter " + std::to_string(i) +
                                     " is '" + e.at("name").get<std::string>() +
                                     "', expected '" + name + "'");
        const auto shp = e.at("shape").get<std::vector<int>>();
        if (ad::Shape(shp) != t->shape())
            throw std::runtime_error("checkpoint manifest: '" + name + "' has shape " +
                                     ad::Shape(shp).str() + ", config implies " +
                                     t->shape().str());
        if (e.at("offset").get<int64_t>() != offset)
            throw std::runtime_error("checkpoint manifest: '" + name + "' offset " +
                                     std::to_string(e.at("offset").get<int64_t>()) +
                                     " does not match layout offset " + std::to_string(offset));
        offset += t->numel();
    }

    const fs::path blob_path = root / manifest.value("blob", "params.f32");
    std::ifstream blob(blob_path, std::ios::binary | std::ios::ate);
    if (!blob) throw std::runtime_error("cannot open: " + blob_path.string());
    const auto actual = static_cast<int64_t>(blob.tellg());
    const auto expected = offset * static_cast<int64_t>(sizeof(float));
    if (actual != expected)
        throw std::runtime_error("checkpoint blob: expected " + std::to_string(expected) +
                                 " bytes, found " + std::to_string(actual));
    blob.seekg(0);
    for (auto& [name, t] : full_registry(p)) {
        blob.read(reinterpret_cast<char*>(t->ptr()),
                  static_cast<std::streamsize>(t->numel() * sizeof(float)));
        if (!blob) throw std::runtime_error("short read: " + blob_path.string());
    }
    return {p, cfg};
}

// ---------------------------------------------------------------------------
// explicit instantiations

#define DAL_INSTANTIATE_MODEL(T)                                                               \
    template struct DALParams<T>;                                                              \
    template DALParams<T> init_dal_params<T>(const DALConfig&, uint64_t);                      \
    template EncoderOut<T> encoder_forward<T>(const Tensor<T>&, DALParams<T>&,                 \
                                              const DALConfig&, Mode, Rng&);                   \
    template ClassifierOut<T> classifier_forward<T>(const Tensor<T>&, DALParams<T>&,           \
                                                    const DALConfig&);                         \
    template Tensor<T> decoder_forward<T>(const Tensor<T>&, const Tensor<T>&,                  \
                                          const Tensor<T>&, DALParams<T>&, const DALConfig&,   \
                                          Mode);                                               \
    template std::pair<Tensor<T>, LossBreakdown> combined_loss<T>(                             \
        const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double,       \
        ReconLoss);                                                                            \
    template LossBreakdown dal_train_step<T>(const Tensor<T>&, const Tensor<T>&,              \
                                             const Tensor<T>&, DALParams<T>&,                 \
                                             const DALVariant&, ad::Adam<T>&, Rng&);          \
    template std::vector<int> dal_predict<T>(const Tensor<T>&, DALParams<T>&, const DALConfig&);

DAL_INSTANTIATE_MODEL(float)
DAL_INSTANTIATE_MODEL(double)

} // namespace dal::model
