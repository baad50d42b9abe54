#include "dal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dal/bundle.hpp"

namespace dal::bl {

using ad::Mode;
using ad::Tensor;
using lin::Mat;
using model::DALConfig;
using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

} // namespace

// ---------------------------------------------------------------------------
// CSP

Mat normalized_covariance(const TrialView& t) {
    require(t.data != nullptr && t.channels > 0 && t.samples > 0,
            "covariance: empty trial view");
    Mat c(t.channels, t.channels);
    for (int i = 0; i < t.channels; ++i) {
        const float* ri = t.data + static_cast<size_t>(i) * t.samples;
        for (int j = i; j < t.channels; ++j) {
            const float* rj = t.data + static_cast<size_t>(j) * t.samples;
            double s = 0.0;
            for (int k = 0; k < t.samples; ++k) s += double(ri[k]) * double(rj[k]);
            c(i, j) = c(j, i) = s;
        }
    }
    double trace = 0.0;
    for (int i = 0; i < t.channels; ++i) trace += c(i, i);
    if (trace > 0.0)
        for (double& v : c.a) v /= trace;
    return c;
}

CSPModel csp_fit(const std::vector<std::vector<TrialView>>& trials_by_class, int m) {
    const int n_classes = static_cast<int>(trials_by_class.size());
    require(n_classes >= 2, "csp_fit: need at least 2 classes, got " + std::to_string(n_classes));
    require(m >= 2 && m % 2 == 0, "csp_fit: m must be an even count >= 2, got " +
                                      std::to_string(m));
    int channels = 0;
    for (int c = 0; c < n_classes; ++c) {
        require(trials_by_class[static_cast<size_t>(c)].size() >= 2,
                "csp_fit: class " + std::to_string(c) + " has " +
                    std::to_string(trials_by_class[static_cast<size_t>(c)].size()) +
                    " trials, need at least 2");
        for (const auto& t : trials_by_class[static_cast<size_t>(c)]) {
            if (channels == 0) channels = t.channels;
            require(t.channels == channels, "csp_fit: trials disagree on channel count");
        }
    }
    require(m <= channels, "csp_fit: m = " + std::to_string(m) + " exceeds the channel count " +
                               std::to_string(channels));

    // per-class average normalized covariance
    std::vector<Mat> sigma(static_cast<size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) {
        Mat acc(channels, channels);
        for (const auto& t : trials_by_class[static_cast<size_t>(c)]) {
            const Mat cov = normalized_covariance(t);
            for (size_t i = 0; i < acc.a.size(); ++i) acc.a[i] += cov.a[i];
        }
        const double inv = 1.0 / static_cast<double>(trials_by_class[static_cast<size_t>(c)].size());
        for (double& v : acc.a) v *= inv;
        sigma[static_cast<size_t>(c)] = std::move(acc);
    }

    CSPModel model;
    model.channels = channels;
    model.m = m;
    for (int c = 0; c < n_classes; ++c) {
        // rest = pooled mean over every trial outside class c
        Mat rest(channels, channels);
        int64_t n_rest = 0;
        for (int o = 0; o < n_classes; ++o) {
            if (o == c) continue;
            const auto n_o = static_cast<int64_t>(trials_by_class[static_cast<size_t>(o)].size());
            for (size_t i = 0; i < rest.a.size(); ++i)
                rest.a[i] += sigma[static_cast<size_t>(o)].a[i] * static_cast<double>(n_o);
            n_rest += n_o;
        }
        for (double& v : rest.a) v /= static_cast<double>(n_rest);

        Mat composite(channels, channels);
        for (size_t i = 0; i < composite.a.size(); ++i)
            composite.a[i] = sigma[static_cast<size_t>(c)].a[i] + rest.a[i];
        double trace = 0.0;
        for (int i = 0; i < channels; ++i) trace += composite(i, i);
        for (int i = 0; i < channels; ++i) composite(i, i) += 1e-6 * trace;

        lin::SymEig eig;
        try {
            eig = lin::symmetric_generalized_eig(sigma[static_cast<size_t>(c)], composite);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(
                "csp_fit: composite covariance for class " + std::to_string(c) +
                " is rank deficient even after 1e-6 diagonal loading (" + e.what() +
                "); provide more or richer trials, or shrink the covariances harder");
        }

        // m/2 most class-discriminative from each end of the spectrum
        Mat w(channels, m);
        for (int k = 0; k < m / 2; ++k)
            for (int i = 0; i < channels; ++i) {
                w(i, k) = eig.vectors(i, k);
                w(i, m / 2 + k) = eig.vectors(i, channels - m / 2 + k);
            }
        model.filters.push_back(std::move(w));
        model.eigenvalues.push_back(std::move(eig.values));
    }
    return model;
}

std::vector<double> csp_features(const TrialView& trial, const CSPModel& model) {
    require(trial.channels == model.channels,
            "csp_features: trial has " + std::to_string(trial.channels) + " channels, model " +
                std::to_string(model.channels));
    std::vector<double> out;
    out.reserve(model.filters.size() * static_cast<size_t>(model.m));
    std::vector<double> y(static_cast<size_t>(trial.samples));
    for (const auto& w : model.filters) {
        std::vector<double> var(static_cast<size_t>(model.m), 0.0);
        for (int k = 0; k < model.m; ++k) {
            for (int s = 0; s < trial.samples; ++s) {
                double v = 0.0;
                for (int i = 0; i < trial.channels; ++i)
                    v += w(i, k) * trial.data[static_cast<size_t>(i) * trial.samples + s];
                y[static_cast<size_t>(s)] = v;
            }
            double mean = 0.0;
            for (double v : y) mean += v;
            mean /= trial.samples;
            double ss = 0.0;
            for (double v : y) ss += (v - mean) * (v - mean);
            var[static_cast<size_t>(k)] = ss / trial.samples;
        }
        double total = 0.0;
        for (double v : var) total += v;
        const double denom = std::max(total, 1e-300);
        for (double v : var) out.push_back(std::log(std::max(v / denom, 1e-12)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// LDA

LDAModel lda_fit(const std::vector<std::vector<double>>& features,
                 const std::vector<int>& labels, double gamma) {
    const auto n = features.size();
    require(n == labels.size(), "lda_fit: feature and label counts differ");
    require(n >= 2, "lda_fit: need at least 2 samples");
    require(gamma >= 0.0 && gamma <= 1.0, "lda_fit: gamma must be in [0,1]");
    const int d = static_cast<int>(features.front().size());
    int k = 0;
    for (size_t i = 0; i < n; ++i) {
        require(static_cast<int>(features[i].size()) == d,
                "lda_fit: inconsistent feature lengths");
        require(labels[i] >= 0, "lda_fit: negative label");
        k = std::max(k, labels[i] + 1);
    }
    std::vector<int64_t> counts(static_cast<size_t>(k), 0);
    for (int lab : labels) ++counts[static_cast<size_t>(lab)];
    int present = 0;
    for (int64_t c : counts) present += c > 0;
    require(present >= 2, "lda_fit: need at least 2 classes present, got " +
                              std::to_string(present));
    require(static_cast<int64_t>(n) > k,
            "lda_fit: need more samples than classes for a pooled covariance");

    LDAModel model;
    model.gamma = gamma;
    model.means = Mat(k, d);
    for (size_t i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) model.means(labels[i], j) += features[i][static_cast<size_t>(j)];
    for (int c = 0; c < k; ++c)
        if (counts[static_cast<size_t>(c)] > 0)
            for (int j = 0; j < d; ++j)
                model.means(c, j) /= static_cast<double>(counts[static_cast<size_t>(c)]);

    // pooled within-class covariance, unbiased over N - K
    Mat cov(d, d);
    std::vector<double> centered(static_cast<size_t>(d));
    for (size_t i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j)
            centered[static_cast<size_t>(j)] = features[i][static_cast<size_t>(j)] -
                                               model.means(labels[i], j);
        for (int r = 0; r < d; ++r)
            for (int c2 = r; c2 < d; ++c2)
                cov(r, c2) += centered[static_cast<size_t>(r)] * centered[static_cast<size_t>(c2)];
    }
    const double norm = 1.0 / static_cast<double>(static_cast<int64_t>(n) - present);
    for (int r = 0; r < d; ++r)
        for (int c2 = r; c2 < d; ++c2) cov(c2, r) = cov(r, c2) = cov(r, c2) * norm;

    // shrink toward the average-eigenvalue sphere
    double trace = 0.0;
    for (int i = 0; i < d; ++i) trace += cov(i, i);
    const double target = trace / d;
    for (int r = 0; r < d; ++r)
        for (int c2 = 0; c2 < d; ++c2)
            cov(r, c2) = (1.0 - gamma) * cov(r, c2) + (r == c2 ? gamma * target : 0.0);
    model.cov = cov;

    try {
        model.chol = lin::cholesky(model.cov);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("lda_fit: shared covariance is singular at gamma = " +
                                 std::to_string(gamma) + " (" + e.what() +
                                 "); raise gamma above 0 to shrink it positive definite");
    }
    // the factorization rejects only pivots <= 0; an exactly dependent feature
    // column can round either way, so vet the pivots against the trace scale
    for (int j = 0; j < d; ++j)
        if (model.chol(j, j) * model.chol(j, j) <= 1e-10 * target)
            throw std::runtime_error(
                "lda_fit: shared covariance is numerically singular at gamma = " +
                std::to_string(gamma) + " (pivot " + std::to_string(j) +
                " is below 1e-10 of the average variance); raise gamma above 0 to shrink it "
                "positive definite");

    model.priors.resize(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c)
        model.priors[static_cast<size_t>(c)] =
            static_cast<double>(counts[static_cast<size_t>(c)]) / static_cast<double>(n);
    return model;
}

LDAPrediction lda_predict(const LDAModel& model, const std::vector<double>& x) {
    const int d = model.means.cols;
    require(static_cast<int>(x.size()) == d, "lda_predict: feature length " +
                                                 std::to_string(x.size()) + ", model expects " +
                                                 std::to_string(d));
    const int k = model.means.rows;
    LDAPrediction pred;
    pred.scores.resize(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
        if (model.priors[static_cast<size_t>(c)] <= 0.0) {
            pred.scores[static_cast<size_t>(c)] = -std::numeric_limits<double>::infinity();
            continue;
        }
        std::vector<double> mu(static_cast<size_t>(d));
        for (int j = 0; j < d; ++j) mu[static_cast<size_t>(j)] = model.means(c, j);
        const std::vector<double> s = lin::cholesky_solve(model.chol, mu);
        double xs = 0.0, ms = 0.0;
        for (int j = 0; j < d; ++j) {
            xs += x[static_cast<size_t>(j)] * s[static_cast<size_t>(j)];
            ms += mu[static_cast<size_t>(j)] * s[static_cast<size_t>(j)];
        }
        pred.scores[static_cast<size_t>(c)] =
            xs - 0.5 * ms + std::log(model.priors[static_cast<size_t>(c)]);
    }
    pred.label = 0;
    for (int c = 1; c < k; ++c)
        if (pred.scores[static_cast<size_t>(c)] > pred.scores[static_cast<size_t>(pred.label)])
            pred.label = c;
    return pred;
}

// ---------------------------------------------------------------------------
// EEGNet

namespace {

// The registry is the encoder's, name for name, with the classifier renamed
// to the network's own head; decoder tensors never appear.
template <class T, class TensorPtr>
std::vector<std::pair<std::string, TensorPtr>> eegnet_registry(
    std::vector<std::pair<std::string, TensorPtr>> core_entries) {
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (auto& [name, t] : core_entries) {
        if (name.rfind("dec.", 0) == 0) continue;
        if (name.rfind("clf.fc.", 0) == 0)
            out.emplace_back("head.fc." + name.substr(7), t);
        else
            out.emplace_back(name, t);
    }
    return out;
}

} // namespace

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> EEGNetParams<T>::named_trainables() {
    return eegnet_registry<T>(core.named_trainables());
}

template <class T>
std::vector<std::pair<std::string, const Tensor<T>*>> EEGNetParams<T>::named_trainables() const {
    return eegnet_registry<T>(core.named_trainables());
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> EEGNetParams<T>::named_buffers() {
    return eegnet_registry<T>(core.named_buffers());
}

template <class T>
std::vector<std::pair<std::string, const Tensor<T>*>> EEGNetParams<T>::named_buffers() const {
    return eegnet_registry<T>(core.named_buffers());
}

template <class T>
std::vector<Tensor<T>> EEGNetParams<T>::trainables() {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_trainables()) out.push_back(*t);
    return out;
}

template <class T>
bool EEGNetParams<T>::all_finite() const {
    for (const auto& [name, t] : named_trainables())
        if (!t->all_finite()) return false;
    for (const auto& [name, t] : named_buffers())
        if (!t->all_finite()) return false;
    return true;
}

template <class T>
EEGNetParams<T> init_eegnet_params(const DALConfig& cfg, uint64_t seed) {
    EEGNetParams<T> p;
    p.core = model::init_dal_params<T>(cfg, seed);
    return p;
}

template <class T>
int64_t eegnet_param_count(EEGNetParams<T>& p) {
    int64_t n = 0;
    for (auto& [name, t] : p.named_trainables()) n += t->numel();
    return n;
}

template <class T>
Tensor<T> eegnet_forward(const Tensor<T>& x, EEGNetParams<T>& p, const DALConfig& cfg,
                         Mode mode, Rng& dropout_rng) {
    auto enc = model::encoder_forward(x, p.core, cfg, mode, dropout_rng);
    return model::classifier_forward(enc.feature_map, p.core, cfg).probs;
}

template <class T>
double eegnet_train_step(const Tensor<T>& x, const Tensor<T>& onehot, EEGNetParams<T>& p,
                         const DALConfig& cfg, ad::Adam<T>& opt, Rng& dropout_rng) {
    opt.zero_grad();
    auto enc = model::encoder_forward(x, p.core, cfg, Mode::train, dropout_rng);
    auto clf = model::classifier_forward(enc.feature_map, p.core, cfg);
    auto loss = ad::softmax_cross_entropy(clf.logits, onehot);
    const double ce = loss.item();
    if (!std::isfinite(ce))
        throw std::runtime_error("eegnet: cross-entropy term diverged (non-finite loss)");
    ad::backward(loss);
    opt.step();
    return ce;
}

template <class T>
std::vector<int> eegnet_predict(const Tensor<T>& x, EEGNetParams<T>& p, const DALConfig& cfg) {
    ad::NoGradGuard ng;
    Rng unused(0);
    auto enc = model::encoder_forward(x, p.core, cfg, Mode::eval, unused);
    auto clf = model::classifier_forward(enc.feature_map, p.core, cfg);
    const int n = clf.logits.shape()[0];
    const int k = clf.logits.shape()[1];
    std::vector<int> out(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i)
        for (int c = 1; c < k; ++c)
            if (clf.logits.ptr()[i * k + c] > clf.logits.ptr()[i * k + out[static_cast<size_t>(i)]])
                out[static_cast<size_t>(i)] = c;
    return out;
}

void save_eegnet(const EEGNetParams<float>& p, const DALConfig& cfg, const std::string& dir) {
    json header;
    header["format_version"] = 1;
    header["kind"] = "eegnet";
    header["config"] = model::config_to_json(cfg);

    std::vector<io::BundleEntry> entries;
    auto push = [&](const std::string& name, const Tensor<float>* t) {
        io::BundleEntry e;
        e.name = name;
        e.shape = t->shape().d;
        e.data = t->ptr();
        entries.push_back(std::move(e));
    };
    for (const auto& [name, t] : p.named_trainables()) push(name, t);
    for (const auto& [name, t] : p.named_buffers()) push(name, t);
    io::write_float_bundle(dir, std::move(header), entries);
}

std::pair<EEGNetParams<float>, DALConfig> load_eegnet(const std::string& dir) {
    const io::LoadedBundle bundle = io::read_float_bundle(dir);
    if (bundle.manifest.value("kind", "") != "eegnet")
        throw std::runtime_error("eegnet checkpoint: kind is '" +
                                 bundle.manifest.value("kind", "") + "', expected 'eegnet'");
    if (!bundle.manifest.contains("config"))
        throw std::runtime_error("eegnet checkpoint: missing config");
    const DALConfig cfg = model::config_from_json(bundle.manifest["config"]);
    cfg.validate();

    EEGNetParams<float> p = init_eegnet_params<float>(cfg, 0);
    for (auto regs = p.named_trainables(); auto& [name, t] : regs) {
        const auto& e = bundle.find(name, t->shape().d);
        std::copy(e.data, e.data + e.numel, t->ptr());
    }
    for (auto regs = p.named_buffers(); auto& [name, t] : regs) {
        const auto& e = bundle.find(name, t->shape().d);
        std::copy(e.data, e.data + e.numel, t->ptr());
    }
    return {std::move(p), cfg};
}

// ---------------------------------------------------------------------------
// CSP-LDA serialization

namespace {

std::vector<float> to_f32(const Mat& m) {
    std::vector<float> out(m.a.size());
    for (size_t i = 0; i < m.a.size(); ++i) out[i] = static_cast<float>(m.a[i]);
    return out;
}

Mat from_entry(const io::BundleEntry& e, int rows, int cols) {
    Mat m(rows, cols);
    for (size_t i = 0; i < m.a.size(); ++i) m.a[i] = e.data[i];
    return m;
}

} // namespace

void save_csp_lda(const CSPModel& csp, const LDAModel& lda, const std::string& dir) {
    json header;
    header["format_version"] = 1;
    header["kind"] = "csp_lda";
    header["channels"] = csp.channels;
    header["m"] = csp.m;
    header["classes"] = static_cast<int>(csp.filters.size());
    header["gamma"] = lda.gamma;

    std::vector<std::vector<float>> storage;
    std::vector<io::BundleEntry> entries;
    auto push = [&](const std::string& name, std::vector<int> shape, std::vector<float> data) {
        storage.push_back(std::move(data));
        io::BundleEntry e;
        e.name = name;
        e.shape = std::move(shape);
        e.data = storage.back().data();
        entries.push_back(std::move(e));
    };
    storage.reserve(csp.filters.size() + 3);

    for (size_t c = 0; c < csp.filters.size(); ++c)
        push("csp.class" + std::to_string(c) + ".filters", {csp.channels, csp.m},
             to_f32(csp.filters[c]));
    push("lda.means", {lda.means.rows, lda.means.cols}, to_f32(lda.means));
    push("lda.cov", {lda.cov.rows, lda.cov.cols}, to_f32(lda.cov));
    {
        // size is read before the move: argument evaluation order is unspecified
        const int count = static_cast<int>(lda.priors.size());
        std::vector<float> pri(lda.priors.size());
        for (size_t i = 0; i < pri.size(); ++i) pri[i] = static_cast<float>(lda.priors[i]);
        push("lda.priors", {count}, std::move(pri));
    }
    io::write_float_bundle(dir, std::move(header), entries);
}

std::pair<CSPModel, LDAModel> load_csp_lda(const std::string& dir) {
    const io::LoadedBundle bundle = io::read_float_bundle(dir);
    if (bundle.manifest.value("kind", "") != "csp_lda")
        throw std::runtime_error("csp-lda checkpoint: kind is '" +
                                 bundle.manifest.value("kind", "") + "', expected 'csp_lda'");
    for (const char* key : {"channels", "m", "classes", "gamma"})
        if (!bundle.manifest.contains(key))
            throw std::runtime_error("csp-lda checkpoint: missing key '" + std::string(key) + "'");

    CSPModel csp;
    csp.channels = bundle.manifest["channels"].get<int>();
    csp.m = bundle.manifest["m"].get<int>();
    const int classes = bundle.manifest["classes"].get<int>();
    for (int c = 0; c < classes; ++c)
        csp.filters.push_back(from_entry(
            bundle.find("csp.class" + std::to_string(c) + ".filters", {csp.channels, csp.m}),
            csp.channels, csp.m));

    LDAModel lda;
    lda.gamma = bundle.manifest["gamma"].get<double>();
    auto matrix_entry = [&](const std::string& name) -> const io::BundleEntry& {
        const auto& e = bundle.find(name);
        if (e.shape.size() != 2)
            throw std::runtime_error("csp-lda checkpoint: '" + name + "' is not a matrix");
        return e;
    };
    const auto& me = matrix_entry("lda.means");
    if (me.shape[0] != classes)
        throw std::runtime_error("csp-lda checkpoint: 'lda.means' has " +
                                 std::to_string(me.shape[0]) + " rows for " +
                                 std::to_string(classes) + " classes");
    lda.means = from_entry(me, me.shape[0], me.shape[1]);
    const auto& ce = matrix_entry("lda.cov");
    if (ce.shape[0] != me.shape[1] || ce.shape[1] != me.shape[1])
        throw std::runtime_error("csp-lda checkpoint: 'lda.cov' shape does not match the " +
                                 std::to_string(me.shape[1]) + " feature columns of 'lda.means'");
    lda.cov = from_entry(ce, ce.shape[0], ce.shape[1]);
    const auto& pe = bundle.find("lda.priors", {classes});
    lda.priors.assign(pe.data, pe.data + pe.numel);
    lda.chol = lin::cholesky(lda.cov);
    return {std::move(csp), std::move(lda)};
}

// ---------------------------------------------------------------------------
// overt augmentation

std::vector<const data::EEGTrial*> baseline_with_overt(const data::PairedDataset& ds,
                                                       const std::vector<int>& imagined_indices,
                                                       bool use_overt) {
    std::vector<const data::EEGTrial*> out;
    out.reserve(imagined_indices.size() * (use_overt ? 2 : 1));
    for (int idx : imagined_indices) {
        require(idx >= 0 && idx < static_cast<int>(ds.imagined.size()),
                "baseline_with_overt: imagined index " + std::to_string(idx) + " out of range");
        out.push_back(&ds.imagined[static_cast<size_t>(idx)]);
    }
    if (!use_overt) return out;
    require(ds.pairing.size() == ds.imagined.size(),
            "baseline_with_overt: dataset pairing is incomplete");
    for (int idx : imagined_indices) {
        const int ov = ds.pairing[static_cast<size_t>(idx)];
        require(ov >= 0 && ov < static_cast<int>(ds.overt.size()),
                "baseline_with_overt: pairing for trial " + std::to_string(idx) +
                    " is out of range");
        const auto& trial = ds.overt[static_cast<size_t>(ov)];
        if (trial.label != ds.imagined[static_cast<size_t>(idx)].label)
            throw std::logic_error("baseline_with_overt: pairing maps across labels at trial " +
                                   std::to_string(idx));
        out.push_back(&trial);
    }
    return out;
}

// ---------------------------------------------------------------------------

#define DAL_INSTANTIATE_EEGNET(T)                                                              \
    template struct EEGNetParams<T>;                                                           \
    template EEGNetParams<T> init_eegnet_params<T>(const DALConfig&, uint64_t);                \
    template int64_t eegnet_param_count<T>(EEGNetParams<T>&);                                  \
    template Tensor<T> eegnet_forward<T>(const Tensor<T>&, EEGNetParams<T>&, const DALConfig&, \
                                         Mode, Rng&);                                          \
    template double eegnet_train_step<T>(const Tensor<T>&, const Tensor<T>&, EEGNetParams<T>&, \
                                         const DALConfig&, ad::Adam<T>&, Rng&);                \
    template std::vector<int> eegnet_predict<T>(const Tensor<T>&, EEGNetParams<T>&,            \
                                                const DALConfig&);

DAL_INSTANTIATE_EEGNET(float)
DAL_INSTANTIATE_EEGNET(double)

} // namespace dal::bl
