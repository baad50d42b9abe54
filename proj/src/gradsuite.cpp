#include "dal/gradsuite.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>

#include "dal/baselines.hpp"
#include "dal/gradcheck.hpp"
#include "dal/model.hpp"
#include "dal/ops.hpp"
#include "dal/rng.hpp"

namespace dal::gradsuite {

namespace {

using ad::ConvSpec;
using ad::Shape;
using ad::Tensor;
using Clock = std::chrono::steady_clock;

Tensor<double> random_tensor(Rng& rng, Shape s, bool requires_grad = false, double scale = 1.0) {
    std::vector<double> v(static_cast<size_t>(s.numel()));
    for (auto& x : v) x = rng.normal() * scale;
    return Tensor<double>::from(std::move(s), std::move(v), requires_grad);
}

Tensor<double> onehot_rows(const std::vector<int>& labels, int k) {
    std::vector<double> v(labels.size() * static_cast<size_t>(k), 0.0);
    for (size_t i = 0; i < labels.size(); ++i) v[i * k + labels[i]] = 1.0;
    return Tensor<double>::from(Shape{static_cast<int>(labels.size()), k}, std::move(v));
}

// Wraps one op into a scalar loss: a fixed random projection keeps the loss
// sensitive to every output coordinate.
template <class Fn>
double op_error(Fn&& make_output, const std::vector<Tensor<double>>& params, uint64_t seed) {
    Tensor<double> probe;
    auto forward = [&]() -> Tensor<double> {
        Tensor<double> out = make_output();
        if (!probe.defined()) {
            Rng prng(seed ^ 0xabcdef, 123);
            probe = Tensor<double>::zeros(out.shape());
            for (auto& v : probe.data()) v = prng.uniform(-1.0, 1.0);
        }
        return ad::sum_all(ad::mul(out, probe));
    };
    return ad::grad_check(forward, params, 1e-5, 0, seed).max_rel_err;
}

template <class Fn>
CheckResult timed(const std::string& name, double threshold, Fn&& measure) {
    CheckResult r;
    r.name = name;
    r.threshold = threshold;
    const auto t0 = Clock::now();
    r.value = measure();
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    r.pass = r.value < threshold;
    return r;
}

constexpr double kOpBound = 1e-6;
constexpr double kModelBound = 1e-4;
constexpr double kAdjointBound = 1e-10;

} // namespace

std::vector<CheckResult> run_op_checks() {
    std::vector<CheckResult> out;
    const uint64_t seed = 7;
    Rng rng(seed, 8);

    out.push_back(timed("conv2d (pad, stride, bias)", kOpBound, [&] {
        ConvSpec spec;
        spec.kh = 2;
        spec.kw = 3;
        spec.stride_w = 2;
        spec.pad_left = 1;
        spec.pad_right = 1;
        spec.pad_top = 1;
        spec.in_depth = 2;
        spec.out_depth = 3;
        auto x = random_tensor(rng, Shape{2, 2, 3, 7}, true);
        auto w = random_tensor(rng, Shape{3, 2, 2, 3}, true, 0.5);
        auto b = random_tensor(rng, Shape{3}, true, 0.1);
        return op_error([&] { return ad::conv2d(x, w, b, spec); }, {x, w, b}, seed);
    }));

    out.push_back(timed("depthwise_conv2d (Dm=2)", kOpBound, [&] {
        ConvSpec spec;
        spec.kh = 3;
        spec.kw = 1;
        spec.in_depth = 2;
        spec.depth_multiplier = 2;
        spec.out_depth = 4;
        auto x = random_tensor(rng, Shape{2, 2, 5, 4}, true);
        auto w = random_tensor(rng, Shape{4, 3, 1}, true, 0.5);
        return op_error([&] { return ad::depthwise_conv2d(x, w, spec); }, {x, w}, seed);
    }));

    out.push_back(timed("pointwise_conv2d", kOpBound, [&] {
        auto x = random_tensor(rng, Shape{2, 3, 2, 5}, true);
        auto w = random_tensor(rng, Shape{3, 4}, true, 0.5);
        return op_error([&] { return ad::pointwise_conv2d(x, w); }, {x, w}, seed);
    }));

    out.push_back(timed("transpose_conv2d (stride, crop)", kOpBound, [&] {
        ConvSpec spec;
        spec.kw = 4;
        spec.stride_w = 2;
        spec.in_depth = 2;
        spec.out_depth = 3;
        spec.output_crop_w = 9; // trim the full (5-1)*2+4 = 12 back to 9
        auto x = random_tensor(rng, Shape{2, 2, 1, 5}, true);
        auto w = random_tensor(rng, Shape{2, 3, 1, 4}, true, 0.5);
        return op_error([&] { return ad::transpose_conv2d(x, w, spec); }, {x, w}, seed);
    }));

    out.push_back(timed("batch_norm (train mode)", kOpBound, [&] {
        auto x = random_tensor(rng, Shape{3, 2, 2, 4}, true);
        auto gamma = random_tensor(rng, Shape{2}, true, 0.5);
        auto beta = random_tensor(rng, Shape{2}, true, 0.1);
        return op_error(
            [&] {
                auto rm = Tensor<double>::zeros(Shape{2});
                auto rv = Tensor<double>::full(Shape{2}, 1.0);
                return ad::batch_norm(x, gamma, beta, rm, rv, 1e-5, 0.1, ad::Mode::train);
            },
            {x, gamma, beta}, seed);
    }));

    out.push_back(timed("elu", kOpBound, [&] {
        auto x = random_tensor(rng, Shape{3, 7}, true);
        return op_error([&] { return ad::elu(x, 1.0); }, {x}, seed);
    }));

    out.push_back(timed("avg_pool_w", kOpBound, [&] {
        auto x = random_tensor(rng, Shape{2, 3, 1, 8}, true);
        return op_error([&] { return ad::avg_pool_w(x, 4, 4); }, {x}, seed);
    }));

    out.push_back(timed("dropout (p=0 identity)", kOpBound, [&] {
        auto x = random_tensor(rng, Shape{3, 6}, true);
        Rng drop(seed, 77);
        return op_error([&] { return ad::dropout(x, 0.0, ad::Mode::train, drop); }, {x}, seed);
    }));

    out.push_back(timed("dense", kOpBound, [&] {
        auto x = random_tensor(rng, Shape{3, 5}, true);
        auto w = random_tensor(rng, Shape{5, 4}, true, 0.5);
        auto b = random_tensor(rng, Shape{4}, true, 0.1);
        return op_error([&] { return ad::dense(x, w, b); }, {x, w, b}, seed);
    }));

    out.push_back(timed("reshape + flatten2", kOpBound, [&] {
        auto x = random_tensor(rng, Shape{2, 3, 2, 2}, true);
        return op_error([&] { return ad::flatten2(ad::reshape(x, Shape{2, 6, 1, 2})); }, {x},
                        seed);
    }));

    out.push_back(timed("concat_depth", kOpBound, [&] {
        auto a = random_tensor(rng, Shape{2, 2, 3, 4}, true);
        auto b = random_tensor(rng, Shape{2, 3, 3, 4}, true);
        return op_error([&] { return ad::concat_depth(a, b); }, {a, b}, seed);
    }));

    out.push_back(timed("softmax_rows", kOpBound, [&] {
        auto x = random_tensor(rng, Shape{4, 5}, true);
        return op_error([&] { return ad::softmax_rows(x); }, {x}, seed);
    }));

    out.push_back(timed("softmax_cross_entropy (via dense)", kOpBound, [&] {
        auto x = random_tensor(rng, Shape{4, 6}, true);
        auto w = random_tensor(rng, Shape{6, 4}, true, 0.5);
        auto b = random_tensor(rng, Shape{4}, true, 0.1);
        auto y = onehot_rows({0, 1, 2, 3}, 4);
        return ad::grad_check(
                   [&] { return ad::softmax_cross_entropy(ad::dense(x, w, b), y); }, {x, w, b},
                   1e-5, 0, seed)
            .max_rel_err;
    }));

    out.push_back(timed("l1_loss (off the kink)", kOpBound, [&] {
        auto p = random_tensor(rng, Shape{3, 8}, true);
        auto t = Tensor<double>::full(Shape{3, 8}, 5.0); // keep pred - target far from 0
        return ad::grad_check([&] { return ad::l1_loss(p, t); }, {p}, 1e-5, 0, seed)
            .max_rel_err;
    }));

    out.push_back(timed("l2_loss", kOpBound, [&] {
        auto p = random_tensor(rng, Shape{3, 8}, true);
        auto t = random_tensor(rng, Shape{3, 8});
        return ad::grad_check([&] { return ad::l2_loss(p, t); }, {p}, 1e-5, 0, seed)
            .max_rel_err;
    }));

    out.push_back(timed("add / mul / scale / add_scaled / sum_all", kOpBound, [&] {
        auto a = random_tensor(rng, Shape{3, 5}, true);
        auto b = random_tensor(rng, Shape{3, 5}, true);
        return ad::grad_check(
                   [&] {
                       auto mixed = ad::add(ad::mul(a, b), ad::scale(a, 0.5));
                       return ad::sum_all(ad::mul(ad::add_scaled(mixed, b, 1.5, -0.25), mixed));
                   },
                   {a, b}, 1e-5, 0, seed)
            .max_rel_err;
    }));

    return out;
}

std::vector<CheckResult> run_model_checks() {
    std::vector<CheckResult> out;

    model::DALConfig cfg; // full spatial extent, reduced time axis
    cfg.samples = 64;
    cfg.pool1 = 4;
    cfg.pool2 = 4;
    cfg.dropout_p = 0.0;
    cfg.recon_loss = model::ReconLoss::l2; // smooth objective keeps probes well-posed

    out.push_back(timed("DAL full network (alpha=0.9)", kModelBound, [&] {
        auto p = model::init_dal_params<double>(cfg, 61);
        Rng data_rng(62), drop_rng(63);
        auto x = random_tensor(data_rng, Shape{2, 1, cfg.channels, cfg.samples});
        auto target = random_tensor(data_rng, Shape{2, 1, cfg.channels, cfg.samples});
        auto onehot = onehot_rows({1, 3}, cfg.n_classes);
        auto forward = [&] {
            auto enc = model::encoder_forward(x, p, cfg, ad::Mode::train, drop_rng);
            auto clf = model::classifier_forward(enc.feature_map, p, cfg);
            auto recon =
                model::decoder_forward(enc.feature_map, enc.skip1, enc.skip2, p, cfg,
                                       ad::Mode::train);
            auto [total, bd] =
                model::combined_loss(clf.logits, onehot, recon, target, cfg.alpha,
                                     cfg.recon_loss);
            return total;
        };
        // floor 1e-5: biases feeding batch norms have exactly-zero gradients
        return ad::grad_check(forward, p.trainables(), 1e-5, 6, 64, 1e-5).max_rel_err;
    }));

    out.push_back(timed("EEGNet full network", kModelBound, [&] {
        auto p = bl::init_eegnet_params<double>(cfg, 71);
        Rng data_rng(72), drop_rng(73);
        auto x = random_tensor(data_rng, Shape{2, 1, cfg.channels, cfg.samples});
        auto onehot = onehot_rows({0, 2}, cfg.n_classes);
        auto forward = [&] {
            auto enc = model::encoder_forward(x, p.core, cfg, ad::Mode::train, drop_rng);
            auto clf = model::classifier_forward(enc.feature_map, p.core, cfg);
            return ad::softmax_cross_entropy(clf.logits, onehot);
        };
        // 1e-3 floor: the structurally-zero bias-into-batch-norm gradients
        // would otherwise read as pure finite-difference noise
        return ad::grad_check(forward, p.trainables(), 1e-5, 6, 64, 1e-3).max_rel_err;
    }));

    return out;
}

std::vector<CheckResult> run_adjoint_checks() {
    std::vector<CheckResult> out;
    out.push_back(timed("conv/transpose adjoint identity (20 specs)", kAdjointBound, [&] {
        Rng rng(909, 2);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            ConvSpec spec;
            spec.kh = 1 + static_cast<int>(rng.below(3));
            spec.kw = 1 + static_cast<int>(rng.below(4));
            spec.stride_h = 1 + static_cast<int>(rng.below(3));
            spec.stride_w = 1 + static_cast<int>(rng.below(3));
            spec.pad_top = static_cast<int>(rng.below(2));
            spec.pad_bottom = static_cast<int>(rng.below(2));
            spec.pad_left = static_cast<int>(rng.below(3));
            spec.pad_right = static_cast<int>(rng.below(3));
            spec.in_depth = 1 + static_cast<int>(rng.below(3));
            spec.out_depth = 1 + static_cast<int>(rng.below(3));

            // choose output sizes, then derive exact-division input sizes
            const int ho = 1 + static_cast<int>(rng.below(4));
            const int wo = 1 + static_cast<int>(rng.below(5));
            const int h = (ho - 1) * spec.stride_h + spec.kh - spec.pad_top - spec.pad_bottom;
            const int w = (wo - 1) * spec.stride_w + spec.kw - spec.pad_left - spec.pad_right;
            if (h < 1 || w < 1) {
                --trial;
                continue;
            }

            const int n = 1 + static_cast<int>(rng.below(2));
            auto x = random_tensor(rng, Shape{n, spec.in_depth, h, w});
            auto wt =
                random_tensor(rng, Shape{spec.out_depth, spec.in_depth, spec.kh, spec.kw});
            auto y = random_tensor(rng, Shape{n, spec.out_depth, ho, wo});

            auto cx = ad::conv2d(x, wt, Tensor<double>{}, spec);

            // the conv weight buffer doubles as the transpose-conv weight once
            // the depth roles swap
            ConvSpec tspec = spec;
            std::swap(tspec.in_depth, tspec.out_depth);
            auto wt2 = Tensor<double>::share(
                Shape{spec.out_depth, spec.in_depth, spec.kh, spec.kw}, wt.buffer());
            auto ty = ad::transpose_conv2d(y, wt2, tspec);

            double lhs = 0, rhs = 0;
            for (int64_t i = 0; i < cx.numel(); ++i)
                lhs += cx.data()[static_cast<size_t>(i)] * y.data()[static_cast<size_t>(i)];
            for (int64_t i = 0; i < x.numel(); ++i)
                rhs += x.data()[static_cast<size_t>(i)] * ty.data()[static_cast<size_t>(i)];
            const double denom = std::max({std::abs(lhs), std::abs(rhs), 1.0});
            worst = std::max(worst, std::abs(lhs - rhs) / denom);
        }
        return worst;
    }));
    return out;
}

std::vector<CheckResult> run_all() {
    std::vector<CheckResult> all = run_op_checks();
    for (auto& r : run_model_checks()) all.push_back(std::move(r));
    for (auto& r : run_adjoint_checks()) all.push_back(std::move(r));
    return all;
}

bool all_pass(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return !results.empty();
}

void print(const std::vector<CheckResult>& results, std::ostream& os) {
    size_t width = 0;
    for (const auto& r : results) width = std::max(width, r.name.size());
    for (const auto& r : results) {
        os << std::left << std::setw(static_cast<int>(width) + 2) << r.name << std::scientific
           << std::setprecision(3) << r.value << "  < " << r.threshold << "  "
           << (r.pass ? "PASS" : "FAIL") << "  (" << std::fixed << std::setprecision(2)
           << r.seconds << "s)\n";
    }
    os.flags(std::ios::fmtflags{});
}

} // namespace dal::gradsuite
