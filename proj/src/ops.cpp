#include "dal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dal/kernels.hpp"

namespace dal::ad {

namespace {

// Kernel entry points with the degenerate cases routed to the cheaper kernel
// (a 1-tap unit-stride convolution is an axpy, a unit-stride strided dot is a
// plain dot).
template <class T>
inline void conv_row_k(const kern::Table<T>& k, int ny, const T* x, const T* kv, int kw,
                       int stride, T* y) {
    if (kw == 1 && stride == 1)
        k.axpy(ny, kv[0], x, y);
    else
        k.conv_row(ny, x, kv, kw, stride, y);
}

template <class T>
inline void stamp_row_k(const kern::Table<T>& k, int nx, const T* x, const T* kv, int kw,
                        int stride, T* y) {
    if (kw == 1 && stride == 1)
        k.axpy(nx, kv[0], x, y);
    else
        k.stamp_row(nx, x, kv, kw, stride, y);
}

template <class T>
inline T dot_stride_k(const kern::Table<T>& k, int n, const T* x, const T* y, int ystride) {
    return ystride == 1 ? k.dot(n, x, y) : k.dot_stride(n, x, y, ystride);
}

// Read-only view of one [h,w] channel plane with zero borders. Aliases the
// source when there is no padding.
template <class T>
struct PaddedPlane {
    const T* base = nullptr;
    std::vector<T> buf;
    int wp = 0;

    void load(const T* src, int h, int w, int pt, int pb, int pl, int pr) {
        wp = w + pl + pr;
        if (pt == 0 && pb == 0 && pl == 0 && pr == 0) {
            base = src;
            return;
        }
        const int hp = h + pt + pb;
        buf.assign(static_cast<size_t>(hp) * wp, T(0));
        for (int r = 0; r < h; ++r)
            std::copy(src + static_cast<size_t>(r) * w, src + static_cast<size_t>(r + 1) * w,
                      buf.data() + static_cast<size_t>(r + pt) * wp + pl);
        base = buf.data();
    }

    const T* row(int r) const { return base + static_cast<size_t>(r) * wp; }
};

// Writable padded accumulator for input gradients; its interior is added back
// into the unpadded gradient plane once all contributions are stamped.
template <class T>
struct PaddedScratch {
    std::vector<T> buf;
    int wp = 0;

    void reset(int h, int w, int pt, int pb, int pl, int pr) {
        wp = w + pl + pr;
        buf.assign(static_cast<size_t>(h + pt + pb) * wp, T(0));
    }

    T* row(int r) { return buf.data() + static_cast<size_t>(r) * wp; }

    void add_interior(const kern::Table<T>& k, int h, int w, int pt, int pl, T* dst) const {
        for (int r = 0; r < h; ++r)
            k.axpy(w, T(1), buf.data() + static_cast<size_t>(r + pt) * wp + pl,
                   dst + static_cast<size_t>(r) * w);
    }
};

template <class T>
int64_t plane_offset(int n, int c, int depth, int h, int w) {
    return (static_cast<int64_t>(n) * depth + c) * h * w;
}

std::string dim_msg(const char* op, const char* what, const Shape& got) {
    return std::string(op) + ": " + what + ", got " + got.str();
}

} // namespace

void ConvSpec::validate() const {
    check(kh >= 1 && kw >= 1, "conv spec: kernel dims must be >= 1");
    check(stride_h >= 1 && stride_w >= 1, "conv spec: strides must be >= 1");
    check(pad_top >= 0 && pad_bottom >= 0 && pad_left >= 0 && pad_right >= 0,
          "conv spec: padding must be >= 0");
    check(in_depth >= 1 && out_depth >= 1, "conv spec: depths must be >= 1");
    check(depth_multiplier >= 1, "conv spec: depth multiplier must be >= 1");
    check(output_crop_h >= 0 && output_crop_w >= 0, "conv spec: crop must be >= 0");
}

int ConvSpec::conv_out_h(int h) const {
    const int hp = h + pad_top + pad_bottom;
    check(hp >= kh, "conv spec: kernel height " + std::to_string(kh) +
                        " exceeds padded input height " + std::to_string(hp));
    check((hp - kh) % stride_h == 0, "conv spec: padded height " + std::to_string(hp) +
                                         " minus kernel " + std::to_string(kh) +
                                         " is not a multiple of stride " +
                                         std::to_string(stride_h));
    return (hp - kh) / stride_h + 1;
}

int ConvSpec::conv_out_w(int w) const {
    const int wp = w + pad_left + pad_right;
    check(wp >= kw, "conv spec: kernel width " + std::to_string(kw) +
                        " exceeds padded input width " + std::to_string(wp));
    check((wp - kw) % stride_w == 0, "conv spec: padded width " + std::to_string(wp) +
                                         " minus kernel " + std::to_string(kw) +
                                         " is not a multiple of stride " +
                                         std::to_string(stride_w));
    return (wp - kw) / stride_w + 1;
}

int ConvSpec::tconv_out_h(int h) const {
    const int full = tconv_full_h(h) - pad_top - pad_bottom;
    check(full >= 1, "transpose conv spec: padding removes the whole output height");
    if (output_crop_h == 0) return full;
    check(output_crop_h <= full, "transpose conv spec: height crop " +
                                     std::to_string(output_crop_h) + " exceeds produced height " +
                                     std::to_string(full));
    return output_crop_h;
}

int ConvSpec::tconv_out_w(int w) const {
    const int full = tconv_full_w(w) - pad_left - pad_right;
    check(full >= 1, "transpose conv spec: padding removes the whole output width");
    if (output_crop_w == 0) return full;
    check(output_crop_w <= full, "transpose conv spec: width crop " +
                                     std::to_string(output_crop_w) + " exceeds produced width " +
                                     std::to_string(full));
    return output_crop_w;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const ConvSpec& spec) {
    spec.validate();
    check(x.defined() && w.defined(), "conv2d: undefined operand");
    check(x.shape().ndim() == 4, dim_msg("conv2d", "input must be [N,C,H,W]", x.shape()));
    const int nb = x.shape()[0], ci = x.shape()[1], hi = x.shape()[2], wi = x.shape()[3];
    check(ci == spec.in_depth, "conv2d: input depth " + std::to_string(ci) +
                                   " does not match spec in_depth " +
                                   std::to_string(spec.in_depth));
    check(spec.depth_multiplier == 1, "conv2d: depth_multiplier applies to depthwise conv only");
    const int fo = spec.out_depth;
    check(w.shape() == Shape({fo, ci, spec.kh, spec.kw}),
          dim_msg("conv2d", "weights must be [out_depth,in_depth,kh,kw]", w.shape()));
    if (b.defined())
        check(b.shape() == Shape({fo}), dim_msg("conv2d", "bias must be [out_depth]", b.shape()));

    const int ho = spec.conv_out_h(hi), wo = spec.conv_out_w(wi);
    Tensor<T> out = Tensor<T>::zeros(Shape({nb, fo, ho, wo}));
    const auto& k = kern::active<T>();
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* op = out.ptr();

    PaddedPlane<T> pad;
    for (int n = 0; n < nb; ++n)
        for (int c = 0; c < ci; ++c) {
            pad.load(xp + plane_offset<T>(n, c, ci, hi, wi), hi, wi, spec.pad_top,
                     spec.pad_bottom, spec.pad_left, spec.pad_right);
            for (int f = 0; f < fo; ++f) {
                const T* kbase = wp + (static_cast<int64_t>(f) * ci + c) * spec.kh * spec.kw;
                T* oplane = op + plane_offset<T>(n, f, fo, ho, wo);
                for (int r = 0; r < ho; ++r)
                    for (int t = 0; t < spec.kh; ++t)
                        conv_row_k(k, wo, pad.row(r * spec.stride_h + t), kbase + t * spec.kw,
                                   spec.kw, spec.stride_w, oplane + static_cast<int64_t>(r) * wo);
            }
        }
    if (b.defined()) {
        const T* bp = b.ptr();
        for (int n = 0; n < nb; ++n)
            for (int f = 0; f < fo; ++f) {
                T* oplane = op + plane_offset<T>(n, f, fo, ho, wo);
                k.scale_shift(ho * wo, T(1), bp[f], oplane, oplane);
            }
    }

    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    auto xbuf = x.buffer();
    auto wbuf = w.buffer();
    ConvSpec sp = spec;
    attach_node(out, "conv2d", {xn, wn, bn},
                [=](const std::vector<T>& g) {
                    const auto& kk = kern::active<T>();
                    const T* gp = g.data();
                    if (bn) {
                        bn->ensure_grad();
                        for (int n = 0; n < nb; ++n)
                            for (int f = 0; f < fo; ++f)
                                bn->grad[static_cast<size_t>(f)] +=
                                    kk.sum(ho * wo, gp + plane_offset<T>(n, f, fo, ho, wo));
                    }
                    if (wn) {
                        wn->ensure_grad();
                        PaddedPlane<T> xpad;
                        for (int n = 0; n < nb; ++n)
                            for (int c = 0; c < ci; ++c) {
                                xpad.load(xbuf->data() + plane_offset<T>(n, c, ci, hi, wi), hi, wi,
                                          sp.pad_top, sp.pad_bottom, sp.pad_left, sp.pad_right);
                                for (int f = 0; f < fo; ++f) {
                                    const T* gplane = gp + plane_offset<T>(n, f, fo, ho, wo);
                                    T* dk = wn->grad.data() +
                                            (static_cast<int64_t>(f) * ci + c) * sp.kh * sp.kw;
                                    for (int t = 0; t < sp.kh; ++t)
                                        for (int u = 0; u < sp.kw; ++u) {
                                            T acc = 0;
                                            for (int r = 0; r < ho; ++r)
                                                acc += dot_stride_k(
                                                    kk, wo, gplane + static_cast<int64_t>(r) * wo,
                                                    xpad.row(r * sp.stride_h + t) + u,
                                                    sp.stride_w);
                                            dk[t * sp.kw + u] += acc;
                                        }
                                }
                            }
                    }
                    if (xn) {
                        xn->ensure_grad();
                        PaddedScratch<T> ps;
                        for (int n = 0; n < nb; ++n)
                            for (int c = 0; c < ci; ++c) {
                                ps.reset(hi, wi, sp.pad_top, sp.pad_bottom, sp.pad_left,
                                         sp.pad_right);
                                for (int f = 0; f < fo; ++f) {
                                    const T* gplane = gp + plane_offset<T>(n, f, fo, ho, wo);
                                    const T* kbase =
                                        wbuf->data() +
                                        (static_cast<int64_t>(f) * ci + c) * sp.kh * sp.kw;
                                    for (int r = 0; r < ho; ++r)
                                        for (int t = 0; t < sp.kh; ++t)
                                            stamp_row_k(kk, wo,
                                                        gplane + static_cast<int64_t>(r) * wo,
                                                        kbase + t * sp.kw, sp.kw, sp.stride_w,
                                                        ps.row(r * sp.stride_h + t));
                                }
                                ps.add_interior(kk, hi, wi, sp.pad_top, sp.pad_left,
                                                xn->grad.data() +
                                                    plane_offset<T>(n, c, ci, hi, wi));
                            }
                    }
                });
    return out;
}

template <class T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec) {
    spec.validate();
    check(x.defined() && w.defined(), "depthwise_conv2d: undefined operand");
    check(x.shape().ndim() == 4,
          dim_msg("depthwise_conv2d", "input must be [N,C,H,W]", x.shape()));
    const int nb = x.shape()[0], ci = x.shape()[1], hi = x.shape()[2], wi = x.shape()[3];
    check(ci == spec.in_depth, "depthwise_conv2d: input depth " + std::to_string(ci) +
                                   " does not match spec in_depth " +
                                   std::to_string(spec.in_depth));
    const int dm = spec.depth_multiplier;
    const int fo = ci * dm;
    check(spec.out_depth == fo, "depthwise_conv2d: out_depth must equal in_depth * "
                                "depth_multiplier, got " +
                                    std::to_string(spec.out_depth));
    check(w.shape() == Shape({fo, spec.kh, spec.kw}),
          dim_msg("depthwise_conv2d", "weights must be [in_depth*multiplier,kh,kw]", w.shape()));

    const int ho = spec.conv_out_h(hi), wo = spec.conv_out_w(wi);
    Tensor<T> out = Tensor<T>::zeros(Shape({nb, fo, ho, wo}));
    const auto& k = kern::active<T>();
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* op = out.ptr();

    PaddedPlane<T> pad;
    for (int n = 0; n < nb; ++n)
        for (int c = 0; c < ci; ++c) {
            pad.load(xp + plane_offset<T>(n, c, ci, hi, wi), hi, wi, spec.pad_top,
                     spec.pad_bottom, spec.pad_left, spec.pad_right);
            for (int m = 0; m < dm; ++m) {
                const int f = c * dm + m;
                const T* kbase = wp + static_cast<int64_t>(f) * spec.kh * spec.kw;
                T* oplane = op + plane_offset<T>(n, f, fo, ho, wo);
                for (int r = 0; r < ho; ++r)
                    for (int t = 0; t < spec.kh; ++t)
                        conv_row_k(k, wo, pad.row(r * spec.stride_h + t), kbase + t * spec.kw,
                                   spec.kw, spec.stride_w, oplane + static_cast<int64_t>(r) * wo);
            }
        }

    auto xn = x.node();
    auto wn = w.node();
    auto xbuf = x.buffer();
    auto wbuf = w.buffer();
    ConvSpec sp = spec;
    attach_node(out, "depthwise_conv2d", {xn, wn},
                [=](const std::vector<T>& g) {
                    const auto& kk = kern::active<T>();
                    const T* gp = g.data();
                    if (wn) {
                        wn->ensure_grad();
                        PaddedPlane<T> xpad;
                        for (int n = 0; n < nb; ++n)
                            for (int c = 0; c < ci; ++c) {
                                xpad.load(xbuf->data() + plane_offset<T>(n, c, ci, hi, wi), hi, wi,
                                          sp.pad_top, sp.pad_bottom, sp.pad_left, sp.pad_right);
                                for (int m = 0; m < sp.depth_multiplier; ++m) {
                                    const int f = c * sp.depth_multiplier + m;
                                    const T* gplane = gp + plane_offset<T>(n, f, fo, ho, wo);
                                    T* dk = wn->grad.data() +
                                            static_cast<int64_t>(f) * sp.kh * sp.kw;
                                    for (int t = 0; t < sp.kh; ++t)
                                        for (int u = 0; u < sp.kw; ++u) {
                                            T acc = 0;
                                            for (int r = 0; r < ho; ++r)
                                                acc += dot_stride_k(
                                                    kk, wo, gplane + static_cast<int64_t>(r) * wo,
                                                    xpad.row(r * sp.stride_h + t) + u,
                                                    sp.stride_w);
                                            dk[t * sp.kw + u] += acc;
                                        }
                                }
                            }
                    }
                    if (xn) {
                        xn->ensure_grad();
                        PaddedScratch<T> ps;
                        for (int n = 0; n < nb; ++n)
                            for (int c = 0; c < ci; ++c) {
                                ps.reset(hi, wi, sp.pad_top, sp.pad_bottom, sp.pad_left,
                                         sp.pad_right);
                                for (int m = 0; m < sp.depth_multiplier; ++m) {
                                    const int f = c * sp.depth_multiplier + m;
                                    const T* gplane = gp + plane_offset<T>(n, f, fo, ho, wo);
                                    const T* kbase =
                                        wbuf->data() + static_cast<int64_t>(f) * sp.kh * sp.kw;
                                    for (int r = 0; r < ho; ++r)
                                        for (int t = 0; t < sp.kh; ++t)
                                            stamp_row_k(kk, wo,
                                                        gplane + static_cast<int64_t>(r) * wo,
                                                        kbase + t * sp.kw, sp.kw, sp.stride_w,
                                                        ps.row(r * sp.stride_h + t));
                                }
                                ps.add_interior(kk, hi, wi, sp.pad_top, sp.pad_left,
                                                xn->grad.data() +
                                                    plane_offset<T>(n, c, ci, hi, wi));
                            }
                    }
                });
    return out;
}

template <class T>
Tensor<T> pointwise_conv2d(const Tensor<T>& x, const Tensor<T>& w) {
    check(x.defined() && w.defined(), "pointwise_conv2d: undefined operand");
    check(x.shape().ndim() == 4,
          dim_msg("pointwise_conv2d", "input must be [N,C,H,W]", x.shape()));
    check(w.shape().ndim() == 2,
          dim_msg("pointwise_conv2d", "weights must be [out_depth,in_depth]", w.shape()));
    const int nb = x.shape()[0], ci = x.shape()[1], hi = x.shape()[2], wi = x.shape()[3];
    const int fo = w.shape()[0];
    check(w.shape()[1] == ci, "pointwise_conv2d: weight in_depth " +
                                  std::to_string(w.shape()[1]) + " does not match input depth " +
                                  std::to_string(ci));

    const int hw = hi * wi;
    Tensor<T> out = Tensor<T>::zeros(Shape({nb, fo, hi, wi}));
    const auto& k = kern::active<T>();
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* op = out.ptr();

    for (int n = 0; n < nb; ++n)
        for (int f = 0; f < fo; ++f) {
            T* oplane = op + plane_offset<T>(n, f, fo, hi, wi);
            for (int c = 0; c < ci; ++c)
                k.axpy(hw, wp[static_cast<int64_t>(f) * ci + c],
                       xp + plane_offset<T>(n, c, ci, hi, wi), oplane);
        }

    auto xn = x.node();
    auto wn = w.node();
    auto xbuf = x.buffer();
    auto wbuf = w.buffer();
    attach_node(out, "pointwise_conv2d", {xn, wn},
                [=](const std::vector<T>& g) {
                    const auto& kk = kern::active<T>();
                    const T* gp = g.data();
                    if (wn) {
                        wn->ensure_grad();
                        for (int n = 0; n < nb; ++n)
                            for (int f = 0; f < fo; ++f) {
                                const T* gplane = gp + plane_offset<T>(n, f, fo, hi, wi);
                                for (int c = 0; c < ci; ++c)
                                    wn->grad[static_cast<size_t>(f) * ci + c] += kk.dot(
                                        hw, gplane, xbuf->data() + plane_offset<T>(n, c, ci, hi, wi));
                            }
                    }
                    if (xn) {
                        xn->ensure_grad();
                        for (int n = 0; n < nb; ++n)
                            for (int c = 0; c < ci; ++c) {
                                T* dplane = xn->grad.data() + plane_offset<T>(n, c, ci, hi, wi);
                                for (int f = 0; f < fo; ++f)
                                    kk.axpy(hw, wbuf->at(static_cast<size_t>(f) * ci + c),
                                            gp + plane_offset<T>(n, f, fo, hi, wi), dplane);
                            }
                    }
                });
    return out;
}

template <class T>
Tensor<T> transpose_conv2d(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec) {
    spec.validate();
    check(x.defined() && w.defined(), "transpose_conv2d: undefined operand");
    check(x.shape().ndim() == 4,
          dim_msg("transpose_conv2d", "input must be [N,C,H,W]", x.shape()));
    const int nb = x.shape()[0], ci = x.shape()[1], hi = x.shape()[2], wi = x.shape()[3];
    check(ci == spec.in_depth, "transpose_conv2d: input depth " + std::to_string(ci) +
                                   " does not match spec in_depth " +
                                   std::to_string(spec.in_depth));
    const int fo = spec.out_depth;
    check(w.shape() == Shape({ci, fo, spec.kh, spec.kw}),
          dim_msg("transpose_conv2d", "weights must be [in_depth,out_depth,kh,kw]", w.shape()));

    const int hf = spec.tconv_full_h(hi), wf = spec.tconv_full_w(wi);
    const int ho = spec.tconv_out_h(hi), wo = spec.tconv_out_w(wi);
    Tensor<T> out = Tensor<T>::zeros(Shape({nb, fo, ho, wo}));
    const auto& k = kern::active<T>();
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* op = out.ptr();

    std::vector<T> full(static_cast<size_t>(hf) * wf);
    for (int n = 0; n < nb; ++n)
        for (int f = 0; f < fo; ++f) {
            std::fill(full.begin(), full.end(), T(0));
            for (int c = 0; c < ci; ++c) {
                const T* xplane = xp + plane_offset<T>(n, c, ci, hi, wi);
                const T* kbase = wp + (static_cast<int64_t>(c) * fo + f) * spec.kh * spec.kw;
                for (int r = 0; r < hi; ++r)
                    for (int t = 0; t < spec.kh; ++t)
                        stamp_row_k(k, wi, xplane + static_cast<int64_t>(r) * wi,
                                    kbase + t * spec.kw, spec.kw, spec.stride_w,
                                    full.data() + static_cast<size_t>(r * spec.stride_h + t) * wf);
            }
            T* oplane = op + plane_offset<T>(n, f, fo, ho, wo);
            for (int r = 0; r < ho; ++r)
                std::copy_n(full.data() + static_cast<size_t>(r + spec.pad_top) * wf +
                                spec.pad_left,
                            wo, oplane + static_cast<int64_t>(r) * wo);
        }

    auto xn = x.node();
    auto wn = w.node();
    auto xbuf = x.buffer();
    auto wbuf = w.buffer();
    ConvSpec sp = spec;
    attach_node(out, "transpose_conv2d", {xn, wn},
                [=](const std::vector<T>& g) {
                    const auto& kk = kern::active<T>();
                    const T* gp = g.data();
                    std::vector<T> gfull(static_cast<size_t>(hf) * wf);
                    if (xn) xn->ensure_grad();
                    if (wn) wn->ensure_grad();
                    for (int n = 0; n < nb; ++n)
                        for (int f = 0; f < fo; ++f) {
                            // Re-embed the (cropped, pad-trimmed) gradient into
                            // the full stamped plane.
                            std::fill(gfull.begin(), gfull.end(), T(0));
                            const T* gplane = gp + plane_offset<T>(n, f, fo, ho, wo);
                            for (int r = 0; r < ho; ++r)
                                std::copy_n(gplane + static_cast<int64_t>(r) * wo, wo,
                                            gfull.data() +
                                                static_cast<size_t>(r + sp.pad_top) * wf +
                                                sp.pad_left);
                            for (int c = 0; c < ci; ++c) {
                                const int64_t koff =
                                    (static_cast<int64_t>(c) * fo + f) * sp.kh * sp.kw;
                                if (xn) {
                                    T* dplane = xn->grad.data() + plane_offset<T>(n, c, ci, hi, wi);
                                    for (int r = 0; r < hi; ++r)
                                        for (int t = 0; t < sp.kh; ++t)
                                            conv_row_k(kk, wi,
                                                       gfull.data() +
                                                           static_cast<size_t>(r * sp.stride_h +
                                                                               t) *
                                                               wf,
                                                       wbuf->data() + koff + t * sp.kw, sp.kw,
                                                       sp.stride_w,
                                                       dplane + static_cast<int64_t>(r) * wi);
                                }
                                if (wn) {
                                    const T* xplane =
                                        xbuf->data() + plane_offset<T>(n, c, ci, hi, wi);
                                    T* dk = wn->grad.data() + koff;
                                    for (int t = 0; t < sp.kh; ++t)
                                        for (int u = 0; u < sp.kw; ++u) {
                                            T acc = 0;
                                            for (int r = 0; r < hi; ++r)
                                                acc += dot_stride_k(
                                                    kk, wi, xplane + static_cast<int64_t>(r) * wi,
                                                    gfull.data() +
                                                        static_cast<size_t>(r * sp.stride_h + t) *
                                                            wf +
                                                        u,
                                                    sp.stride_w);
                                            dk[t * sp.kw + u] += acc;
                                        }
                                }
                            }
                        }
                });
    return out;
}

template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, T eps, T momentum,
                     Mode mode) {
    check(x.defined() && gamma.defined() && beta.defined(), "batch_norm: undefined operand");
    check(x.shape().ndim() == 4, dim_msg("batch_norm", "input must be [N,C,H,W]", x.shape()));
    const int nb = x.shape()[0], ci = x.shape()[1], hi = x.shape()[2], wi = x.shape()[3];
    check(nb >= 1, "batch_norm: empty batch");
    check(gamma.shape() == Shape({ci}), dim_msg("batch_norm", "gamma must be [C]", gamma.shape()));
    check(beta.shape() == Shape({ci}), dim_msg("batch_norm", "beta must be [C]", beta.shape()));
    check(running_mean.shape() == Shape({ci}) && running_var.shape() == Shape({ci}),
          "batch_norm: running stats must be [C]");
    check(eps >= T(0), "batch_norm: eps must be non-negative");

    const int hw = hi * wi;
    const int64_t nt = static_cast<int64_t>(nb) * hw;
    const auto& k = kern::active<T>();
    const T* xp = x.ptr();
    const T* gp = gamma.ptr();
    const T* bp = beta.ptr();

    std::vector<T> mean(static_cast<size_t>(ci)), inv(static_cast<size_t>(ci));
    if (mode == Mode::train) {
        for (int c = 0; c < ci; ++c) {
            T s = 0, s2 = 0;
            for (int n = 0; n < nb; ++n) {
                const T* plane = xp + plane_offset<T>(n, c, ci, hi, wi);
                s += k.sum(hw, plane);
                s2 += k.sumsq(hw, plane);
            }
            const T m = s / static_cast<T>(nt);
            T var = s2 / static_cast<T>(nt) - m * m;
            if (var < T(0)) var = T(0); // guard tiny negative round-off
            mean[static_cast<size_t>(c)] = m;
            inv[static_cast<size_t>(c)] = T(1) / std::sqrt(var + eps);
            // Running statistics use the unbiased variance.
            const T unbiased = nt > 1 ? var * static_cast<T>(nt) / static_cast<T>(nt - 1) : var;
            running_mean.ptr()[c] = (T(1) - momentum) * running_mean.ptr()[c] + momentum * m;
            running_var.ptr()[c] = (T(1) - momentum) * running_var.ptr()[c] + momentum * unbiased;
        }
    } else {
        for (int c = 0; c < ci; ++c) {
            mean[static_cast<size_t>(c)] = running_mean.ptr()[c];
            inv[static_cast<size_t>(c)] = T(1) / std::sqrt(running_var.ptr()[c] + eps);
        }
    }

    Tensor<T> out = Tensor<T>::zeros(x.shape());
    T* op = out.ptr();
    for (int n = 0; n < nb; ++n)
        for (int c = 0; c < ci; ++c) {
            const T a = gp[c] * inv[static_cast<size_t>(c)];
            const T sh = bp[c] - mean[static_cast<size_t>(c)] * a;
            k.scale_shift(hw, a, sh, xp + plane_offset<T>(n, c, ci, hi, wi),
                          op + plane_offset<T>(n, c, ci, hi, wi));
        }

    auto xn = x.node();
    auto gn = gamma.node();
    auto btn = beta.node();
    auto xbuf = x.buffer();
    auto gbuf = gamma.buffer();
    const bool train = mode == Mode::train;
    attach_node(out, "batch_norm", {xn, gn, btn},
                [=](const std::vector<T>& g) {
                    const auto& kk = kern::active<T>();
                    const T* dyp = g.data();
                    std::vector<T> xhat(static_cast<size_t>(hw));
                    for (int c = 0; c < ci; ++c) {
                        const T m = mean[static_cast<size_t>(c)];
                        const T iv = inv[static_cast<size_t>(c)];
                        T s1 = 0, s2 = 0;
                        for (int n = 0; n < nb; ++n) {
                            const T* dyplane = dyp + plane_offset<T>(n, c, ci, hi, wi);
                            s1 += kk.sum(hw, dyplane);
                            kk.scale_shift(hw, iv, -m * iv,
                                           xbuf->data() + plane_offset<T>(n, c, ci, hi, wi),
                                           xhat.data());
                            s2 += kk.dot(hw, dyplane, xhat.data());
                        }
                        if (gn) {
                            gn->ensure_grad();
                            gn->grad[static_cast<size_t>(c)] += s2;
                        }
                        if (btn) {
                            btn->ensure_grad();
                            btn->grad[static_cast<size_t>(c)] += s1;
                        }
                        if (xn) {
                            xn->ensure_grad();
                            const T ga = gbuf->at(static_cast<size_t>(c));
                            const T a = ga * iv;
                            // Eval mode treats the normalization statistics as
                            // constants, so only the affine term backpropagates.
                            const T cb = train ? -a * s2 / static_cast<T>(nt) : T(0);
                            const T cc = train ? -a * s1 / static_cast<T>(nt) : T(0);
                            for (int n = 0; n < nb; ++n) {
                                kk.scale_shift(hw, iv, -m * iv,
                                               xbuf->data() + plane_offset<T>(n, c, ci, hi, wi),
                                               xhat.data());
                                kk.bn_bwd(hw, dyp + plane_offset<T>(n, c, ci, hi, wi), xhat.data(),
                                          a, cb, cc,
                                          xn->grad.data() + plane_offset<T>(n, c, ci, hi, wi));
                            }
                        }
                    }
                });
    return out;
}

template <class T>
Tensor<T> elu(const Tensor<T>& x, T a) {
    check(x.defined(), "elu: undefined operand");
    check(a > T(0), "elu: alpha must be positive");
    const int64_t m = x.numel();
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xp = x.ptr();
    T* op = out.ptr();
    for (int64_t i = 0; i < m; ++i)
        op[i] = xp[i] > T(0) ? xp[i] : a * std::expm1(xp[i]);

    auto xn = x.node();
    auto obuf = out.buffer();
    attach_node(out, "elu", {xn},
                [=](const std::vector<T>& g) {
                    if (!xn) return;
                    xn->ensure_grad();
                    const T* yp = obuf->data();
                    for (int64_t i = 0; i < m; ++i)
                        xn->grad[static_cast<size_t>(i)] +=
                            g[static_cast<size_t>(i)] * (yp[i] > T(0) ? T(1) : yp[i] + a);
                });
    return out;
}

template <class T>
Tensor<T> avg_pool_w(const Tensor<T>& x, int pool_w, int stride_w) {
    check(x.defined(), "avg_pool_w: undefined operand");
    check(x.shape().ndim() == 4, dim_msg("avg_pool_w", "input must be [N,C,H,W]", x.shape()));
    check(pool_w >= 1 && stride_w >= 1, "avg_pool_w: window and stride must be >= 1");
    const int nb = x.shape()[0], ci = x.shape()[1], hi = x.shape()[2], wi = x.shape()[3];
    check(pool_w <= wi, "avg_pool_w: window " + std::to_string(pool_w) +
                            " exceeds input width " + std::to_string(wi));
    check((wi - pool_w) % stride_w == 0, "avg_pool_w: width " + std::to_string(wi) +
                                             " minus window " + std::to_string(pool_w) +
                                             " is not a multiple of stride " +
                                             std::to_string(stride_w));
    const int wo = (wi - pool_w) / stride_w + 1;

    Tensor<T> out = Tensor<T>::zeros(Shape({nb, ci, hi, wo}));
    const T* xp = x.ptr();
    T* op = out.ptr();
    const T invp = T(1) / static_cast<T>(pool_w);
    const int64_t rows = static_cast<int64_t>(nb) * ci * hi;
    for (int64_t r = 0; r < rows; ++r) {
        const T* src = xp + r * wi;
        T* dst = op + r * wo;
        for (int j = 0; j < wo; ++j) {
            T acc = 0;
            for (int t = 0; t < pool_w; ++t) acc += src[j * stride_w + t];
            dst[j] = acc * invp;
        }
    }

    auto xn = x.node();
    attach_node(out, "avg_pool_w", {xn},
                [=](const std::vector<T>& g) {
                    if (!xn) return;
                    xn->ensure_grad();
                    const T* gpr = g.data();
                    for (int64_t r = 0; r < rows; ++r) {
                        const T* grow = gpr + r * wo;
                        T* drow = xn->grad.data() + r * wi;
                        for (int j = 0; j < wo; ++j) {
                            const T share = grow[j] * invp;
                            for (int t = 0; t < pool_w; ++t) drow[j * stride_w + t] += share;
                        }
                    }
                });
    return out;
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng) {
    check(x.defined(), "dropout: undefined operand");
    check(p >= 0.0 && p < 1.0, "dropout: rate must be in [0,1), got " + std::to_string(p));
    if (mode == Mode::eval || p == 0.0) return x;

    const int64_t m = x.numel();
    const T keep_scale = T(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<T>>(static_cast<size_t>(m));
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xp = x.ptr();
    T* op = out.ptr();
    for (int64_t i = 0; i < m; ++i) {
        const T mv = rng.uniform() >= p ? keep_scale : T(0);
        (*mask)[static_cast<size_t>(i)] = mv;
        op[i] = xp[i] * mv;
    }

    auto xn = x.node();
    attach_node(out, "dropout", {xn},
                [=](const std::vector<T>& g) {
                    if (!xn) return;
                    xn->ensure_grad();
                    for (int64_t i = 0; i < m; ++i)
                        xn->grad[static_cast<size_t>(i)] +=
                            g[static_cast<size_t>(i)] * (*mask)[static_cast<size_t>(i)];
                });
    return out;
}

template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    check(x.defined() && w.defined(), "dense: undefined operand");
    check(x.shape().ndim() == 2, dim_msg("dense", "input must be [N,F]", x.shape()));
    check(w.shape().ndim() == 2, dim_msg("dense", "weights must be [F,K]", w.shape()));
    const int nb = x.shape()[0], fi = x.shape()[1], ko = w.shape()[1];
    check(w.shape()[0] == fi, "dense: weight rows " + std::to_string(w.shape()[0]) +
                                  " do not match input features " + std::to_string(fi));
    if (b.defined())
        check(b.shape() == Shape({ko}), dim_msg("dense", "bias must be [K]", b.shape()));

    Tensor<T> out = Tensor<T>::zeros(Shape({nb, ko}));
    const auto& k = kern::active<T>();
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* op = out.ptr();
    for (int n = 0; n < nb; ++n) {
        T* orow = op + static_cast<int64_t>(n) * ko;
        const T* xrow = xp + static_cast<int64_t>(n) * fi;
        for (int f = 0; f < fi; ++f)
            k.axpy(ko, xrow[f], wp + static_cast<int64_t>(f) * ko, orow);
        if (b.defined()) k.axpy(ko, T(1), b.ptr(), orow);
    }

    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    auto xbuf = x.buffer();
    auto wbuf = w.buffer();
    attach_node(out, "dense", {xn, wn, bn},
                [=](const std::vector<T>& g) {
                    const auto& kk = kern::active<T>();
                    const T* gp = g.data();
                    if (bn) {
                        bn->ensure_grad();
                        for (int n = 0; n < nb; ++n)
                            kk.axpy(ko, T(1), gp + static_cast<int64_t>(n) * ko, bn->grad.data());
                    }
                    if (wn) {
                        wn->ensure_grad();
                        for (int n = 0; n < nb; ++n) {
                            const T* xrow = xbuf->data() + static_cast<int64_t>(n) * fi;
                            const T* grow = gp + static_cast<int64_t>(n) * ko;
                            for (int f = 0; f < fi; ++f)
                                kk.axpy(ko, xrow[f], grow,
                                        wn->grad.data() + static_cast<int64_t>(f) * ko);
                        }
                    }
                    if (xn) {
                        xn->ensure_grad();
                        for (int n = 0; n < nb; ++n) {
                            const T* grow = gp + static_cast<int64_t>(n) * ko;
                            T* drow = xn->grad.data() + static_cast<int64_t>(n) * fi;
                            for (int f = 0; f < fi; ++f)
                                drow[f] += kk.dot(ko, grow, wbuf->data() +
                                                                static_cast<int64_t>(f) * ko);
                        }
                    }
                });
    return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape s) {
    check(x.defined(), "reshape: undefined operand");
    check(s.numel() == x.numel(), "reshape: cannot view " + x.shape().str() + " as " + s.str());
    Tensor<T> out = Tensor<T>::share(std::move(s), x.buffer());
    auto xn = x.node();
    attach_node(out, "reshape", {xn},
                [=](const std::vector<T>& g) {
                    if (!xn) return;
                    xn->ensure_grad();
                    kern::active<T>().axpy(static_cast<int>(g.size()), T(1), g.data(),
                                           xn->grad.data());
                });
    return out;
}

template <class T>
Tensor<T> flatten2(const Tensor<T>& x) {
    check(x.defined(), "flatten2: undefined operand");
    check(x.shape().ndim() >= 2, dim_msg("flatten2", "input must have a batch dim", x.shape()));
    const int nb = x.shape()[0];
    const int64_t rest = x.numel() / nb;
    return reshape(x, Shape({nb, static_cast<int>(rest)}));
}

template <class T>
Tensor<T> concat_depth(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.defined() && b.defined(), "concat_depth: undefined operand");
    check(a.shape().ndim() == 4 && b.shape().ndim() == 4,
          "concat_depth: inputs must be [N,C,H,W]");
    const int nb = a.shape()[0], ca = a.shape()[1], hi = a.shape()[2], wi = a.shape()[3];
    const int cb = b.shape()[1];
    check(b.shape()[0] == nb && b.shape()[2] == hi && b.shape()[3] == wi,
          "concat_depth: mismatched shapes " + a.shape().str() + " vs " + b.shape().str());

    const int64_t ablock = static_cast<int64_t>(ca) * hi * wi;
    const int64_t bblock = static_cast<int64_t>(cb) * hi * wi;
    Tensor<T> out = Tensor<T>::zeros(Shape({nb, ca + cb, hi, wi}));
    const T* ap = a.ptr();
    const T* bp = b.ptr();
    T* op = out.ptr();
    for (int n = 0; n < nb; ++n) {
        std::copy_n(ap + n * ablock, ablock, op + n * (ablock + bblock));
        std::copy_n(bp + n * bblock, bblock, op + n * (ablock + bblock) + ablock);
    }

    auto an = a.node();
    auto bn = b.node();
    attach_node(out, "concat_depth", {an, bn},
                [=](const std::vector<T>& g) {
                    const auto& kk = kern::active<T>();
                    for (int n = 0; n < nb; ++n) {
                        const T* grow = g.data() + n * (ablock + bblock);
                        if (an) {
                            an->ensure_grad();
                            kk.axpy(static_cast<int>(ablock), T(1), grow,
                                    an->grad.data() + n * ablock);
                        }
                        if (bn) {
                            bn->ensure_grad();
                            kk.axpy(static_cast<int>(bblock), T(1), grow + ablock,
                                    bn->grad.data() + n * bblock);
                        }
                    }
                });
    return out;
}

namespace {

// Stable row softmax into dst; returns nothing. dst may alias nothing.
template <class T>
void softmax_row(const T* src, int k, T* dst) {
    T mx = src[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, src[j]);
    T denom = 0;
    for (int j = 0; j < k; ++j) {
        dst[j] = std::exp(src[j] - mx);
        denom += dst[j];
    }
    const T inv = T(1) / denom;
    for (int j = 0; j < k; ++j) dst[j] *= inv;
}

} // namespace

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
    check(logits.defined(), "softmax_rows: undefined operand");
    check(logits.shape().ndim() == 2,
          dim_msg("softmax_rows", "input must be [N,K]", logits.shape()));
    const int nb = logits.shape()[0], ko = logits.shape()[1];
    Tensor<T> out = Tensor<T>::zeros(logits.shape());
    for (int n = 0; n < nb; ++n)
        softmax_row(logits.ptr() + static_cast<int64_t>(n) * ko, ko,
                    out.ptr() + static_cast<int64_t>(n) * ko);

    auto xn = logits.node();
    auto obuf = out.buffer();
    attach_node(out, "softmax_rows", {xn},
                [=](const std::vector<T>& g) {
                    if (!xn) return;
                    xn->ensure_grad();
                    for (int n = 0; n < nb; ++n) {
                        const T* p = obuf->data() + static_cast<int64_t>(n) * ko;
                        const T* grow = g.data() + static_cast<int64_t>(n) * ko;
                        T inner = 0;
                        for (int j = 0; j < ko; ++j) inner += grow[j] * p[j];
                        T* drow = xn->grad.data() + static_cast<int64_t>(n) * ko;
                        for (int j = 0; j < ko; ++j) drow[j] += p[j] * (grow[j] - inner);
                    }
                });
    return out;
}

template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& onehot) {
    check(logits.defined() && onehot.defined(), "softmax_cross_entropy: undefined operand");
    check(logits.shape().ndim() == 2,
          dim_msg("softmax_cross_entropy", "logits must be [N,K]", logits.shape()));
    check(onehot.shape() == logits.shape(),
          "softmax_cross_entropy: labels " + onehot.shape().str() + " do not match logits " +
              logits.shape().str());
    const int nb = logits.shape()[0], ko = logits.shape()[1];
    check(nb >= 1, "softmax_cross_entropy: empty batch");

    const T* yp = onehot.ptr();
    for (int n = 0; n < nb; ++n) {
        int ones = 0;
        for (int j = 0; j < ko; ++j) {
            const T v = yp[static_cast<int64_t>(n) * ko + j];
            check(v == T(0) || v == T(1),
                  "softmax_cross_entropy: labels must be exact one-hot rows");
            if (v == T(1)) ++ones;
        }
        check(ones == 1, "softmax_cross_entropy: each label row needs exactly one 1");
    }

    auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(nb) * ko);
    const T* xp = logits.ptr();
    T loss = 0;
    for (int n = 0; n < nb; ++n) {
        const T* row = xp + static_cast<int64_t>(n) * ko;
        T* prow = probs->data() + static_cast<int64_t>(n) * ko;
        // log-sum-exp for the loss itself; probs for the gradient
        T mx = row[0];
        for (int j = 1; j < ko; ++j) mx = std::max(mx, row[j]);
        T denom = 0;
        for (int j = 0; j < ko; ++j) denom += std::exp(row[j] - mx);
        const T lse = mx + std::log(denom);
        for (int j = 0; j < ko; ++j) {
            prow[j] = std::exp(row[j] - lse);
            if (yp[static_cast<int64_t>(n) * ko + j] == T(1)) loss += lse - row[j];
        }
    }
    loss /= static_cast<T>(nb);

    Tensor<T> out = Tensor<T>::scalar(loss);
    auto xn = logits.node();
    auto ybuf = onehot.buffer();
    attach_node(out, "softmax_cross_entropy", {xn},
                [=](const std::vector<T>& g) {
                    if (!xn) return;
                    xn->ensure_grad();
                    const T s = g[0] / static_cast<T>(nb);
                    const T* pp = probs->data();
                    const T* yy = ybuf->data();
                    for (int64_t i = 0; i < static_cast<int64_t>(nb) * ko; ++i)
                        xn->grad[static_cast<size_t>(i)] += s * (pp[i] - yy[i]);
                });
    return out;
}

template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    check(pred.defined() && target.defined(), "l1_loss: undefined operand");
    check(pred.shape() == target.shape(), "l1_loss: shapes differ, " + pred.shape().str() +
                                              " vs " + target.shape().str());
    const int64_t m = pred.numel();
    check(m > 0, "l1_loss: empty tensors");
    const auto& k = kern::active<T>();
    const T loss = k.abs_diff_sum(static_cast<int>(m), pred.ptr(), target.ptr()) /
                   static_cast<T>(m);

    Tensor<T> out = Tensor<T>::scalar(loss);
    auto pn = pred.node();
    auto tn = target.node();
    auto pbuf = pred.buffer();
    auto tbuf = target.buffer();
    attach_node(out, "l1_loss", {pn, tn},
                [=](const std::vector<T>& g) {
                    const T s = g[0] / static_cast<T>(m);
                    const T* pp = pbuf->data();
                    const T* tt = tbuf->data();
                    for (int64_t i = 0; i < m; ++i) {
                        const T d = pp[i] - tt[i];
                        const T sg = d > T(0) ? s : (d < T(0) ? -s : T(0));
                        if (pn) {
                            pn->ensure_grad();
                            pn->grad[static_cast<size_t>(i)] += sg;
                        }
                        if (tn) {
                            tn->ensure_grad();
                            tn->grad[static_cast<size_t>(i)] -= sg;
                        }
                    }
                });
    return out;
}

template <class T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    check(pred.defined() && target.defined(), "l2_loss: undefined operand");
    check(pred.shape() == target.shape(), "l2_loss: shapes differ, " + pred.shape().str() +
                                              " vs " + target.shape().str());
    const int64_t m = pred.numel();
    check(m > 0, "l2_loss: empty tensors");
    const auto& k = kern::active<T>();
    const T loss = k.sq_diff_sum(static_cast<int>(m), pred.ptr(), target.ptr()) /
                   static_cast<T>(m);

    Tensor<T> out = Tensor<T>::scalar(loss);
    auto pn = pred.node();
    auto tn = target.node();
    auto pbuf = pred.buffer();
    auto tbuf = target.buffer();
    attach_node(out, "l2_loss", {pn, tn},
                [=](const std::vector<T>& g) {
                    const T s = T(2) * g[0] / static_cast<T>(m);
                    const T* pp = pbuf->data();
                    const T* tt = tbuf->data();
                    for (int64_t i = 0; i < m; ++i) {
                        const T d = s * (pp[i] - tt[i]);
                        if (pn) {
                            pn->ensure_grad();
                            pn->grad[static_cast<size_t>(i)] += d;
                        }
                        if (tn) {
                            tn->ensure_grad();
                            tn->grad[static_cast<size_t>(i)] -= d;
                        }
                    }
                });
    return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return add_scaled(a, b, T(1), T(1));
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.defined() && b.defined(), "mul: undefined operand");
    check(a.shape() == b.shape(),
          "mul: shapes differ, " + a.shape().str() + " vs " + b.shape().str());
    const int64_t m = a.numel();
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* ap = a.ptr();
    const T* bp = b.ptr();
    T* op = out.ptr();
    for (int64_t i = 0; i < m; ++i) op[i] = ap[i] * bp[i];

    auto an = a.node();
    auto bn = b.node();
    auto abuf = a.buffer();
    auto bbuf = b.buffer();
    attach_node(out, "mul", {an, bn},
                [=](const std::vector<T>& g) {
                    for (int64_t i = 0; i < m; ++i) {
                        if (an) {
                            an->ensure_grad();
                            an->grad[static_cast<size_t>(i)] +=
                                g[static_cast<size_t>(i)] * bbuf->at(static_cast<size_t>(i));
                        }
                        if (bn) {
                            bn->ensure_grad();
                            bn->grad[static_cast<size_t>(i)] +=
                                g[static_cast<size_t>(i)] * abuf->at(static_cast<size_t>(i));
                        }
                    }
                });
    return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    check(x.defined(), "scale: undefined operand");
    const int64_t m = x.numel();
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    kern::active<T>().scale_shift(static_cast<int>(m), c, T(0), x.ptr(), out.ptr());

    auto xn = x.node();
    attach_node(out, "scale", {xn},
                [=](const std::vector<T>& g) {
                    if (!xn) return;
                    xn->ensure_grad();
                    kern::active<T>().axpy(static_cast<int>(m), c, g.data(), xn->grad.data());
                });
    return out;
}

template <class T>
Tensor<T> add_scaled(const Tensor<T>& a, const Tensor<T>& b, T ca, T cb) {
    check(a.defined() && b.defined(), "add_scaled: undefined operand");
    check(a.shape() == b.shape(),
          "add_scaled: shapes differ, " + a.shape().str() + " vs " + b.shape().str());
    const int64_t m = a.numel();
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& k = kern::active<T>();
    k.scale_shift(static_cast<int>(m), ca, T(0), a.ptr(), out.ptr());
    k.axpy(static_cast<int>(m), cb, b.ptr(), out.ptr());

    auto an = a.node();
    auto bn = b.node();
    attach_node(out, "add_scaled", {an, bn},
                [=](const std::vector<T>& g) {
                    const auto& kk = kern::active<T>();
                    if (an) {
                        an->ensure_grad();
                        kk.axpy(static_cast<int>(m), ca, g.data(), an->grad.data());
                    }
                    if (bn) {
                        bn->ensure_grad();
                        kk.axpy(static_cast<int>(m), cb, g.data(), bn->grad.data());
                    }
                });
    return out;
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
    check(x.defined(), "sum_all: undefined operand");
    const int64_t m = x.numel();
    Tensor<T> out = Tensor<T>::scalar(kern::active<T>().sum(static_cast<int>(m), x.ptr()));
    auto xn = x.node();
    attach_node(out, "sum_all", {xn},
                [=](const std::vector<T>& g) {
                    if (!xn) return;
                    xn->ensure_grad();
                    for (int64_t i = 0; i < m; ++i) xn->grad[static_cast<size_t>(i)] += g[0];
                });
    return out;
}

// The model trains in float and grad-checks in double; instantiate both.
#define DAL_INSTANTIATE_OPS(T)                                                                   \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                 const ConvSpec&);                                               \
    template Tensor<T> depthwise_conv2d<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&); \
    template Tensor<T> pointwise_conv2d<T>(const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> transpose_conv2d<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&); \
    template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                     Tensor<T>&, Tensor<T>&, T, T, Mode);                        \
    template Tensor<T> elu<T>(const Tensor<T>&, T);                                              \
    template Tensor<T> avg_pool_w<T>(const Tensor<T>&, int, int);                                \
    template Tensor<T> dropout<T>(const Tensor<T>&, double, Mode, Rng&);                         \
    template Tensor<T> dense<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                      \
    template Tensor<T> flatten2<T>(const Tensor<T>&);                                            \
    template Tensor<T> concat_depth<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                        \
    template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> l2_loss<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                            \
    template Tensor<T> add_scaled<T>(const Tensor<T>&, const Tensor<T>&, T, T);                  \
    template Tensor<T> sum_all<T>(const Tensor<T>&);

DAL_INSTANTIATE_OPS(float)
DAL_INSTANTIATE_OPS(double)

#undef DAL_INSTANTIATE_OPS

} // namespace dal::ad
