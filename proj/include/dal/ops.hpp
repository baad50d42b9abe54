#pragma once

#include "dal/rng.hpp"
#include "dal/tensor.hpp"

namespace dal::ad {

enum class Mode { train, eval };

// Geometry of one (de)convolution. Output sizes are fully determined by the
// input shape plus this spec; inconsistent combinations throw.
struct ConvSpec {
    int kh = 1, kw = 1;
    int stride_h = 1, stride_w = 1;
    int pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
    int in_depth = 1, out_depth = 1;
    int depth_multiplier = 1;              // depthwise only
    int output_crop_h = 0, output_crop_w = 0; // transpose only; 0 keeps full size

    void validate() const;
    int conv_out_h(int h) const; // exact-division rule enforced
    int conv_out_w(int w) const;
    int tconv_full_h(int h) const { return (h - 1) * stride_h + kh; }
    int tconv_full_w(int w) const { return (w - 1) * stride_w + kw; }
    int tconv_out_h(int h) const;
    int tconv_out_w(int w) const;

    // Stride-1 same padding along W (TensorFlow split: extra on the right).
    ConvSpec& same_pad_w() {
        pad_left = (kw - 1) / 2;
        pad_right = kw - 1 - pad_left;
        return *this;
    }
};

// x:[N,Cin,H,W]  w:[Cout,Cin,kh,kw]  b:[Cout] (pass an undefined tensor for none)
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec);

// x:[N,C,H,W]  w:[C*Dm,kh,kw]; output channel c*Dm+m sees input channel c only
template <class T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec);

// x:[N,Cin,H,W]  w:[Cout,Cin]; 1x1 mixing across depth
template <class T>
Tensor<T> pointwise_conv2d(const Tensor<T>& x, const Tensor<T>& w);

// x:[N,Cin,H,W]  w:[Cin,Cout,kh,kw]; adjoint of conv2d with the same spec
template <class T>
Tensor<T> transpose_conv2d(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec);

// Statistics per depth channel over batch and spatial dims. running_mean/var
// are state tensors owned by the caller, updated in train mode.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, T eps, T momentum,
                     Mode mode);

template <class T>
Tensor<T> elu(const Tensor<T>& x, T a = T(1));

// Pooling along W only; window must tile the row exactly.
template <class T>
Tensor<T> avg_pool_w(const Tensor<T>& x, int pool_w, int stride_w);

// Inverted dropout: train mode zeroes with probability p and scales survivors
// by 1/(1-p); eval mode is the identity.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng);

// x:[N,F]  w:[F,K]  b:[K]
template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape s);

template <class T>
Tensor<T> flatten2(const Tensor<T>& x); // [N,...] -> [N,F]

template <class T>
Tensor<T> concat_depth(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits);

// Mean negative log-likelihood; gradient w.r.t. logits is (softmax-onehot)/N.
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& onehot);

template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <class T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c);

// ca*a + cb*b
template <class T>
Tensor<T> add_scaled(const Tensor<T>& a, const Tensor<T>& b, T ca, T cb);

template <class T>
Tensor<T> sum_all(const Tensor<T>& x);

} // namespace dal::ad
