#pragma once

#include <stdexcept>
#include <vector>

#include "core/nn_image.hpp"
#include "data/image.hpp"

namespace ccd {

// Multi-scale SSIM configuration. Window and scale count adapt to the input
// size: the Wang et al. 5-scale/window-11 setup needs a minimum dimension of
// 11 * 2^4 = 176; smaller inputs drop scales (and below 44 pixels also the
// window shrinks to 7) so that every scale still fits the window.
struct MsSsimConfig {
    int n_scales = 5;
    std::vector<double> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    int window_size = 11;
    double window_sigma = 1.5;
    double data_range = 1.0;

    static MsSsimConfig for_size(int min_dim);
    void validate(int min_dim) const;  // throws on size/scale incompatibility
};

inline MsSsimConfig MsSsimConfig::for_size(int min_dim) {
    MsSsimConfig cfg;
    if (min_dim < 44) cfg.window_size = 7;
    int n = 0;
    int s = min_dim;
    while (n < 5 && s >= cfg.window_size) {
        ++n;
        s /= 2;
    }
    if (n < 1) throw std::invalid_argument("ms_ssim: input smaller than the window");
    cfg.n_scales = n;
    cfg.weights.resize(static_cast<size_t>(n));
    double sum = 0;
    for (double w : cfg.weights) sum += w;
    for (double& w : cfg.weights) w /= sum;
    return cfg;
}

inline void MsSsimConfig::validate(int min_dim) const {
    if (n_scales < 1 || static_cast<int>(weights.size()) != n_scales)
        throw std::invalid_argument("ms_ssim: weights must match n_scales");
    if (min_dim < window_size << (n_scales - 1))
        throw std::invalid_argument("ms_ssim: input too small for scale count");
}

namespace nn {

template <typename T>
std::vector<T> gaussian_window(int size, T sigma) {
    std::vector<T> k(static_cast<size_t>(size));
    const int r = size / 2;
    T sum = 0;
    for (int i = 0; i < size; ++i) {
        const T d = static_cast<T>(i - r);
        k[static_cast<size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (T& v : k) v /= sum;
    return k;
}

// Differentiable MS-SSIM over [N,C,H,W] batches, scalar output in (0,1].
// Wang et al. form: l_M^{w_M} * prod_j cs_j^{w_j} with Gaussian-window
// moments; cs terms are clamped at a small positive floor before the power.
template <typename T>
Var<T> ms_ssim(Var<T> x, Var<T> y, const MsSsimConfig& cfg) {
    if (!x.value().same_shape(y.value())) throw std::invalid_argument("ms_ssim: shape mismatch");
    const int min_dim = static_cast<int>(std::min(x.value().dim(2), x.value().dim(3)));
    cfg.validate(min_dim);

    const T c1 = static_cast<T>(0.01 * cfg.data_range) * static_cast<T>(0.01 * cfg.data_range);
    const T c2 = static_cast<T>(0.03 * cfg.data_range) * static_cast<T>(0.03 * cfg.data_range);
    const auto win = gaussian_window<T>(cfg.window_size, static_cast<T>(cfg.window_sigma));
    constexpr T kFloor = static_cast<T>(1e-8);

    Var<T> result;
    for (int s = 0; s < cfg.n_scales; ++s) {
        auto mu_x = separable_filter_valid(x, win);
        auto mu_y = separable_filter_valid(y, win);
        auto mu_xx = mul(mu_x, mu_x);
        auto mu_yy = mul(mu_y, mu_y);
        auto mu_xy = mul(mu_x, mu_y);
        auto sigma_x = sub(separable_filter_valid(mul(x, x), win), mu_xx);
        auto sigma_y = sub(separable_filter_valid(mul(y, y), win), mu_yy);
        auto sigma_xy = sub(separable_filter_valid(mul(x, y), win), mu_xy);

        auto cs_map = div(add_scalar(mul_scalar(sigma_xy, T(2)), c2),
                          add_scalar(add(sigma_x, sigma_y), c2));
        auto cs = clamp_min(mean_all(cs_map), kFloor);
        auto term = pow_scalar(cs, static_cast<T>(cfg.weights[static_cast<size_t>(s)]));

        if (s == cfg.n_scales - 1) {
            auto l_map = div(add_scalar(mul_scalar(mu_xy, T(2)), c1),
                             add_scalar(add(mu_xx, mu_yy), c1));
            auto lum = clamp_min(mean_all(l_map), kFloor);
            term = mul(term, pow_scalar(lum, static_cast<T>(cfg.weights[static_cast<size_t>(s)])));
        } else {
            x = avg_pool2(x);
            y = avg_pool2(y);
        }
        result = result.defined() ? mul(result, term) : term;
    }
    return result;
}

// Mean of ms_ssim over the non-overlapping patch grid; scales reduce to fit
// the patch size. patch_size must divide both spatial dimensions.
template <typename T>
Var<T> local_ms_ssim(const Var<T>& x, const Var<T>& y, int patch_size) {
    if (!x.value().same_shape(y.value()))
        throw std::invalid_argument("local_ms_ssim: shape mismatch");
    const int64_t H = x.value().dim(2), W = x.value().dim(3);
    if (H % patch_size || W % patch_size)
        throw std::invalid_argument("local_ms_ssim: patch size must divide image size");
    const MsSsimConfig cfg = MsSsimConfig::for_size(patch_size);

    Var<T> acc;
    int n = 0;
    for (int64_t py = 0; py < H; py += patch_size)
        for (int64_t px = 0; px < W; px += patch_size) {
            auto v = ms_ssim(slice_spatial(x, py, px, patch_size, patch_size),
                             slice_spatial(y, py, px, patch_size, patch_size), cfg);
            acc = acc.defined() ? add(acc, v) : v;
            ++n;
        }
    return mul_scalar(acc, T(1) / static_cast<T>(n));
}

// Eq-style reconstruction error: rho * MAE + (1-rho) * (1 - (nu*m_G + (1-nu)*m_L)).
template <typename T>
Var<T> reconstruction_loss(const Var<T>& x, const Var<T>& recon, T rho, T nu, int local_patch) {
    if (!x.value().same_shape(recon.value()))
        throw std::invalid_argument("reconstruction_loss: shape mismatch");
    Var<T> loss;
    if (rho > T(0)) loss = mul_scalar(mean_all(abs_(sub(x, recon))), rho);
    if (rho < T(1)) {
        const int min_dim = static_cast<int>(std::min(x.value().dim(2), x.value().dim(3)));
        Var<T> m;
        if (nu > T(0)) m = mul_scalar(ms_ssim(x, recon, MsSsimConfig::for_size(min_dim)), nu);
        if (nu < T(1)) {
            auto ml = mul_scalar(local_ms_ssim(x, recon, local_patch), T(1) - nu);
            m = m.defined() ? add(m, ml) : ml;
        }
        auto term = mul_scalar(add_scalar(neg(m), T(1)), T(1) - rho);
        loss = loss.defined() ? add(loss, term) : term;
    }
    return loss;
}

}  // namespace nn

// Non-differentiable conveniences over images (single sample).
double ms_ssim_value(const Image& x, const Image& y);
double ms_ssim_value(const Image& x, const Image& y, const MsSsimConfig& cfg);
double local_ms_ssim_value(const Image& x, const Image& y, int patch_size);

// Pack an interleaved HWC image into a [1,C,H,W] tensor (and back).
Tensor<float> image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor<float>& t, int64_t batch_index = 0);
template <typename T>
Tensor<T> image_to_tensor_t(const Image& img) {
    Tensor<T> t({1, img.c, img.h, img.w});
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                t[(static_cast<int64_t>(ch) * img.h + y) * img.w + x] =
                    static_cast<T>(img.at(y, x, ch));
    return t;
}

}  // namespace ccd
