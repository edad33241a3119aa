#include "detect/msssim.hpp"

namespace ccd {

Tensor<float> image_to_tensor(const Image& img) { return image_to_tensor_t<float>(img); }

Image tensor_to_image(const Tensor<float>& t, int64_t batch_index) {
    const int64_t C = t.dim(1), H = t.dim(2), W = t.dim(3);
    Image img(static_cast<int>(H), static_cast<int>(W), static_cast<int>(C));
    const float* base = t.ptr() + batch_index * C * H * W;
    for (int64_t ch = 0; ch < C; ++ch)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                img.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(ch)) =
                    base[(ch * H + y) * W + x];
    return img;
}

double ms_ssim_value(const Image& x, const Image& y, const MsSsimConfig& cfg) {
    auto vx = nn::Var<double>::constant(image_to_tensor_t<double>(x));
    auto vy = nn::Var<double>::constant(image_to_tensor_t<double>(y));
    return nn::ms_ssim(vx, vy, cfg).item();
}

double ms_ssim_value(const Image& x, const Image& y) {
    return ms_ssim_value(x, y, MsSsimConfig::for_size(std::min(x.h, x.w)));
}

double local_ms_ssim_value(const Image& x, const Image& y, int patch_size) {
    auto vx = nn::Var<double>::constant(image_to_tensor_t<double>(x));
    auto vy = nn::Var<double>::constant(image_to_tensor_t<double>(y));
    return nn::local_ms_ssim(vx, vy, patch_size).item();
}

}  // namespace ccd
