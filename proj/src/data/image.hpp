#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ccd {

// Planar would complicate augmentation code; pixels are interleaved H*W*C,
// float in [0,1]. C is 1 or 3.
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<float> pix;

    Image() = default;
    Image(int h_, int w_, int c_, float fill = 0.f)
        : h(h_), w(w_), c(c_), pix(static_cast<size_t>(h_) * w_ * c_, fill) {}

    float& at(int y, int x, int ch) { return pix[(static_cast<size_t>(y) * w + x) * c + ch]; }
    float at(int y, int x, int ch) const { return pix[(static_cast<size_t>(y) * w + x) * c + ch]; }
    size_t size() const { return pix.size(); }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }

    void clip01();
    bool finite_in_unit() const;
};

// Binary mask, values {0,1}.
struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> pix;

    Mask() = default;
    Mask(int h_, int w_, uint8_t fill = 0) : h(h_), w(w_), pix(static_cast<size_t>(h_) * w_, fill) {}
    uint8_t& at(int y, int x) { return pix[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return pix[static_cast<size_t>(y) * w + x]; }
    size_t count() const;
};

Image resize_bilinear(const Image& src, int out_h, int out_w);
Mask resize_nearest(const Mask& src, int out_h, int out_w);
// Separable Gaussian blur with reflect padding; ksize must be odd.
Image gaussian_blur(const Image& src, float sigma, int ksize);

Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);
// Mask PNGs hold {0,255}; read maps >=128 to 1.
Mask read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const Mask& mask);

}  // namespace ccd
