#include "data/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include <png.h>

namespace ccd {

void Image::clip01() {
    for (float& v : pix) v = std::clamp(v, 0.f, 1.f);
}

bool Image::finite_in_unit() const {
    for (float v : pix)
        if (!std::isfinite(v) || v < 0.f || v > 1.f) return false;
    return true;
}

size_t Mask::count() const {
    size_t n = 0;
    for (uint8_t v : pix) n += v ? 1u : 0u;
    return n;
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
    if (src.h == out_h && src.w == out_w) return src;
    Image dst(out_h, out_w, src.c);
    const float sy = static_cast<float>(src.h) / out_h;
    const float sx = static_cast<float>(src.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const float fy = std::max(0.f, (y + 0.5f) * sy - 0.5f);
        const int y0 = std::min(static_cast<int>(fy), src.h - 1);
        const int y1 = std::min(y0 + 1, src.h - 1);
        const float wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const float fx = std::max(0.f, (x + 0.5f) * sx - 0.5f);
            const int x0 = std::min(static_cast<int>(fx), src.w - 1);
            const int x1 = std::min(x0 + 1, src.w - 1);
            const float wx = fx - x0;
            for (int ch = 0; ch < src.c; ++ch) {
                const float top = src.at(y0, x0, ch) * (1 - wx) + src.at(y0, x1, ch) * wx;
                const float bot = src.at(y1, x0, ch) * (1 - wx) + src.at(y1, x1, ch) * wx;
                dst.at(y, x, ch) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

Mask resize_nearest(const Mask& src, int out_h, int out_w) {
    if (src.h == out_h && src.w == out_w) return src;
    Mask dst(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        int sy = std::min(static_cast<int>((y + 0.5f) * src.h / out_h), src.h - 1);
        for (int x = 0; x < out_w; ++x) {
            int sx = std::min(static_cast<int>((x + 0.5f) * src.w / out_w), src.w - 1);
            dst.at(y, x) = src.at(sy, sx);
        }
    }
    return dst;
}

Image gaussian_blur(const Image& src, float sigma, int ksize) {
    if (ksize % 2 == 0 || ksize < 1) throw std::invalid_argument("gaussian_blur: ksize must be odd");
    if (sigma <= 0.f) return src;
    const int r = ksize / 2;
    std::vector<float> k(static_cast<size_t>(ksize));
    float sum = 0.f;
    for (int i = -r; i <= r; ++i) {
        const float v = std::exp(-0.5f * i * i / (sigma * sigma));
        k[static_cast<size_t>(i + r)] = v;
        sum += v;
    }
    for (float& v : k) v /= sum;
    auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return std::clamp(i, 0, n - 1);
    };
    Image tmp(src.h, src.w, src.c);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x)
            for (int ch = 0; ch < src.c; ++ch) {
                float s = 0.f;
                for (int i = -r; i <= r; ++i)
                    s += k[static_cast<size_t>(i + r)] * src.at(y, reflect(x + i, src.w), ch);
                tmp.at(y, x, ch) = s;
            }
    Image dst(src.h, src.w, src.c);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x)
            for (int ch = 0; ch < src.c; ++ch) {
                float s = 0.f;
                for (int i = -r; i <= r; ++i)
                    s += k[static_cast<size_t>(i + r)] * tmp.at(reflect(y + i, src.h), x, ch);
                dst.at(y, x, ch) = s;
            }
    return dst;
}

namespace {

struct FileCloser {
    void operator()(FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("png: " + what + ": " + path);
}

std::vector<uint8_t> read_png_bytes(const std::string& path, int& h, int& w, int& c) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail(path, "cannot open");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) fail(path, "init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "decode error");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    h = static_cast<int>(png_get_image_height(png, info));
    w = static_cast<int>(png_get_image_width(png, info));
    c = static_cast<int>(png_get_channels(png, info));
    std::vector<uint8_t> buf(static_cast<size_t>(h) * w * c);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = buf.data() + static_cast<size_t>(y) * w * c;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return buf;
}

void write_png_bytes(const std::string& path, const std::vector<uint8_t>& buf, int h, int w, int c) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail(path, "cannot open for write");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) fail(path, "init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "encode error");
    }
    png_init_io(png, fp.get());
    const int color = (c == 1) ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(buf.data() + static_cast<size_t>(y) * w * c);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png(const std::string& path) {
    int h, w, c;
    std::vector<uint8_t> buf = read_png_bytes(path, h, w, c);
    if (c != 1 && c != 3) fail(path, "unsupported channel count " + std::to_string(c));
    Image img(h, w, c);
    for (size_t i = 0; i < buf.size(); ++i) img.pix[i] = static_cast<float>(buf[i]) / 255.f;
    return img;
}

void write_png(const std::string& path, const Image& img) {
    std::vector<uint8_t> buf(img.size());
    for (size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<uint8_t>(std::lround(std::clamp(img.pix[i], 0.f, 1.f) * 255.f));
    write_png_bytes(path, buf, img.h, img.w, img.c);
}

Mask read_mask_png(const std::string& path) {
    int h, w, c;
    std::vector<uint8_t> buf = read_png_bytes(path, h, w, c);
    Mask m(h, w);
    for (size_t i = 0; i < m.pix.size(); ++i) m.pix[i] = buf[i * static_cast<size_t>(c)] >= 128 ? 1 : 0;
    return m;
}

void write_mask_png(const std::string& path, const Mask& mask) {
    std::vector<uint8_t> buf(mask.pix.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = mask.pix[i] ? 255 : 0;
    write_png_bytes(path, buf, mask.h, mask.w, 1);
}

}  // namespace ccd
