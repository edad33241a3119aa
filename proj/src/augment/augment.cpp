#include "augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "core/rng.hpp"

using nlohmann::json;

namespace ccd {

const char* strong_kind_name(StrongKind k) {
    switch (k) {
        case StrongKind::rotation: return "rotation";
        case StrongKind::permutation: return "permutation";
        case StrongKind::cutout: return "cutout";
        default: return "gaussian_noise";
    }
}

StrongKind strong_kind_from_name(const std::string& s) {
    if (s == "rotation") return StrongKind::rotation;
    if (s == "permutation") return StrongKind::permutation;
    if (s == "cutout") return StrongKind::cutout;
    if (s == "gaussian_noise" || s == "noise") return StrongKind::gaussian_noise;
    throw std::invalid_argument("unknown strong augmentation kind '" + s + "'");
}

json AugmentationDescriptor::to_json() const {
    json j;
    j["kind"] = strong_kind_name(kind);
    j["class_index"] = class_index;
    switch (kind) {
        case StrongKind::rotation: j["quarter_turns"] = rotation_quarter_turns; break;
        case StrongKind::permutation:
            j["grid"] = perm_grid;
            j["pattern"] = permutation;
            break;
        case StrongKind::cutout:
            j["box"] = {cutout_x, cutout_y, cutout_w, cutout_h};
            j["fill"] = cutout_fill;
            break;
        case StrongKind::gaussian_noise: j["sigma"] = noise_sigma; break;
    }
    return j;
}

AugmentationDescriptor AugmentationDescriptor::from_json(const json& j) {
    AugmentationDescriptor d;
    d.kind = strong_kind_from_name(j.at("kind").get<std::string>());
    d.class_index = j.at("class_index").get<int>();
    switch (d.kind) {
        case StrongKind::rotation: d.rotation_quarter_turns = j.at("quarter_turns").get<int>(); break;
        case StrongKind::permutation:
            d.perm_grid = j.at("grid").get<int>();
            d.permutation = j.at("pattern").get<std::vector<int>>();
            break;
        case StrongKind::cutout: {
            auto box = j.at("box");
            d.cutout_x = box[0].get<float>();
            d.cutout_y = box[1].get<float>();
            d.cutout_w = box[2].get<float>();
            d.cutout_h = box[3].get<float>();
            d.cutout_fill = j.at("fill").get<float>();
            break;
        }
        case StrongKind::gaussian_noise: d.noise_sigma = j.at("sigma").get<float>(); break;
    }
    return d;
}

WeakAugConfig WeakAugConfig::identity() {
    WeakAugConfig c;
    c.jitter_prob = c.grayscale_prob = c.crop_prob = c.blur_prob = 0.f;
    return c;
}

json WeakAugConfig::to_json() const {
    return json{{"jitter_prob", jitter_prob},
                {"jitter_brightness", jitter_brightness},
                {"jitter_contrast", jitter_contrast},
                {"jitter_saturation", jitter_saturation},
                {"jitter_hue", jitter_hue},
                {"grayscale_prob", grayscale_prob},
                {"crop_prob", crop_prob},
                {"crop_scale_min", crop_scale_min},
                {"crop_scale_max", crop_scale_max},
                {"blur_prob", blur_prob},
                {"blur_sigma_min", blur_sigma_min},
                {"blur_sigma_max", blur_sigma_max}};
}

WeakAugConfig WeakAugConfig::from_json(const json& j) {
    WeakAugConfig c;
    c.jitter_prob = j.value("jitter_prob", c.jitter_prob);
    c.jitter_brightness = j.value("jitter_brightness", c.jitter_brightness);
    c.jitter_contrast = j.value("jitter_contrast", c.jitter_contrast);
    c.jitter_saturation = j.value("jitter_saturation", c.jitter_saturation);
    c.jitter_hue = j.value("jitter_hue", c.jitter_hue);
    c.grayscale_prob = j.value("grayscale_prob", c.grayscale_prob);
    c.crop_prob = j.value("crop_prob", c.crop_prob);
    c.crop_scale_min = j.value("crop_scale_min", c.crop_scale_min);
    c.crop_scale_max = j.value("crop_scale_max", c.crop_scale_max);
    c.blur_prob = j.value("blur_prob", c.blur_prob);
    c.blur_sigma_min = j.value("blur_sigma_min", c.blur_sigma_min);
    c.blur_sigma_max = j.value("blur_sigma_max", c.blur_sigma_max);
    return c;
}

Image crop_image(const Image& img, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > img.h || x0 + w > img.w)
        throw std::invalid_argument("crop_image: region out of bounds");
    Image out(h, w, img.c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(y0 + y, x0 + x, ch);
    return out;
}

namespace {

float luma(const Image& img, int y, int x) {
    if (img.c == 1) return img.at(y, x, 0);
    return 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
}

void color_jitter(Image& img, const WeakAugConfig& cfg, Rng& rng) {
    const float b = static_cast<float>(rng.uniform(1.0 - cfg.jitter_brightness, 1.0 + cfg.jitter_brightness));
    const float c = static_cast<float>(rng.uniform(1.0 - cfg.jitter_contrast, 1.0 + cfg.jitter_contrast));
    const float s = static_cast<float>(rng.uniform(1.0 - cfg.jitter_saturation, 1.0 + cfg.jitter_saturation));
    const float hue = static_cast<float>(rng.uniform(-cfg.jitter_hue, cfg.jitter_hue)) * 2.f * static_cast<float>(M_PI);

    for (float& v : img.pix) v *= b;

    float mean = 0.f;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) mean += luma(img, y, x);
    mean /= static_cast<float>(img.h * img.w);
    for (float& v : img.pix) v = (v - mean) * c + mean;

    if (img.c == 3) {
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                const float g = luma(img, y, x);
                for (int ch = 0; ch < 3; ++ch)
                    img.at(y, x, ch) = g + (img.at(y, x, ch) - g) * s;
            }
        // Hue rotation in YIQ: rotate the chroma plane.
        const float ch_ = std::cos(hue), sh = std::sin(hue);
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                const float r = img.at(y, x, 0), g = img.at(y, x, 1), bl = img.at(y, x, 2);
                const float Y = 0.299f * r + 0.587f * g + 0.114f * bl;
                const float I = 0.596f * r - 0.274f * g - 0.322f * bl;
                const float Q = 0.211f * r - 0.523f * g + 0.312f * bl;
                const float I2 = I * ch_ - Q * sh;
                const float Q2 = I * sh + Q * ch_;
                img.at(y, x, 0) = Y + 0.956f * I2 + 0.621f * Q2;
                img.at(y, x, 1) = Y - 0.272f * I2 - 0.647f * Q2;
                img.at(y, x, 2) = Y - 1.106f * I2 + 1.703f * Q2;
            }
    }
}

}  // namespace

Image apply_weak(const Image& img, const WeakAugConfig& cfg, uint64_t seed) {
    Rng rng(seed_combine(seed, 0x7765616bULL));
    Image out = img;

    if (rng.bernoulli(cfg.jitter_prob)) color_jitter(out, cfg, rng);

    if (rng.bernoulli(cfg.grayscale_prob) && out.c == 3) {
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                const float g = luma(out, y, x);
                for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = g;
            }
    }

    if (rng.bernoulli(cfg.crop_prob)) {
        const double scale = rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
        const int side_h = std::max(1, static_cast<int>(std::lround(std::sqrt(scale) * out.h)));
        const int side_w = std::max(1, static_cast<int>(std::lround(std::sqrt(scale) * out.w)));
        const int y0 = static_cast<int>(rng.uniform_int(out.h - side_h + 1));
        const int x0 = static_cast<int>(rng.uniform_int(out.w - side_w + 1));
        out = resize_bilinear(crop_image(out, y0, x0, side_h, side_w), img.h, img.w);
    }

    if (rng.bernoulli(cfg.blur_prob)) {
        const float sigma = static_cast<float>(rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max));
        int k = std::max(3, img.h / 20);
        if (k % 2 == 0) ++k;
        out = gaussian_blur(out, sigma, k);
    }

    out.clip01();
    return out;
}

Image apply_strong(const Image& img, const AugmentationDescriptor& d, uint64_t seed) {
    if (d.family != AugFamily::strong)
        throw std::invalid_argument("apply_strong: descriptor is not a strong augmentation");
    Image out = img;
    switch (d.kind) {
        case StrongKind::rotation: {
            if (img.h != img.w) throw std::invalid_argument("rotation: image must be square");
            const int n = img.h, q = ((d.rotation_quarter_turns % 4) + 4) % 4;
            // One quarter turn CCW maps source (r,c) to (n-1-c, r).
            for (int t = 0; t < q; ++t) {
                Image rot(n, n, img.c);
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < n; ++c)
                        for (int ch = 0; ch < img.c; ++ch)
                            rot.at(n - 1 - c, r, ch) = out.at(r, c, ch);
                out = std::move(rot);
            }
            break;
        }
        case StrongKind::permutation: {
            const int g = d.perm_grid;
            if (static_cast<int>(d.permutation.size()) != g * g)
                throw std::invalid_argument("permutation: pattern size != grid^2");
            if (img.h % g || img.w % g)
                throw std::invalid_argument("permutation: image size not divisible by grid");
            const int th = img.h / g, tw = img.w / g;
            for (int t = 0; t < g * g; ++t) {
                const int src = d.permutation[static_cast<size_t>(t)];
                const int dy = (t / g) * th, dx = (t % g) * tw;
                const int sy = (src / g) * th, sx = (src % g) * tw;
                for (int y = 0; y < th; ++y)
                    for (int x = 0; x < tw; ++x)
                        for (int ch = 0; ch < img.c; ++ch)
                            out.at(dy + y, dx + x, ch) = img.at(sy + y, sx + x, ch);
            }
            break;
        }
        case StrongKind::cutout: {
            const int y0 = static_cast<int>(std::lround(d.cutout_y * img.h));
            const int x0 = static_cast<int>(std::lround(d.cutout_x * img.w));
            const int bh = static_cast<int>(std::lround(d.cutout_h * img.h));
            const int bw = static_cast<int>(std::lround(d.cutout_w * img.w));
            for (int y = y0; y < std::min(y0 + bh, img.h); ++y)
                for (int x = x0; x < std::min(x0 + bw, img.w); ++x)
                    for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = d.cutout_fill;
            break;
        }
        case StrongKind::gaussian_noise: {
            Rng rng(seed_combine(seed, 0x6e6f697365ULL, static_cast<uint64_t>(d.class_index)));
            for (float& v : out.pix) v += d.noise_sigma * static_cast<float>(rng.normal());
            break;
        }
    }
    out.clip01();
    return out;
}

std::vector<AugmentationDescriptor> enumerate_strong(StrongKind kind, int k, int perm_grid,
                                                     uint64_t pattern_seed) {
    if (k < 2) throw std::invalid_argument("enumerate_strong: k must be >= 2");
    std::vector<AugmentationDescriptor> out;
    switch (kind) {
        case StrongKind::rotation: {
            if (k > 4)
                throw std::invalid_argument("enumerate_strong: only 4 distinct right-angle rotations");
            // k=4 -> {0,90,180,270}; k=2 -> {0,180}.
            for (int i = 0; i < k; ++i) {
                AugmentationDescriptor d;
                d.kind = kind;
                d.class_index = i;
                d.rotation_quarter_turns = i * (4 / k);
                out.push_back(std::move(d));
            }
            break;
        }
        case StrongKind::permutation: {
            Rng rng(pattern_seed);
            std::set<std::vector<int>> seen;
            int guard = 0;
            while (static_cast<int>(out.size()) < k) {
                if (++guard > 10000)
                    throw std::invalid_argument("enumerate_strong: not enough distinct permutations");
                std::vector<int> p = rng.permutation(perm_grid * perm_grid);
                bool identity = true;
                for (size_t i = 0; i < p.size(); ++i) identity = identity && p[i] == static_cast<int>(i);
                if (identity || !seen.insert(p).second) continue;
                AugmentationDescriptor d;
                d.kind = kind;
                d.class_index = static_cast<int>(out.size());
                d.perm_grid = perm_grid;
                d.permutation = std::move(p);
                out.push_back(std::move(d));
            }
            break;
        }
        case StrongKind::cutout: {
            if (k > 4) throw std::invalid_argument("enumerate_strong: cutout supports k <= 4 quadrants");
            // Quarter-image squares anchored at the 4 quadrant centres.
            const float pos[4][2] = {{0.125f, 0.125f}, {0.625f, 0.125f}, {0.125f, 0.625f}, {0.625f, 0.625f}};
            for (int i = 0; i < k; ++i) {
                AugmentationDescriptor d;
                d.kind = kind;
                d.class_index = i;
                d.cutout_x = pos[i][0];
                d.cutout_y = pos[i][1];
                d.cutout_w = d.cutout_h = 0.25f;
                d.cutout_fill = 0.f;
                out.push_back(std::move(d));
            }
            break;
        }
        case StrongKind::gaussian_noise: {
            const std::vector<float> base{0.05f, 0.1f, 0.2f, 0.3f};
            for (int i = 0; i < k; ++i) {
                AugmentationDescriptor d;
                d.kind = kind;
                d.class_index = i;
                d.noise_sigma = (k <= 4) ? base[static_cast<size_t>(i)]
                                         : 0.05f + 0.25f * static_cast<float>(i) / (k - 1);
                out.push_back(std::move(d));
            }
            break;
        }
    }
    return out;
}

void position_offset(int label, int& dy, int& dx) {
    static const int off[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                  {0, 1},   {1, -1}, {1, 0},  {1, 1}};
    if (label < 0 || label >= 8) throw std::invalid_argument("position label out of range");
    dy = off[label][0];
    dx = off[label][1];
}

PatchPair sample_patch_pair(const Image& img, int patch_size, uint64_t seed) {
    if (3 * patch_size > std::min(img.h, img.w))
        throw std::invalid_argument("sample_patch_pair: image too small for a 3x3 neighbourhood");
    Rng rng(seed_combine(seed, 0x706f73ULL));
    // Anchor is the centre tile; the full 3x3 layout must fit.
    const int ay = patch_size + static_cast<int>(rng.uniform_int(img.h - 3 * patch_size + 1));
    const int ax = patch_size + static_cast<int>(rng.uniform_int(img.w - 3 * patch_size + 1));
    const int label = static_cast<int>(rng.uniform_int(8));
    int dy, dx;
    position_offset(label, dy, dx);
    PatchPair pp;
    pp.anchor_y = ay;
    pp.anchor_x = ax;
    pp.position_label = label;
    pp.patch_a = crop_image(img, ay, ax, patch_size, patch_size);
    pp.patch_b = crop_image(img, ay + dy * patch_size, ax + dx * patch_size, patch_size, patch_size);
    return pp;
}

}  // namespace ccd
