#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "data/image.hpp"

namespace ccd {

enum class AugFamily { weak, strong };
enum class StrongKind { rotation, permutation, cutout, gaussian_noise };

const char* strong_kind_name(StrongKind k);
StrongKind strong_kind_from_name(const std::string& s);

// One member of the strong set A_n. Parameters are frozen at enumeration
// time so the class labels stay well-posed across training and inference.
struct AugmentationDescriptor {
    AugFamily family = AugFamily::strong;
    StrongKind kind = StrongKind::rotation;
    int class_index = -1;

    int rotation_quarter_turns = 0;       // rotation
    int perm_grid = 4;                    // permutation
    std::vector<int> permutation;         // tile source index per destination tile
    float cutout_x = 0.f, cutout_y = 0.f; // cutout box, fractional coords
    float cutout_w = 0.f, cutout_h = 0.f;
    float cutout_fill = 0.f;
    float noise_sigma = 0.f;              // gaussian_noise

    nlohmann::json to_json() const;
    static AugmentationDescriptor from_json(const nlohmann::json& j);
    bool operator==(const AugmentationDescriptor&) const = default;
};

// SimCLR-style weak family; every stage can be switched off.
struct WeakAugConfig {
    float jitter_prob = 0.8f;
    float jitter_brightness = 0.4f;
    float jitter_contrast = 0.4f;
    float jitter_saturation = 0.4f;
    float jitter_hue = 0.1f;
    float grayscale_prob = 0.2f;
    float crop_prob = 1.0f;
    float crop_scale_min = 0.6f;
    float crop_scale_max = 1.0f;
    float blur_prob = 0.5f;
    float blur_sigma_min = 0.1f;
    float blur_sigma_max = 2.0f;

    static WeakAugConfig identity();
    nlohmann::json to_json() const;
    static WeakAugConfig from_json(const nlohmann::json& j);
};

struct PatchPair {
    Image patch_a;
    Image patch_b;
    int position_label = -1;  // row-major over the 3x3 grid, centre skipped
    int anchor_y = 0, anchor_x = 0;
};

Image apply_weak(const Image& img, const WeakAugConfig& cfg, uint64_t seed);
Image apply_strong(const Image& img, const AugmentationDescriptor& d, uint64_t seed);

// k distinct descriptors with class_index 0..k-1. perm_grid applies to the
// permutation kind only; pattern_seed freezes the sampled patterns.
std::vector<AugmentationDescriptor> enumerate_strong(StrongKind kind, int k, int perm_grid = 4,
                                                     uint64_t pattern_seed = 0x5452414e53ULL);

PatchPair sample_patch_pair(const Image& img, int patch_size, uint64_t seed);

Image crop_image(const Image& img, int y0, int x0, int h, int w);

// Neighbour offset (in patch units) for a position label.
void position_offset(int label, int& dy, int& dx);

}  // namespace ccd
