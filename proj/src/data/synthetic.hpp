#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "data/dataset.hpp"

namespace ccd {

// Desk-scale procedural stand-in for the screening datasets: smooth oriented
// textures as normals, one injected high-contrast blob per abnormal image.
struct SyntheticConfig {
    int image_size = 64;
    int n_train = 200;
    int n_test_normal = 50;
    int n_test_abnormal = 50;
    std::pair<int, int> anomaly_size_range{8, 16};
    float anomaly_contrast = 0.8f;
    uint64_t texture_seed = 7;
    // Squares keep the mask area an exact function of the drawn size;
    // discs are available as a harder variant.
    bool allow_disc = false;

    void validate() const;  // throws std::invalid_argument
};

struct SyntheticDataset {
    std::vector<ImageSample> train;
    std::vector<ImageSample> test;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

// Base texture for sample (role, index) without any anomaly; abnormal test
// samples are this texture corrupted inside the mask only.
Image synthetic_texture(const SyntheticConfig& cfg, uint64_t role_tag, int index);

// Writes train/, test/, masks/ PNG trees plus manifest.json (5 round-robin
// groups over the abnormal test images). Returns the manifest path.
std::string export_synthetic(const SyntheticConfig& cfg, const std::string& out_dir);

}  // namespace ccd
