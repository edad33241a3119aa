#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "augment/augment.hpp"
#include "core/nn_image.hpp"

namespace ccd {

enum class Backbone { standard_resnet18, small_cnn };

struct EncoderConfig {
    Backbone backbone = Backbone::small_cnn;
    int embed_dim = 128;       // d_z
    int input_size = 64;
    int in_channels = 1;
    int projection_layers = 2;
    int base_channels = 32;    // small_cnn stage-0 width

    void validate() const;  // d_z >= 8; small_cnn mandatory for input_size <= 64
    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
    bool operator==(const EncoderConfig&) const = default;
};

using Param = nn::Var<float>;

// Named, ordered parameter store; order is the checkpoint layout.
struct ParamStore {
    std::vector<std::pair<std::string, Param>> items;

    Param& add(const std::string& name, Tensor<float> init);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool has(const std::string& name) const;
    void zero_grads();
    int64_t parameter_count() const;
    bool all_finite() const;
};

// Encoder f_theta (+ projection head), decoder g_phi, augmentation
// classifier f_beta, position classifier f_gamma, anomaly classifier h_psi.
struct ModelBundle {
    EncoderConfig config;
    std::vector<AugmentationDescriptor> aug_descriptors;
    ParamStore params;

    static ModelBundle create(const EncoderConfig& cfg,
                              std::vector<AugmentationDescriptor> descriptors, uint64_t seed);

    // Deep copy: fresh parameter leaves with copied values.
    ModelBundle clone() const;

    // All forwards consume/produce graph nodes; wrap inputs with
    // Var::constant for inference.
    nn::Var<float> encode(const nn::Var<float>& images) const;          // [N,dz], unit rows
    nn::Var<float> decode(const nn::Var<float>& embeddings) const;      // [N,C,S,S] in [0,1]
    nn::Var<float> aug_logits(const nn::Var<float>& embeddings) const;  // [N,|A_n|]
    nn::Var<float> position_logits(const nn::Var<float>& emb_a,
                                   const nn::Var<float>& emb_b) const;  // [N,8]
    nn::Var<float> normal_score(const nn::Var<float>& embeddings) const;  // [N,1] in [0,1]

    nn::Var<float> classify_augmentation(const nn::Var<float>& embeddings) const;  // simplex rows
    nn::Var<float> classify_position(const nn::Var<float>& emb_a,
                                     const nn::Var<float>& emb_b) const;

    Tensor<float> encode_images(const std::vector<const Image*>& images) const;  // eval helper

    // Parameters whose names start with `prefix`.
    std::vector<Param*> params_with_prefix(const std::string& prefix);
};

// Checkpoint: magic, u32 version, u64 JSON header length, JSON header
// (config, descriptors, array table, extra), raw little-endian float32
// arrays in table order.
void save_checkpoint(const ModelBundle& bundle, const std::string& path,
                     const nlohmann::json& extra = nlohmann::json::object());
ModelBundle load_checkpoint(const std::string& path, nlohmann::json* extra_out = nullptr);

Tensor<float> batch_to_tensor(const std::vector<const Image*>& images);

}  // namespace ccd
