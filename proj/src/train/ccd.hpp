#pragma once

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "data/dataset.hpp"
#include "model/model.hpp"

namespace ccd {

struct CCDTrainConfig {
    int batch_size = 32;
    float lr = 0.01f;
    int epochs = 50;
    float temperature = 0.2f;
    float w_con = 1.f;
    float w_cla = 1.f;
    float w_pos = 1.f;
    float momentum = 0.9f;
    bool cosine_decay = true;
    uint64_t seed = 0;
    bool strict_eq2 = false;  // per-anchor negatives, O(B^2) encoder passes
    bool deterministic = true;
    int patch_size = 0;  // 0 = derived from the encoder input size

    void validate() const;
    nlohmann::json to_json() const;
    static CCDTrainConfig from_json(const nlohmann::json& j);
};

struct LossBreakdown {
    double l_con = 0, l_cla = 0, l_pos = 0, total = 0;
};

struct CCDBatch {
    Tensor<float> anchors;    // [B,C,H,W] a(a_j(x))
    Tensor<float> positives;  // [B,C,H,W] a'(a_j(x))
    int strong_index = 0;     // shared j for the contrastive views
    Tensor<float> cla_views;  // [B,C,H,W] a_j_i(x), per-sample j_i
    std::vector<int> cla_labels;
    Tensor<float> patch_a;  // [B,C,p,p]
    Tensor<float> patch_b;
    std::vector<int> patch_labels;

    // strict Eq.-(2) mode: anchor i gets its own strong index and its own
    // copy of the other B-1 images under that index (O(B^2) views).
    std::vector<Tensor<float>> strict_anchors;    // each [1,C,H,W]
    std::vector<Tensor<float>> strict_positives;  // each [1,C,H,W]
    std::vector<Tensor<float>> strict_negatives;  // each [B-1,C,H,W]
};

int derive_patch_size(int input_size);

CCDBatch build_batch(const std::vector<const Image*>& images,
                     const std::vector<AugmentationDescriptor>& descriptors,
                     const WeakAugConfig& weak, int patch_size, uint64_t seed,
                     bool strict_eq2 = false);

// -mean_i log[ exp(s+_i/tau) / (exp(s+_i/tau) + sum_m exp(s-_im/tau)) ]
// with one shared negative set of M rows. All rows must be unit-norm.
template <typename T>
nn::Var<T> contrastive_distribution_loss(const nn::Var<T>& anchors, const nn::Var<T>& positives,
                                         const nn::Var<T>& negatives, T tau) {
    if (tau <= T(0)) throw std::invalid_argument("contrastive loss: tau must be positive");
    const auto& av = anchors.value();
    if (av.ndim() != 2 || positives.value().shape != av.shape)
        throw std::invalid_argument("contrastive loss: anchors/positives must be matching [N,d]");
    if (negatives.value().ndim() != 2 || negatives.value().dim(1) != av.dim(1) ||
        negatives.value().dim(0) < 1)
        throw std::invalid_argument("contrastive loss: need at least one [M,d] negative");
    for (const auto* v : {&av, &positives.value(), &negatives.value()})
        for (int64_t i = 0; i < v->dim(0); ++i) {
            T s = 0;
            for (int64_t j = 0; j < v->dim(1); ++j) s += (*v)[i * v->dim(1) + j] * (*v)[i * v->dim(1) + j];
            if (std::abs(std::sqrt(double(s)) - 1.0) > 1e-3)
                throw std::invalid_argument("contrastive loss: embeddings must be unit-norm");
        }
    auto s_pos = nn::rows_dot(anchors, positives);           // [N,1]
    auto s_neg = nn::matmul_nt(anchors, negatives);          // [N,M]
    auto sims = nn::concat_cols(s_pos, s_neg);               // [N,1+M]
    auto lse = nn::logsumexp_rows(nn::mul_scalar(sims, T(1) / tau));
    return nn::mean_all(nn::sub(lse, nn::mul_scalar(s_pos, T(1) / tau)));
}

// In-batch variant: anchor i's positive is row i, negatives are the other
// B-1 positive rows (same strong augmentation as the anchor by batch
// construction).
template <typename T>
nn::Var<T> in_batch_contrastive_loss(const nn::Var<T>& anchors, const nn::Var<T>& positives,
                                     T tau) {
    if (tau <= T(0)) throw std::invalid_argument("contrastive loss: tau must be positive");
    const auto& av = anchors.value();
    if (av.ndim() != 2 || positives.value().shape != av.shape || av.dim(0) < 2)
        throw std::invalid_argument("in-batch contrastive loss: need matching [B,d], B >= 2");
    auto s_pos = nn::rows_dot(anchors, positives);   // diag of the full matrix
    auto sims = nn::matmul_nt(anchors, positives);   // [B,B], includes the positive
    auto lse = nn::logsumexp_rows(nn::mul_scalar(sims, T(1) / tau));
    return nn::mean_all(nn::sub(lse, nn::mul_scalar(s_pos, T(1) / tau)));
}

template <typename T>
nn::Var<T> cross_entropy_from_probs(const nn::Var<T>& probs, const std::vector<int>& labels,
                                    int64_t arity, const char* what) {
    const auto& v = probs.value();
    if (v.ndim() != 2 || v.dim(1) != arity)
        throw std::invalid_argument(std::string(what) + ": expected [N," + std::to_string(arity) +
                                    "] probability rows");
    if (static_cast<int64_t>(labels.size()) != v.dim(0))
        throw std::invalid_argument(std::string(what) + ": label count mismatch");
    for (int64_t i = 0; i < v.dim(0); ++i) {
        if (labels[i] < 0 || labels[i] >= arity)
            throw std::invalid_argument(std::string(what) + ": label out of range");
        T s = 0;
        for (int64_t j = 0; j < arity; ++j) s += v[i * arity + j];
        if (std::abs(double(s) - 1.0) > 1e-3)
            throw std::invalid_argument(std::string(what) + ": rows must sum to 1");
    }
    return nn::nll_rows(nn::log_(nn::clamp_min(probs, T(1e-12))), labels);
}

template <typename T>
nn::Var<T> augmentation_classification_loss(const nn::Var<T>& probs,
                                            const std::vector<int>& labels) {
    return cross_entropy_from_probs(probs, labels, probs.value().dim(1), "l_cla");
}

template <typename T>
nn::Var<T> position_prediction_loss(const nn::Var<T>& probs, const std::vector<int>& labels) {
    return cross_entropy_from_probs(probs, labels, 8, "l_pos");
}

struct CCDLossGraph {
    nn::Var<float> l_con, l_cla, l_pos, total;
    LossBreakdown values() const;
};

CCDLossGraph ccd_loss_graph(const CCDBatch& batch, const ModelBundle& bundle,
                            const CCDTrainConfig& cfg);
LossBreakdown ccd_total_loss(const CCDBatch& batch, const ModelBundle& bundle,
                             const CCDTrainConfig& cfg);

// SGD with momentum over an explicit parameter subset.
struct Sgd {
    std::vector<Param*> params;
    std::vector<Tensor<float>> velocity;
    float momentum = 0.9f;

    explicit Sgd(std::vector<Param*> ps, float momentum_ = 0.9f);
    void step(float lr);
    void zero_grads();
};

ModelBundle pretrain(const std::vector<ImageSample>& train_set, const CCDTrainConfig& tcfg,
                     const EncoderConfig& ecfg,
                     const std::vector<AugmentationDescriptor>& descriptors,
                     const WeakAugConfig& weak, std::ostream* log = nullptr);

// Held-out pretext accuracies on fresh views (criteria for learnability).
double strong_aug_accuracy(const ModelBundle& bundle, const std::vector<ImageSample>& samples,
                           uint64_t seed);
double patch_position_accuracy(const ModelBundle& bundle, const std::vector<ImageSample>& samples,
                               int patch_size, uint64_t seed);

}  // namespace ccd
