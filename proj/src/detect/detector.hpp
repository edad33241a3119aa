#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "data/dataset.hpp"
#include "detect/msssim.hpp"
#include "model/model.hpp"

namespace ccd {

enum class DetectorKind { msssim_ae, igd, fanogan };
enum class DetectorScale { global_256, local_32 };
enum class DetectorInit { pretrained, random };

const char* detector_kind_name(DetectorKind k);
DetectorKind detector_kind_from_name(const std::string& s);
const char* detector_scale_name(DetectorScale s);
DetectorScale detector_scale_from_name(const std::string& s);

struct DetectorConfig {
    DetectorKind kind = DetectorKind::msssim_ae;
    float xi = 0.5f;     // score mix
    float rho = 0.5f;    // MAE vs MS-SSIM mix in l_rec
    float nu = 0.5f;     // global vs local MS-SSIM mix
    float kappa = 1.0f;  // latent term weight
    DetectorScale scale = DetectorScale::global_256;
    int instance_size = 0;  // 0 = model input size (global) or 32 (local)
    int local_patch = 0;    // m_L tile; 0 = half the instance size
    int epochs = 100;
    float lr = 0.01f;
    float momentum = 0.9f;
    int batch_size = 16;
    bool freeze_encoder = false;
    DetectorInit init = DetectorInit::pretrained;
    uint64_t seed = 0;

    void validate() const;
    int resolved_instance_size(int model_input) const;
    int resolved_local_patch(int instance) const;
    nlohmann::json to_json() const;
    static DetectorConfig from_json(const nlohmann::json& j);
};

struct DetectorBundle {
    DetectorConfig config;
    ModelBundle model;
    bool trained = false;
};

// Pure score combiners (the closed forms behind the image scorers).
double msssim_score_from_terms(double m_g, double m_l, double nu);
double igd_score_from_terms(double l_rec, double h_psi, double xi);
double fanogan_score_from_terms(double pixel_norm, double latent_norm, double kappa);

// Per-image scores; image must match the detector's instance size.
double score_msssim_ae(const Image& x, const DetectorBundle& d);
double score_igd(const Image& x, const DetectorBundle& d);
double score_fanogan(const Image& x, const DetectorBundle& d);
double score_image(const Image& x, const DetectorBundle& d);  // dispatch on kind

// Whole-image score for any image size: global detectors resize to the
// instance size; local detectors take the max over sliding windows.
double score_sample(const Image& x, const DetectorBundle& d, int stride = 0);

DetectorBundle train_detector(const ModelBundle& pretrained, const std::vector<ImageSample>& train,
                              const DetectorConfig& cfg, std::ostream* log = nullptr);

void save_detector(const DetectorBundle& d, const std::string& path);
DetectorBundle load_detector(const std::string& path);

}  // namespace ccd
