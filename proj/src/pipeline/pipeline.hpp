#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "data/synthetic.hpp"
#include "detect/detector.hpp"
#include "localize/localize.hpp"
#include "train/ccd.hpp"

namespace ccd {

// Error taxonomy for the process exit codes: 2 config, 3 data, 4 numeric.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LocalizationConfig {
    int window = 0;      // 0 -> the local detector's instance size
    int stride = 0;      // 0 -> 8 at >=256 px, else 4
    std::string maps = "both";  // global | local | both
    BinarizePolicy policy;
    int min_area = 0;    // 0 -> window^2 / 4

    int resolved_stride(int image_size) const;
    int resolved_min_area(int window_size) const;
    void validate() const;
    nlohmann::json to_json() const;
    static LocalizationConfig from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
    std::string manifest_path;  // empty -> synthetic data
    SyntheticConfig synth;
    int image_size = 64;

    std::string strong_family = "rotation";
    int strong_k = 4;
    int perm_grid = 4;
    WeakAugConfig weak;

    EncoderConfig model;
    CCDTrainConfig ccd;
    DetectorConfig detector;
    LocalizationConfig localization;

    std::string output_dir = "out";
    uint64_t seed = 0;

    void validate() const;
    std::vector<AugmentationDescriptor> strong_descriptors() const;
    nlohmann::json to_json() const;
    // Schema-validated; unknown keys are rejected.
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
};

namespace pipeline {

// Each command returns the path of its main artifact; errors surface as the
// typed exceptions above.
std::string cmd_synth_data(const ExperimentConfig& cfg);
std::string cmd_pretrain(const ExperimentConfig& cfg);
std::string cmd_train_detector(const ExperimentConfig& cfg, const std::string& pretrained_path);
std::string cmd_score(const ExperimentConfig& cfg, const std::string& detector_path);
std::string cmd_localize(const ExperimentConfig& cfg, const std::string& global_detector_path,
                         const std::string& local_detector_path);
EvalReport cmd_evaluate(const ExperimentConfig& cfg, const std::string& scores_path,
                        const std::string& heatmap_dir);
std::string cmd_evaluate_to_file(const ExperimentConfig& cfg, const std::string& scores_path,
                                 const std::string& heatmap_dir);
// axis in {batch_size, strong_family, loss_terms}; runs one full pipeline
// per value and writes a result table.
std::string cmd_sweep(const ExperimentConfig& cfg, const std::string& axis,
                      const std::vector<std::string>& values);

// Full pipeline convenience: pretrain (or skip for init=random), train the
// configured detector, score the test split, and return its AUROC.
double run_pipeline_auroc(const ExperimentConfig& cfg);

}  // namespace pipeline

}  // namespace ccd
