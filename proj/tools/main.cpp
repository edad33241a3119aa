// Command-line front end; all heavy lifting goes through the C API.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccd/ccd_c.h"

using nlohmann::json;

namespace {

struct Overrides {
    std::string config_file;
    std::string output_dir, manifest;
    int64_t seed = -1;
    int image_size = -1;

    // augment
    std::string strong_family;
    int strong_k = -1;

    // synthetic data
    int n_train = -1, n_test_normal = -1, n_test_abnormal = -1;
    double anomaly_contrast = -1;

    // model
    int base_channels = -1, embed_dim = -1;
    std::string backbone;

    // ccd
    int epochs = -1, batch_size = -1;
    double lr = -1, temperature = -1;
    double w_con = -1, w_cla = -1, w_pos = -1;
    bool strict_eq2 = false;

    // detector
    std::string detector_kind, scale, init;
    int detector_epochs = -1, detector_batch = -1;
    double detector_lr = -1, xi = -1, rho = -1, nu = -1, kappa = -1;
    bool freeze_encoder = false;

    // localization
    std::string maps;
    int window = -1, stride = -1, min_area = -1;
    double quantile = -1;
};

void add_common_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_file, "config file (JSON)");
    cmd->add_option("--output-dir", o.output_dir, "artifact directory");
    cmd->add_option("--seed", o.seed, "global seed");
    cmd->add_option("--manifest", o.manifest, "dataset manifest path");
    cmd->add_option("--image-size", o.image_size, "model input size");
    cmd->add_option("--strong-family", o.strong_family,
                    "rotation | permutation | cutout | gaussian_noise");
    cmd->add_option("--strong-k", o.strong_k, "strong augmentation count");
    cmd->add_option("--n-train", o.n_train);
    cmd->add_option("--n-test-normal", o.n_test_normal);
    cmd->add_option("--n-test-abnormal", o.n_test_abnormal);
    cmd->add_option("--anomaly-contrast", o.anomaly_contrast);
    cmd->add_option("--backbone", o.backbone, "small_cnn | standard_resnet18");
    cmd->add_option("--base-channels", o.base_channels);
    cmd->add_option("--embed-dim", o.embed_dim);
    cmd->add_option("--epochs", o.epochs, "pretraining epochs");
    cmd->add_option("--batch-size", o.batch_size, "pretraining batch size");
    cmd->add_option("--lr", o.lr, "pretraining learning rate");
    cmd->add_option("--temperature", o.temperature, "contrastive temperature");
    cmd->add_option("--w-con", o.w_con);
    cmd->add_option("--w-cla", o.w_cla);
    cmd->add_option("--w-pos", o.w_pos);
    cmd->add_flag("--strict-eq2", o.strict_eq2, "per-anchor negatives");
    cmd->add_option("--detector", o.detector_kind, "msssim_ae | igd | fanogan");
    cmd->add_option("--scale", o.scale, "global | local");
    cmd->add_option("--init", o.init, "pretrained | random");
    cmd->add_option("--detector-epochs", o.detector_epochs);
    cmd->add_option("--detector-batch", o.detector_batch);
    cmd->add_option("--detector-lr", o.detector_lr);
    cmd->add_option("--xi", o.xi);
    cmd->add_option("--rho", o.rho);
    cmd->add_option("--nu", o.nu);
    cmd->add_option("--kappa", o.kappa);
    cmd->add_flag("--freeze-encoder", o.freeze_encoder);
    cmd->add_option("--maps", o.maps, "global | local | both");
    cmd->add_option("--window", o.window);
    cmd->add_option("--stride", o.stride);
    cmd->add_option("--min-area", o.min_area);
    cmd->add_option("--quantile", o.quantile);
}

void set_path(json& j, const std::vector<std::string>& path, json value) {
    json* cur = &j;
    for (size_t i = 0; i + 1 < path.size(); ++i) cur = &(*cur)[path[i]];
    (*cur)[path.back()] = std::move(value);
}

// File values first, flags win, environment wins only when nothing was set.
std::string build_config(const Overrides& o, int* err) {
    json j = json::object();
    if (!o.config_file.empty()) {
        std::ifstream f(o.config_file);
        if (!f) {
            std::cerr << "cannot open config file " << o.config_file << "\n";
            *err = CCD_ERR_DATA;
            return "";
        }
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            std::cerr << "config parse error: " << e.what() << "\n";
            *err = CCD_ERR_CONFIG;
            return "";
        }
    }
    if (!o.output_dir.empty()) j["output_dir"] = o.output_dir;
    if (!j.contains("output_dir")) {
        if (const char* root = std::getenv("CCD_OUTPUT_DIR")) j["output_dir"] = root;
    }
    if (o.seed >= 0) j["seed"] = o.seed;
    if (!o.manifest.empty()) set_path(j, {"data", "manifest"}, o.manifest);
    if (o.image_size > 0) {
        set_path(j, {"data", "image_size"}, o.image_size);
        set_path(j, {"model", "input_size"}, o.image_size);
        set_path(j, {"data", "synthetic", "image_size"}, o.image_size);
    }
    if (!o.strong_family.empty()) set_path(j, {"augment", "strong_family"}, o.strong_family);
    if (o.strong_k > 0) set_path(j, {"augment", "strong_k"}, o.strong_k);
    if (o.n_train >= 0) set_path(j, {"data", "synthetic", "n_train"}, o.n_train);
    if (o.n_test_normal >= 0) set_path(j, {"data", "synthetic", "n_test_normal"}, o.n_test_normal);
    if (o.n_test_abnormal >= 0)
        set_path(j, {"data", "synthetic", "n_test_abnormal"}, o.n_test_abnormal);
    if (o.anomaly_contrast >= 0)
        set_path(j, {"data", "synthetic", "anomaly_contrast"}, o.anomaly_contrast);
    if (!o.backbone.empty()) set_path(j, {"model", "backbone"}, o.backbone);
    if (o.base_channels > 0) set_path(j, {"model", "base_channels"}, o.base_channels);
    if (o.embed_dim > 0) set_path(j, {"model", "embed_dim"}, o.embed_dim);
    if (o.epochs >= 0) set_path(j, {"ccd", "epochs"}, o.epochs);
    if (o.batch_size > 0) set_path(j, {"ccd", "batch_size"}, o.batch_size);
    if (o.lr > 0) set_path(j, {"ccd", "lr"}, o.lr);
    if (o.temperature > 0) set_path(j, {"ccd", "temperature"}, o.temperature);
    if (o.w_con >= 0) set_path(j, {"ccd", "w_con"}, o.w_con);
    if (o.w_cla >= 0) set_path(j, {"ccd", "w_cla"}, o.w_cla);
    if (o.w_pos >= 0) set_path(j, {"ccd", "w_pos"}, o.w_pos);
    if (o.strict_eq2) set_path(j, {"ccd", "strict_eq2"}, true);
    if (!o.detector_kind.empty()) set_path(j, {"detector", "kind"}, o.detector_kind);
    if (!o.scale.empty()) set_path(j, {"detector", "scale"}, o.scale);
    if (!o.init.empty()) set_path(j, {"detector", "init"}, o.init);
    if (o.detector_epochs >= 0) set_path(j, {"detector", "epochs"}, o.detector_epochs);
    if (o.detector_batch > 0) set_path(j, {"detector", "batch_size"}, o.detector_batch);
    if (o.detector_lr > 0) set_path(j, {"detector", "lr"}, o.detector_lr);
    if (o.xi >= 0) set_path(j, {"detector", "xi"}, o.xi);
    if (o.rho >= 0) set_path(j, {"detector", "rho"}, o.rho);
    if (o.nu >= 0) set_path(j, {"detector", "nu"}, o.nu);
    if (o.kappa >= 0) set_path(j, {"detector", "kappa"}, o.kappa);
    if (o.freeze_encoder) set_path(j, {"detector", "freeze_encoder"}, true);
    if (!o.maps.empty()) set_path(j, {"localization", "maps"}, o.maps);
    if (o.window >= 0) set_path(j, {"localization", "window"}, o.window);
    if (o.stride >= 0) set_path(j, {"localization", "stride"}, o.stride);
    if (o.min_area >= 0) set_path(j, {"localization", "min_area"}, o.min_area);
    if (o.quantile >= 0) set_path(j, {"localization", "quantile"}, o.quantile);
    *err = 0;
    return j.dump();
}

int report(ccd_status st, const char* artifact) {
    if (st == CCD_OK) {
        std::cout << artifact << "\n";
        return 0;
    }
    std::cerr << "error: " << ccd_last_error() << "\n";
    return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised anomaly detection pipeline"};
    app.require_subcommand(1);

    Overrides o;
    std::string pretrained, detector_path, global_det, local_det, scores_path, heatmap_dir;
    std::string axis;
    std::vector<std::string> values;

    auto* synth = app.add_subcommand("synth-data", "generate the synthetic dataset");
    add_common_flags(synth, o);

    auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining");
    add_common_flags(pre, o);

    auto* det = app.add_subcommand("train-detector", "train a downstream detector");
    add_common_flags(det, o);
    det->add_option("--pretrained", pretrained, "pretraining checkpoint");

    auto* score = app.add_subcommand("score", "score the test split");
    add_common_flags(score, o);
    score->add_option("--detector-path", detector_path, "detector checkpoint")->required();

    auto* loc = app.add_subcommand("localize", "emit heatmaps and masks");
    add_common_flags(loc, o);
    loc->add_option("--global-detector", global_det, "global-scale detector checkpoint");
    loc->add_option("--local-detector", local_det, "local-scale detector checkpoint");

    auto* eval = app.add_subcommand("evaluate", "compute AUROC / grouped IoU");
    add_common_flags(eval, o);
    eval->add_option("--scores", scores_path, "scores file from `score`");
    eval->add_option("--heatmaps", heatmap_dir, "heatmap directory from `localize`");

    auto* sweep = app.add_subcommand("sweep", "one full pipeline run per axis value");
    add_common_flags(sweep, o);
    sweep->add_option("--axis", axis, "batch_size | strong_family | loss_terms")->required();
    sweep->add_option("--values", values, "axis values")->required();

    CLI11_PARSE(app, argc, argv);

    int cfg_err = 0;
    const std::string cfg = build_config(o, &cfg_err);
    if (cfg_err) return cfg_err;

    char out[4096];
    if (synth->parsed()) return report(ccd_cmd_synth_data(cfg.c_str(), out, sizeof out), out);
    if (pre->parsed()) return report(ccd_cmd_pretrain(cfg.c_str(), out, sizeof out), out);
    if (det->parsed())
        return report(ccd_cmd_train_detector(cfg.c_str(), pretrained.c_str(), out, sizeof out),
                      out);
    if (score->parsed())
        return report(ccd_cmd_score(cfg.c_str(), detector_path.c_str(), out, sizeof out), out);
    if (loc->parsed())
        return report(ccd_cmd_localize(cfg.c_str(), global_det.c_str(), local_det.c_str(), out,
                                       sizeof out),
                      out);
    if (eval->parsed())
        return report(
            ccd_cmd_evaluate(cfg.c_str(), scores_path.c_str(), heatmap_dir.c_str(), out,
                             sizeof out),
            out);
    if (sweep->parsed()) {
        const std::string vals = json(values).dump();
        return report(ccd_cmd_sweep(cfg.c_str(), axis.c_str(), vals.c_str(), out, sizeof out),
                      out);
    }
    return CCD_ERR_CONFIG;
}
