#include "pipeline/pipeline.hpp"
#include <map>
#include "core/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace ccd {

namespace {

[[noreturn]] void rethrow_typed() {
    try {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const DataError&) {
        throw;
    } catch (const NumericError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        if (msg.find("non-finite") != std::string::npos || msg.find("NaN") != std::string::npos)
            throw NumericError(msg);
        throw DataError(msg);
    }
}

void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                const std::string& section) {
    if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
}

std::vector<std::string> keys_of(const nlohmann::json& j) {
    std::vector<std::string> out;
    for (const auto& [key, _] : j.items()) out.push_back(key);
    return out;
}

std::string sanitized_id(const std::string& id) {
    std::string s = fs::path(id).stem().string();
    for (char& c : s)
        if (c == '/' || c == '\\') c = '_';
    return s;
}

}  // namespace

int LocalizationConfig::resolved_stride(int image_size) const {
    if (stride > 0) return stride;
    return image_size >= 256 ? 8 : 4;
}

int LocalizationConfig::resolved_min_area(int window_size) const {
    if (min_area > 0) return min_area;
    return window_size * window_size / 4;
}

void LocalizationConfig::validate() const {
    if (window < 0 || stride < 0 || min_area < 0)
        throw ConfigError("localization: window/stride/min_area must be >= 0");
    if (maps != "global" && maps != "local" && maps != "both")
        throw ConfigError("localization: maps must be global, local, or both");
    if (policy.kind == BinarizePolicy::Kind::quantile && (policy.q < 0.0 || policy.q >= 1.0))
        throw ConfigError("localization: quantile must lie in [0,1)");
}

nlohmann::json LocalizationConfig::to_json() const {
    return {{"window", window},
            {"stride", stride},
            {"maps", maps},
            {"binarize", policy.kind == BinarizePolicy::Kind::quantile ? "quantile" : "fixed"},
            {"quantile", policy.q},
            {"threshold", policy.threshold},
            {"min_area", min_area}};
}

LocalizationConfig LocalizationConfig::from_json(const nlohmann::json& j) {
    LocalizationConfig c;
    check_keys(j, keys_of(c.to_json()), "localization");
    c.window = j.value("window", c.window);
    c.stride = j.value("stride", c.stride);
    c.maps = j.value("maps", c.maps);
    if (j.contains("binarize"))
        c.policy.kind = j.at("binarize") == "fixed" ? BinarizePolicy::Kind::fixed
                                                    : BinarizePolicy::Kind::quantile;
    c.policy.q = j.value("quantile", c.policy.q);
    c.policy.threshold = j.value("threshold", c.policy.threshold);
    c.min_area = j.value("min_area", c.min_area);
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    try {
        if (image_size < 16 || image_size % 16 != 0)
            throw ConfigError("image_size must be a positive multiple of 16");
        strong_kind_from_name(strong_family);
        if (strong_k < 2) throw ConfigError("strong_k must be >= 2");
        model.validate();
        ccd.validate();
        detector.validate();
        localization.validate();
        if (manifest_path.empty()) synth.validate();
        if (model.input_size != image_size)
            throw ConfigError("model.input_size must equal image_size");
    } catch (...) {
        rethrow_typed();
    }
}

std::vector<AugmentationDescriptor> ExperimentConfig::strong_descriptors() const {
    return enumerate_strong(strong_kind_from_name(strong_family), strong_k, perm_grid);
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json data = {{"manifest", manifest_path},
                           {"image_size", image_size},
                           {"synthetic",
                            {{"image_size", synth.image_size},
                             {"n_train", synth.n_train},
                             {"n_test_normal", synth.n_test_normal},
                             {"n_test_abnormal", synth.n_test_abnormal},
                             {"anomaly_min", synth.anomaly_size_range.first},
                             {"anomaly_max", synth.anomaly_size_range.second},
                             {"anomaly_contrast", synth.anomaly_contrast},
                             {"texture_seed", synth.texture_seed},
                             {"allow_disc", synth.allow_disc}}}};
    nlohmann::json augment = {{"strong_family", strong_family},
                              {"strong_k", strong_k},
                              {"perm_grid", perm_grid},
                              {"weak", weak.to_json()}};
    return {{"data", data},
            {"augment", augment},
            {"model", model.to_json()},
            {"ccd", ccd.to_json()},
            {"detector", detector.to_json()},
            {"localization", localization.to_json()},
            {"output_dir", output_dir},
            {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    try {
        ExperimentConfig c;
        check_keys(j, keys_of(c.to_json()), "experiment");
        if (j.contains("data")) {
            const auto& d = j.at("data");
            check_keys(d, {"manifest", "image_size", "synthetic"}, "data");
            c.manifest_path = d.value("manifest", c.manifest_path);
            c.image_size = d.value("image_size", c.image_size);
            if (d.contains("synthetic")) {
                const auto& s = d.at("synthetic");
                check_keys(s,
                           {"image_size", "n_train", "n_test_normal", "n_test_abnormal",
                            "anomaly_min", "anomaly_max", "anomaly_contrast", "texture_seed",
                            "allow_disc"},
                           "data.synthetic");
                c.synth.image_size = s.value("image_size", c.synth.image_size);
                c.synth.n_train = s.value("n_train", c.synth.n_train);
                c.synth.n_test_normal = s.value("n_test_normal", c.synth.n_test_normal);
                c.synth.n_test_abnormal = s.value("n_test_abnormal", c.synth.n_test_abnormal);
                c.synth.anomaly_size_range.first =
                    s.value("anomaly_min", c.synth.anomaly_size_range.first);
                c.synth.anomaly_size_range.second =
                    s.value("anomaly_max", c.synth.anomaly_size_range.second);
                c.synth.anomaly_contrast = s.value("anomaly_contrast", c.synth.anomaly_contrast);
                c.synth.texture_seed = s.value("texture_seed", c.synth.texture_seed);
                c.synth.allow_disc = s.value("allow_disc", c.synth.allow_disc);
            }
        }
        if (j.contains("augment")) {
            const auto& a = j.at("augment");
            check_keys(a, {"strong_family", "strong_k", "perm_grid", "weak"}, "augment");
            c.strong_family = a.value("strong_family", c.strong_family);
            c.strong_k = a.value("strong_k", c.strong_k);
            c.perm_grid = a.value("perm_grid", c.perm_grid);
            if (a.contains("weak")) c.weak = WeakAugConfig::from_json(a.at("weak"));
        }
        if (j.contains("model")) {
            check_keys(j.at("model"), keys_of(c.model.to_json()), "model");
            c.model = EncoderConfig::from_json(j.at("model"));
        }
        if (j.contains("ccd")) {
            check_keys(j.at("ccd"), keys_of(c.ccd.to_json()), "ccd");
            c.ccd = CCDTrainConfig::from_json(j.at("ccd"));
        }
        if (j.contains("detector")) {
            check_keys(j.at("detector"), keys_of(c.detector.to_json()), "detector");
            c.detector = DetectorConfig::from_json(j.at("detector"));
        }
        if (j.contains("localization")) c.localization = LocalizationConfig::from_json(j.at("localization"));
        c.output_dir = j.value("output_dir", c.output_dir);
        c.seed = j.value("seed", c.seed);
        if (!j.contains("model")) c.model.input_size = c.image_size;
        c.validate();
        return c;
    } catch (...) {
        rethrow_typed();
    }
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

namespace pipeline {

namespace {

DatasetManifest ensure_dataset(const ExperimentConfig& cfg) {
    try {
        if (!cfg.manifest_path.empty()) return load_manifest(cfg.manifest_path);
        const std::string dir = (fs::path(cfg.output_dir) / "data").string();
        const std::string manifest = (fs::path(dir) / "manifest.json").string();
        if (!fs::exists(manifest)) export_synthetic(cfg.synth, dir);
        return load_manifest(manifest);
    } catch (...) {
        rethrow_typed();
    }
}

std::vector<ImageSample> test_split(const ExperimentConfig& cfg, const DatasetManifest& m) {
    auto samples = load_split(m, Split::test, cfg.image_size);
    if (samples.empty()) throw DataError("test split is empty");
    return samples;
}

DetectorConfig detector_config_for(const ExperimentConfig& cfg, DetectorScale scale) {
    DetectorConfig dc = cfg.detector;
    dc.scale = scale;
    if (dc.seed == 0) dc.seed = cfg.seed;
    return dc;
}

}  // namespace

std::string cmd_synth_data(const ExperimentConfig& cfg) {
    try {
        cfg.synth.validate();
        const std::string dir = (fs::path(cfg.output_dir) / "data").string();
        return export_synthetic(cfg.synth, dir);
    } catch (...) {
        rethrow_typed();
    }
}

std::string cmd_pretrain(const ExperimentConfig& cfg) {
    try {
        cfg.validate();
        DatasetManifest m = ensure_dataset(cfg);
        auto train = load_split(m, Split::train, cfg.image_size);
        if (train.empty()) throw DataError("train split is empty");

        CCDTrainConfig tc = cfg.ccd;
        if (tc.seed == 0) tc.seed = cfg.seed;
        fs::create_directories(cfg.output_dir);
        std::ofstream log((fs::path(cfg.output_dir) / "pretrain_log.txt").string());
        ModelBundle bundle = pretrain(train, tc, cfg.model, cfg.strong_descriptors(), cfg.weak, &log);

        const std::string path = (fs::path(cfg.output_dir) / "pretrained.ckpt").string();
        save_checkpoint(bundle, path, {{"experiment", cfg.to_json()}});
        return path;
    } catch (...) {
        rethrow_typed();
    }
}

std::string cmd_train_detector(const ExperimentConfig& cfg, const std::string& pretrained_path) {
    try {
        cfg.validate();
        DatasetManifest m = ensure_dataset(cfg);
        auto train = load_split(m, Split::train, cfg.image_size);
        if (train.empty()) throw DataError("train split is empty");

        ModelBundle base;
        if (cfg.detector.init == DetectorInit::random) {
            base = ModelBundle::create(cfg.model, cfg.strong_descriptors(),
                                       seed_combine(cfg.seed, 0x72696e69ULL));
        } else {
            if (pretrained_path.empty()) throw ConfigError("missing pretrained checkpoint path");
            base = load_checkpoint(pretrained_path);
            if (base.config.embed_dim != cfg.model.embed_dim)
                throw ConfigError("checkpoint embed_dim does not match the config");
        }

        DetectorConfig dc = detector_config_for(cfg, cfg.detector.scale);
        fs::create_directories(cfg.output_dir);
        std::ofstream log((fs::path(cfg.output_dir) / "detector_log.txt").string());
        DetectorBundle det = train_detector(base, train, dc, &log);

        const std::string path =
            (fs::path(cfg.output_dir) /
             ("detector_" + std::string(detector_kind_name(dc.kind)) + "_" +
              detector_scale_name(dc.scale) + ".ckpt"))
                .string();
        save_detector(det, path);
        return path;
    } catch (...) {
        rethrow_typed();
    }
}

std::string cmd_score(const ExperimentConfig& cfg, const std::string& detector_path) {
    try {
        DetectorBundle det = load_detector(detector_path);
        DatasetManifest m = ensure_dataset(cfg);
        auto samples = test_split(cfg, m);

        fs::create_directories(cfg.output_dir);
        const std::string path = (fs::path(cfg.output_dir) / "scores.txt").string();
        std::ofstream f(path);
        if (!f) throw DataError("cannot write " + path);
        f.precision(10);
        for (const auto& s : samples) f << s.id << "\t" << score_sample(s.pixels, det) << "\n";
        return path;
    } catch (...) {
        rethrow_typed();
    }
}

std::string cmd_localize(const ExperimentConfig& cfg, const std::string& global_detector_path,
                         const std::string& local_detector_path) {
    try {
        cfg.localization.validate();
        const std::string& mode = cfg.localization.maps;
        DetectorBundle global_det, local_det;
        if (mode != "local") global_det = load_detector(global_detector_path);
        if (mode != "global") {
            if (local_detector_path.empty())
                throw ConfigError("localization maps=" + mode + " needs a local detector");
            local_det = load_detector(local_detector_path);
            if (local_det.config.scale != DetectorScale::local_32)
                throw ConfigError("local heatmaps need a local-scale detector");
        }

        DatasetManifest m = ensure_dataset(cfg);
        auto samples = test_split(cfg, m);

        const std::string dir = (fs::path(cfg.output_dir) / "heatmaps").string();
        fs::create_directories(dir);

        const int inst = mode == "global"
                             ? 0
                             : local_det.config.resolved_instance_size(
                                   local_det.model.config.input_size);
        const int window = cfg.localization.window > 0 ? cfg.localization.window : inst;
        const int stride = cfg.localization.resolved_stride(cfg.image_size);

        for (const auto& s : samples) {
            if (s.label != Label::abnormal) continue;
            Heatmap map;
            if (mode != "local") map = global_error_map(s.pixels, global_det);
            if (mode != "global") {
                auto scorer = [&](const Image& win) {
                    const Image r = (win.h == inst && win.w == inst)
                                        ? win
                                        : resize_bilinear(win, inst, inst);
                    return score_image(r, local_det);
                };
                Heatmap local_map = heatmap(s.pixels, scorer, window, stride);
                map = mode == "both" ? combine_maps(map, local_map) : local_map;
            }

            bool warned = false;
            Mask raw_mask = binarize(map, cfg.localization.policy, &warned);
            Mask mask = connected_components(raw_mask, cfg.localization.resolved_min_area(
                                                           window > 0 ? window : 16));

            const std::string stem = (fs::path(dir) / sanitized_id(s.id)).string();
            write_heatmap_raw(stem + ".f32", map);
            write_heatmap_png(stem + ".png", map);
            write_mask_png(stem + "_mask.png", mask);
        }
        return dir;
    } catch (...) {
        rethrow_typed();
    }
}

EvalReport cmd_evaluate(const ExperimentConfig& cfg, const std::string& scores_path,
                        const std::string& heatmap_dir) {
    try {
        DatasetManifest m = ensure_dataset(cfg);
        auto samples = test_split(cfg, m);

        EvalReport report;
        report.config_echo = cfg.to_json();

        if (!scores_path.empty()) {
            std::ifstream f(scores_path);
            if (!f) throw DataError("cannot open scores file " + scores_path);
            std::map<std::string, double> by_id;
            std::string id;
            double sc;
            while (f >> id >> sc) by_id[id] = sc;
            std::vector<double> scores;
            std::vector<int> labels;
            for (const auto& s : samples) {
                auto it = by_id.find(s.id);
                if (it == by_id.end()) throw DataError("scores file misses test id " + s.id);
                scores.push_back(it->second);
                labels.push_back(s.label == Label::abnormal ? 1 : 0);
                (s.label == Label::abnormal ? report.n_pos : report.n_neg) += 1;
            }
            if (report.n_pos == 0 || report.n_neg == 0)
                throw DataError("auroc needs both classes in the test split");
            report.auroc_value = auroc(scores, labels);
        }

        if (!heatmap_dir.empty()) {
            std::vector<double> ious;
            std::vector<int> groups;
            for (const auto& s : samples) {
                if (s.label != Label::abnormal || !s.mask) continue;
                const std::string mp =
                    (fs::path(heatmap_dir) / (sanitized_id(s.id) + "_mask.png")).string();
                if (!fs::exists(mp)) throw DataError("missing predicted mask " + mp);
                Mask pred = read_mask_png(mp);
                ious.push_back(iou(pred, *s.mask));
                groups.push_back(s.group_id);
            }
            if (!ious.empty()) {
                GroupedIoU g = grouped_mean_iou(ious, groups);
                report.per_group_iou = g.group_means;
                report.mean_iou = g.mean;
                report.std_iou = g.stddev;
            }
        }
        return report;
    } catch (...) {
        rethrow_typed();
    }
}

std::string cmd_evaluate_to_file(const ExperimentConfig& cfg, const std::string& scores_path,
                                 const std::string& heatmap_dir) {
    EvalReport report = cmd_evaluate(cfg, scores_path, heatmap_dir);
    try {
        fs::create_directories(cfg.output_dir);
        const std::string path = (fs::path(cfg.output_dir) / "report.json").string();
        std::ofstream f(path);
        if (!f) throw DataError("cannot write " + path);
        f << report.to_json().dump(2) << "\n";
        return path;
    } catch (...) {
        rethrow_typed();
    }
}

double run_pipeline_auroc(const ExperimentConfig& cfg) {
    std::string pre;
    if (cfg.detector.init == DetectorInit::pretrained) pre = cmd_pretrain(cfg);
    const std::string det = cmd_train_detector(cfg, pre);
    const std::string scores = cmd_score(cfg, det);
    return cmd_evaluate(cfg, scores, "").auroc_value;
}

std::string cmd_sweep(const ExperimentConfig& cfg, const std::string& axis,
                      const std::vector<std::string>& values) {
    try {
        if (values.empty()) throw ConfigError("sweep: empty value list");
        nlohmann::json table = nlohmann::json::array();
        for (const std::string& value : values) {
            ExperimentConfig sub = cfg;
            if (axis == "batch_size") {
                sub.ccd.batch_size = std::stoi(value);
            } else if (axis == "strong_family") {
                sub.strong_family = value;
            } else if (axis == "loss_terms") {
                // tokens: con, cla, pos joined with '+'
                sub.ccd.w_con = sub.ccd.w_cla = sub.ccd.w_pos = 0.f;
                std::stringstream ss(value);
                std::string tok;
                while (std::getline(ss, tok, '+')) {
                    if (tok == "con")
                        sub.ccd.w_con = 1.f;
                    else if (tok == "cla")
                        sub.ccd.w_cla = 1.f;
                    else if (tok == "pos")
                        sub.ccd.w_pos = 1.f;
                    else
                        throw ConfigError("sweep: unknown loss term '" + tok + "'");
                }
            } else {
                throw ConfigError("sweep: unknown axis '" + axis + "'");
            }
            std::string tag = value;
            for (char& c : tag)
                if (c == '+') c = '_';
            sub.output_dir = (fs::path(cfg.output_dir) / ("sweep_" + axis + "_" + tag)).string();
            sub.validate();
            const double a = run_pipeline_auroc(sub);
            table.push_back({{"axis", axis}, {"value", value}, {"auroc", a}});
        }
        fs::create_directories(cfg.output_dir);
        const std::string path =
            (fs::path(cfg.output_dir) / ("sweep_" + axis + ".json")).string();
        std::ofstream f(path);
        f << table.dump(2) << "\n";
        return path;
    } catch (const std::invalid_argument&) {
        throw ConfigError("sweep: bad axis value");
    } catch (...) {
        rethrow_typed();
    }
}

}  // namespace pipeline
}  // namespace ccd
