#include "ccd/ccd_c.h"

#include <cstring>
#include <string>

#include "pipeline/pipeline.hpp"

namespace {

thread_local std::string g_last_error;

ccd_status fail(ccd_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

ccd_status copy_out(const std::string& s, char* out, size_t cap) {
    if (!out || cap == 0) return fail(CCD_ERR_CONFIG, "null output buffer");
    if (s.size() + 1 > cap) return fail(CCD_ERR_CONFIG, "output buffer too small");
    std::memcpy(out, s.c_str(), s.size() + 1);
    return CCD_OK;
}

template <typename F>
ccd_status guarded(F&& f) {
    try {
        g_last_error.clear();
        return f();
    } catch (const ccd::ConfigError& e) {
        return fail(CCD_ERR_CONFIG, e.what());
    } catch (const ccd::DataError& e) {
        return fail(CCD_ERR_DATA, e.what());
    } catch (const ccd::NumericError& e) {
        return fail(CCD_ERR_NUMERIC, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(CCD_ERR_CONFIG, e.what());
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        if (msg.find("non-finite") != std::string::npos) return fail(CCD_ERR_NUMERIC, msg);
        return fail(CCD_ERR_DATA, msg);
    }
}

ccd::ExperimentConfig parse_config(const char* config_json) {
    if (!config_json) throw ccd::ConfigError("null config");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
        throw ccd::ConfigError(std::string("config parse error: ") + e.what());
    }
    return ccd::ExperimentConfig::from_json(j);
}

}  // namespace

extern "C" {

struct ccd_model {
    ccd::ModelBundle bundle;
};

struct ccd_detector {
    ccd::DetectorBundle bundle;
};

const char* ccd_last_error(void) { return g_last_error.c_str(); }

ccd_status ccd_cmd_synth_data(const char* config_json, char* out_path, size_t out_cap) {
    return guarded([&] {
        return copy_out(ccd::pipeline::cmd_synth_data(parse_config(config_json)), out_path,
                        out_cap);
    });
}

ccd_status ccd_cmd_pretrain(const char* config_json, char* out_path, size_t out_cap) {
    return guarded([&] {
        return copy_out(ccd::pipeline::cmd_pretrain(parse_config(config_json)), out_path, out_cap);
    });
}

ccd_status ccd_cmd_train_detector(const char* config_json, const char* pretrained_path,
                                  char* out_path, size_t out_cap) {
    return guarded([&] {
        return copy_out(ccd::pipeline::cmd_train_detector(parse_config(config_json),
                                                          pretrained_path ? pretrained_path : ""),
                        out_path, out_cap);
    });
}

ccd_status ccd_cmd_score(const char* config_json, const char* detector_path, char* out_path,
                         size_t out_cap) {
    return guarded([&] {
        if (!detector_path) throw ccd::ConfigError("null detector path");
        return copy_out(ccd::pipeline::cmd_score(parse_config(config_json), detector_path),
                        out_path, out_cap);
    });
}

ccd_status ccd_cmd_localize(const char* config_json, const char* global_detector_path,
                            const char* local_detector_path, char* out_path, size_t out_cap) {
    return guarded([&] {
        return copy_out(
            ccd::pipeline::cmd_localize(parse_config(config_json),
                                        global_detector_path ? global_detector_path : "",
                                        local_detector_path ? local_detector_path : ""),
            out_path, out_cap);
    });
}

ccd_status ccd_cmd_evaluate(const char* config_json, const char* scores_path,
                            const char* heatmap_dir, char* out_path, size_t out_cap) {
    return guarded([&] {
        return copy_out(
            ccd::pipeline::cmd_evaluate_to_file(parse_config(config_json),
                                                scores_path ? scores_path : "",
                                                heatmap_dir ? heatmap_dir : ""),
            out_path, out_cap);
    });
}

ccd_status ccd_cmd_sweep(const char* config_json, const char* axis, const char* values_json,
                         char* out_path, size_t out_cap) {
    return guarded([&] {
        if (!axis || !values_json) throw ccd::ConfigError("null sweep arguments");
        std::vector<std::string> values;
        try {
            for (const auto& v : nlohmann::json::parse(values_json))
                values.push_back(v.get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ccd::ConfigError(std::string("sweep values parse error: ") + e.what());
        }
        return copy_out(ccd::pipeline::cmd_sweep(parse_config(config_json), axis, values),
                        out_path, out_cap);
    });
}

ccd_status ccd_model_load(const char* path, ccd_model** out) {
    return guarded([&]() -> ccd_status {
        if (!path || !out) throw ccd::ConfigError("null argument");
        auto* m = new ccd_model{ccd::load_checkpoint(path)};
        *out = m;
        return CCD_OK;
    });
}

void ccd_model_free(ccd_model* model) { delete model; }

ccd_status ccd_model_embed_dim(const ccd_model* model, int32_t* out) {
    return guarded([&]() -> ccd_status {
        if (!model || !out) throw ccd::ConfigError("null argument");
        *out = model->bundle.config.embed_dim;
        return CCD_OK;
    });
}

ccd_status ccd_model_input_size(const ccd_model* model, int32_t* out) {
    return guarded([&]() -> ccd_status {
        if (!model || !out) throw ccd::ConfigError("null argument");
        *out = model->bundle.config.input_size;
        return CCD_OK;
    });
}

ccd_status ccd_model_embed_png(const ccd_model* model, const char* png_path, double* out,
                               size_t out_len) {
    return guarded([&]() -> ccd_status {
        if (!model || !png_path || !out) throw ccd::ConfigError("null argument");
        const auto& cfg = model->bundle.config;
        if (out_len < static_cast<size_t>(cfg.embed_dim))
            throw ccd::ConfigError("embedding buffer too small");
        ccd::Image img = ccd::read_png(png_path);
        if (img.h != cfg.input_size || img.w != cfg.input_size)
            img = ccd::resize_bilinear(img, cfg.input_size, cfg.input_size);
        if (img.c != cfg.in_channels) {
            if (cfg.in_channels != 1) throw ccd::DataError("channel mismatch for " +
                                                           std::string(png_path));
            ccd::Image gray(img.h, img.w, 1);
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x) {
                    float s = 0;
                    for (int c = 0; c < img.c; ++c) s += img.at(y, x, c);
                    gray.at(y, x, 0) = s / static_cast<float>(img.c);
                }
            img = gray;
        }
        auto z = model->bundle.encode(ccd::nn::Var<float>::constant(ccd::image_to_tensor(img)));
        for (int i = 0; i < cfg.embed_dim; ++i) out[i] = z.value()[i];
        return CCD_OK;
    });
}

ccd_status ccd_detector_load(const char* path, ccd_detector** out) {
    return guarded([&]() -> ccd_status {
        if (!path || !out) throw ccd::ConfigError("null argument");
        auto* d = new ccd_detector{ccd::load_detector(path)};
        *out = d;
        return CCD_OK;
    });
}

void ccd_detector_free(ccd_detector* detector) { delete detector; }

ccd_status ccd_detector_score_png(const ccd_detector* detector, const char* png_path,
                                  double* out) {
    return guarded([&]() -> ccd_status {
        if (!detector || !png_path || !out) throw ccd::ConfigError("null argument");
        *out = ccd::score_sample(ccd::read_png(png_path), detector->bundle);
        return CCD_OK;
    });
}

ccd_status ccd_metric_auroc(const double* scores, const int32_t* labels, size_t n, double* out) {
    return guarded([&]() -> ccd_status {
        if (!scores || !labels || !out) throw ccd::ConfigError("null argument");
        std::vector<double> s(scores, scores + n);
        std::vector<int> y(labels, labels + n);
        *out = ccd::auroc(s, y);
        return CCD_OK;
    });
}

ccd_status ccd_metric_iou(const uint8_t* pred, const uint8_t* gt, int32_t h, int32_t w,
                          double* out) {
    return guarded([&]() -> ccd_status {
        if (!pred || !gt || !out || h < 1 || w < 1) throw ccd::ConfigError("bad mask arguments");
        ccd::Mask p(h, w), g(h, w);
        const size_t n = static_cast<size_t>(h) * w;
        for (size_t i = 0; i < n; ++i) {
            p.pix[i] = pred[i] ? 1 : 0;
            g.pix[i] = gt[i] ? 1 : 0;
        }
        *out = ccd::iou(p, g);
        return CCD_OK;
    });
}

}  // extern "C"
