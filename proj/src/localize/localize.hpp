#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "data/image.hpp"
#include "detect/detector.hpp"

namespace ccd {

struct Heatmap {
    enum class Scale { global, local, fused };
    int h = 0, w = 0;
    std::vector<float> values;
    Scale source_scale = Scale::global;

    Heatmap() = default;
    Heatmap(int h_, int w_, Scale s = Scale::global)
        : h(h_), w(w_), values(static_cast<size_t>(h_) * w_, 0.f), source_scale(s) {}
    float& at(int y, int x) { return values[static_cast<size_t>(y) * w + x]; }
    float at(int y, int x) const { return values[static_cast<size_t>(y) * w + x]; }
};

const char* heatmap_scale_name(Heatmap::Scale s);

using WindowScorer = std::function<double(const Image&)>;

// Sliding-window score map. Each window's scalar is added to every covered
// pixel and divided by the per-pixel coverage count; the final row/column
// windows are anchored flush to the border.
Heatmap heatmap(const Image& image, const WindowScorer& scorer, int window, int stride,
                Heatmap::Scale tag = Heatmap::Scale::local);

// Per-pixel reconstruction error |x - g(f(x))|, averaged over channels.
Heatmap global_error_map(const Image& x, const DetectorBundle& d);

// min-max normalise both inputs to [0,1] and sum.
Heatmap combine_maps(const Heatmap& global_map, const Heatmap& local_map);

struct BinarizePolicy {
    enum class Kind { quantile, fixed };
    Kind kind = Kind::quantile;
    double q = 0.95;      // top (1-q) fraction of pixels
    double threshold = 0.5;
};

// Quantile policy sets exactly n - floor(q*n) pixels, ties broken by value
// then index; a constant map yields an empty mask (and sets *warned).
Mask binarize(const Heatmap& map, const BinarizePolicy& policy, bool* warned = nullptr);

struct Component {
    int label = 0;
    int area = 0;
    int min_y = 0, min_x = 0, max_y = 0, max_x = 0;
};

// 8-connected labelling; components smaller than min_area are dropped from
// the returned mask and the component list.
Mask connected_components(const Mask& mask, int min_area,
                          std::vector<Component>* components = nullptr);

// Exact Mann-Whitney AUROC: P(pos > neg) + 0.5 P(tie).
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

double iou(const Mask& pred, const Mask& gt);  // 1.0 when both empty

struct GroupedIoU {
    std::vector<int> group_ids;        // sorted unique ids
    std::vector<double> group_means;   // aligned with group_ids
    double mean = 0, stddev = 0;       // across group means
};

GroupedIoU grouped_mean_iou(const std::vector<double>& ious, const std::vector<int>& group_ids);

struct EvalReport {
    double auroc_value = -1;  // -1 = not computed
    std::vector<double> per_group_iou;
    double mean_iou = -1, std_iou = 0;
    int n_pos = 0, n_neg = 0;
    nlohmann::json config_echo = nlohmann::json::object();

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

// Colormapped PNG for inspection.
void write_heatmap_png(const std::string& path, const Heatmap& map);
// Raw little-endian float32 values plus a JSON sidecar (shape + scale tag)
// at path + ".json".
void write_heatmap_raw(const std::string& path, const Heatmap& map);
Heatmap read_heatmap_raw(const std::string& path);

}  // namespace ccd
