#include "localize/localize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

namespace ccd {

const char* heatmap_scale_name(Heatmap::Scale s) {
    switch (s) {
        case Heatmap::Scale::global: return "global";
        case Heatmap::Scale::local: return "local";
        case Heatmap::Scale::fused: return "fused";
    }
    return "?";
}

namespace {

Heatmap::Scale scale_from_name(const std::string& s) {
    if (s == "global") return Heatmap::Scale::global;
    if (s == "local") return Heatmap::Scale::local;
    if (s == "fused") return Heatmap::Scale::fused;
    throw std::invalid_argument("unknown heatmap scale: " + s);
}

// Flush-anchored window origins covering [0, extent).
std::vector<int> window_origins(int extent, int window, int stride) {
    std::vector<int> out;
    for (int o = 0;; o += stride) {
        const int a = std::min(o, extent - window);
        if (out.empty() || out.back() != a) out.push_back(a);
        if (a == extent - window) break;
    }
    return out;
}

}  // namespace

Heatmap heatmap(const Image& image, const WindowScorer& scorer, int window, int stride,
                Heatmap::Scale tag) {
    if (window < 1 || window > std::min(image.h, image.w))
        throw std::invalid_argument("heatmap: window must fit the image");
    if (stride < 1) throw std::invalid_argument("heatmap: stride must be >= 1");

    Heatmap map(image.h, image.w, tag);
    std::vector<int> coverage(static_cast<size_t>(image.h) * image.w, 0);
    for (int y : window_origins(image.h, window, stride))
        for (int x : window_origins(image.w, window, stride)) {
            const double s = scorer(crop_image(image, y, x, window, window));
            for (int yy = y; yy < y + window; ++yy)
                for (int xx = x; xx < x + window; ++xx) {
                    map.at(yy, xx) += static_cast<float>(s);
                    ++coverage[static_cast<size_t>(yy) * image.w + xx];
                }
        }
    for (size_t i = 0; i < map.values.size(); ++i)
        map.values[i] /= static_cast<float>(coverage[i]);
    return map;
}

Heatmap global_error_map(const Image& x, const DetectorBundle& d) {
    if (!d.trained) throw std::logic_error("detector bundle is untrained");
    const int inst = d.config.resolved_instance_size(d.model.config.input_size);
    const Image xr = (x.h == inst && x.w == inst) ? x : resize_bilinear(x, inst, inst);
    auto z = d.model.encode(nn::Var<float>::constant(image_to_tensor(xr)));
    const Tensor<float> recon = d.model.decode(z).value();

    Heatmap map(inst, inst, Heatmap::Scale::global);
    const int c = xr.c;
    for (int y = 0; y < inst; ++y)
        for (int xx = 0; xx < inst; ++xx) {
            float e = 0;
            for (int ch = 0; ch < c; ++ch)
                e += std::abs(xr.at(y, xx, ch) -
                              recon[(static_cast<int64_t>(ch) * inst + y) * inst + xx]);
            map.at(y, xx) = e / static_cast<float>(c);
        }
    if (inst == x.h && inst == x.w) return map;

    // resize back to the scored image's geometry
    Image tmp(inst, inst, 1);
    for (size_t i = 0; i < map.values.size(); ++i) tmp.pix[i] = map.values[i];
    const Image up = resize_bilinear(tmp, x.h, x.w);
    Heatmap out(x.h, x.w, Heatmap::Scale::global);
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = up.pix[i];
    return out;
}

namespace {

Heatmap minmax_normalized(const Heatmap& m) {
    Heatmap out = m;
    const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
    const float span = *hi - *lo;
    for (float& v : out.values) v = span > 0.f ? (v - *lo) / span : 0.f;
    return out;
}

}  // namespace

Heatmap combine_maps(const Heatmap& global_map, const Heatmap& local_map) {
    if (global_map.h != local_map.h || global_map.w != local_map.w)
        throw std::invalid_argument("combine_maps: size mismatch");
    Heatmap g = minmax_normalized(global_map);
    Heatmap l = minmax_normalized(local_map);
    Heatmap out(g.h, g.w, Heatmap::Scale::fused);
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = g.values[i] + l.values[i];
    return out;
}

Mask binarize(const Heatmap& map, const BinarizePolicy& policy, bool* warned) {
    if (warned) *warned = false;
    Mask out(map.h, map.w, 0);
    for (float v : map.values)
        if (!std::isfinite(v)) throw std::invalid_argument("binarize: non-finite heatmap");

    if (policy.kind == BinarizePolicy::Kind::fixed) {
        for (size_t i = 0; i < map.values.size(); ++i)
            out.pix[i] = map.values[i] > policy.threshold ? 1 : 0;
        return out;
    }

    if (policy.q < 0.0 || policy.q >= 1.0)
        throw std::invalid_argument("binarize: quantile must lie in [0,1)");
    const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
    if (*lo == *hi) {
        if (warned) *warned = true;
        return out;  // degenerate constant map
    }
    const size_t n = map.values.size();
    const size_t keep = n - static_cast<size_t>(std::floor(policy.q * static_cast<double>(n)));
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (map.values[a] != map.values[b]) return map.values[a] > map.values[b];
        return a < b;
    });
    for (size_t k = 0; k < keep; ++k) out.pix[idx[k]] = 1;
    return out;
}

Mask connected_components(const Mask& mask, int min_area, std::vector<Component>* components) {
    if (min_area < 0) throw std::invalid_argument("connected_components: bad min_area");
    const int h = mask.h, w = mask.w;
    std::vector<int> labels(static_cast<size_t>(h) * w, 0);
    std::vector<Component> comps;
    int next = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(y, x) || labels[static_cast<size_t>(y) * w + x]) continue;
            Component c;
            c.label = ++next;
            c.min_y = c.max_y = y;
            c.min_x = c.max_x = x;
            std::deque<std::pair<int, int>> queue{{y, x}};
            labels[static_cast<size_t>(y) * w + x] = c.label;
            while (!queue.empty()) {
                auto [cy, cx] = queue.front();
                queue.pop_front();
                ++c.area;
                c.min_y = std::min(c.min_y, cy);
                c.max_y = std::max(c.max_y, cy);
                c.min_x = std::min(c.min_x, cx);
                c.max_x = std::max(c.max_x, cx);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = cy + dy, nx = cx + dx;
                        if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                        auto& l = labels[static_cast<size_t>(ny) * w + nx];
                        if (mask.at(ny, nx) && !l) {
                            l = c.label;
                            queue.emplace_back(ny, nx);
                        }
                    }
            }
            comps.push_back(c);
        }

    Mask out(h, w, 0);
    std::vector<Component> kept;
    int relabel = 0;
    for (const Component& c : comps) {
        if (c.area < min_area) continue;
        Component k = c;
        k.label = ++relabel;
        kept.push_back(k);
    }
    std::vector<int> remap(static_cast<size_t>(next) + 1, 0);
    for (size_t i = 0, j = 0; i < comps.size(); ++i)
        if (comps[i].area >= min_area) remap[static_cast<size_t>(comps[i].label)] = kept[j++].label;
    for (size_t i = 0; i < out.pix.size(); ++i)
        out.pix[i] = labels[i] && remap[static_cast<size_t>(labels[i])] ? 1 : 0;
    if (components) *components = kept;
    return out;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auroc: scores/labels length mismatch");
    int64_t n_pos = 0, n_neg = 0;
    for (int l : labels) {
        if (l == 1)
            ++n_pos;
        else if (l == 0)
            ++n_neg;
        else
            throw std::invalid_argument("auroc: labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auroc: both classes required");

    // average ranks with ties, U statistic
    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(scores.size());
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
        i = j + 1;
    }
    double rank_sum_pos = 0;
    for (size_t k = 0; k < scores.size(); ++k)
        if (labels[k] == 1) rank_sum_pos += rank[k];
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double iou(const Mask& pred, const Mask& gt) {
    if (pred.h != gt.h || pred.w != gt.w) throw std::invalid_argument("iou: shape mismatch");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.pix.size(); ++i) {
        inter += pred.pix[i] && gt.pix[i];
        uni += pred.pix[i] || gt.pix[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

GroupedIoU grouped_mean_iou(const std::vector<double>& ious, const std::vector<int>& group_ids) {
    if (ious.size() != group_ids.size() || ious.empty())
        throw std::invalid_argument("grouped_mean_iou: length mismatch or empty input");
    std::map<int, std::pair<double, int>> acc;
    for (size_t i = 0; i < ious.size(); ++i) {
        acc[group_ids[i]].first += ious[i];
        acc[group_ids[i]].second += 1;
    }
    GroupedIoU out;
    for (const auto& [gid, sum_count] : acc) {
        out.group_ids.push_back(gid);
        out.group_means.push_back(sum_count.first / sum_count.second);
    }
    out.mean = std::accumulate(out.group_means.begin(), out.group_means.end(), 0.0) /
               static_cast<double>(out.group_means.size());
    double var = 0;
    for (double m : out.group_means) var += (m - out.mean) * (m - out.mean);
    out.stddev = std::sqrt(var / static_cast<double>(out.group_means.size()));
    return out;
}

nlohmann::json EvalReport::to_json() const {
    return {{"auroc", auroc_value},   {"per_group_iou", per_group_iou},
            {"mean_iou", mean_iou},   {"std_iou", std_iou},
            {"n_pos", n_pos},         {"n_neg", n_neg},
            {"config", config_echo}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    r.auroc_value = j.value("auroc", -1.0);
    r.per_group_iou = j.value("per_group_iou", std::vector<double>{});
    r.mean_iou = j.value("mean_iou", -1.0);
    r.std_iou = j.value("std_iou", 0.0);
    r.n_pos = j.value("n_pos", 0);
    r.n_neg = j.value("n_neg", 0);
    r.config_echo = j.value("config", nlohmann::json::object());
    return r;
}

void write_heatmap_png(const std::string& path, const Heatmap& map) {
    const Heatmap n = minmax_normalized(map);
    Image img(map.h, map.w, 3);
    for (int y = 0; y < map.h; ++y)
        for (int x = 0; x < map.w; ++x) {
            const float v = n.at(y, x);
            // blue -> red ramp through dim green
            img.at(y, x, 0) = v;
            img.at(y, x, 1) = 0.25f * (1.f - std::abs(2.f * v - 1.f));
            img.at(y, x, 2) = 1.f - v;
        }
    write_png(path, img);
}

void write_heatmap_raw(const std::string& path, const Heatmap& map) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(map.values.data()),
            static_cast<std::streamsize>(map.values.size() * sizeof(float)));
    nlohmann::json side = {{"height", map.h},
                           {"width", map.w},
                           {"dtype", "float32le"},
                           {"scale", heatmap_scale_name(map.source_scale)}};
    std::ofstream sf(path + ".json");
    sf << side.dump(2) << "\n";
}

Heatmap read_heatmap_raw(const std::string& path) {
    std::ifstream sf(path + ".json");
    if (!sf) throw std::runtime_error("missing heatmap sidecar for " + path);
    nlohmann::json side = nlohmann::json::parse(sf);
    Heatmap map(side.at("height").get<int>(), side.at("width").get<int>(),
                scale_from_name(side.at("scale").get<std::string>()));
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    f.read(reinterpret_cast<char*>(map.values.data()),
           static_cast<std::streamsize>(map.values.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(map.values.size() * sizeof(float)))
        throw std::runtime_error("truncated heatmap file " + path);
    return map;
}

}  // namespace ccd
