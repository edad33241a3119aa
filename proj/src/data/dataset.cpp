#include "data/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ccd {

const char* label_name(Label l) {
    switch (l) {
        case Label::normal: return "normal";
        case Label::abnormal: return "abnormal";
        default: return "unlabeled";
    }
}

Label label_from_name(const std::string& s) {
    if (s == "normal") return Label::normal;
    if (s == "abnormal") return Label::abnormal;
    if (s == "unlabeled") return Label::unlabeled;
    throw std::runtime_error("manifest: unknown label '" + s + "'");
}

size_t DatasetManifest::count(Split s) const {
    size_t n = 0;
    for (const auto& e : entries) n += (e.split == s) ? 1u : 0u;
    return n;
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest: parse error in " + path + ": " + e.what());
    }
    DatasetManifest m;
    if (!j.contains("version") || !j["version"].is_number_integer())
        throw std::runtime_error("manifest: missing integer 'version'");
    m.version = j["version"].get<int>();
    if (m.version != 1)
        throw std::runtime_error("manifest: unsupported version " + std::to_string(m.version));
    m.root_path = j.value("root", std::string());
    if (m.root_path.empty()) m.root_path = fs::path(path).parent_path().string();
    if (!j.contains("entries") || !j["entries"].is_array())
        throw std::runtime_error("manifest: missing 'entries' array");

    for (const auto& je : j["entries"]) {
        ManifestEntry e;
        if (!je.contains("path") || !je.contains("split") || !je.contains("label"))
            throw std::runtime_error("manifest: entry missing path/split/label");
        e.path = je["path"].get<std::string>();
        const std::string sp = je["split"].get<std::string>();
        if (sp == "train") e.split = Split::train;
        else if (sp == "test") e.split = Split::test;
        else throw std::runtime_error("manifest: unknown split '" + sp + "'");
        e.label = label_from_name(je["label"].get<std::string>());
        if (je.contains("mask")) e.mask_path = je["mask"].get<std::string>();
        if (je.contains("group")) e.group_id = je["group"].get<int>();

        if (e.split == Split::train && e.label == Label::abnormal)
            throw std::runtime_error("manifest: abnormal sample '" + e.path +
                                     "' in train split violates the normal-only contract");
        const fs::path full = fs::path(m.root_path) / e.path;
        if (!fs::exists(full))
            throw std::runtime_error("manifest: referenced file missing: " + full.string());
        if (e.mask_path && !fs::exists(fs::path(m.root_path) / *e.mask_path))
            throw std::runtime_error("manifest: referenced mask missing: " + *e.mask_path);
        m.entries.push_back(std::move(e));
    }
    return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
    json j;
    j["version"] = m.version;
    j["root"] = m.root_path;
    j["entries"] = json::array();
    for (const auto& e : m.entries) {
        json je;
        je["path"] = e.path;
        je["split"] = (e.split == Split::train) ? "train" : "test";
        je["label"] = label_name(e.label);
        if (e.mask_path) je["mask"] = *e.mask_path;
        if (e.group_id) je["group"] = *e.group_id;
        j["entries"].push_back(std::move(je));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<ImageSample> load_split(const DatasetManifest& m, Split split, int image_size) {
    std::vector<ImageSample> out;
    for (const auto& e : m.entries) {
        if (e.split != split) continue;
        ImageSample s;
        s.id = e.path;
        s.label = e.label;
        s.group_id = e.group_id.value_or(-1);
        Image img = read_png((fs::path(m.root_path) / e.path).string());
        s.pixels = resize_bilinear(img, image_size, image_size);
        if (e.mask_path) {
            Mask mk = read_mask_png((fs::path(m.root_path) / *e.mask_path).string());
            if (mk.h != img.h || mk.w != img.w)
                throw std::runtime_error("manifest: mask size mismatch for " + e.path);
            s.mask = resize_nearest(mk, image_size, image_size);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace ccd
