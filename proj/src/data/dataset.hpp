#pragma once

#include <optional>
#include <string>
#include <vector>

#include "data/image.hpp"

namespace ccd {

enum class Label { normal, abnormal, unlabeled };

const char* label_name(Label l);
Label label_from_name(const std::string& s);

struct ImageSample {
    Image pixels;
    Label label = Label::unlabeled;
    std::optional<Mask> mask;
    std::string id;
    int group_id = -1;
};

enum class Split { train, test };

struct ManifestEntry {
    std::string path;
    Split split = Split::train;
    Label label = Label::normal;
    std::optional<std::string> mask_path;
    std::optional<int> group_id;
};

struct DatasetManifest {
    int version = 1;
    std::string root_path;
    std::vector<ManifestEntry> entries;

    size_t count(Split s) const;
};

// Loads and validates a manifest JSON file. Throws std::runtime_error on a
// missing file, malformed entry, missing referenced file, or an abnormal
// train entry (UAD contract).
DatasetManifest load_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& m);

// Loads the referenced images, resized to image_size (bilinear; masks
// nearest-neighbour).
std::vector<ImageSample> load_split(const DatasetManifest& m, Split split, int image_size);

}  // namespace ccd
