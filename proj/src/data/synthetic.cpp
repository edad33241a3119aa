#include "data/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "core/rng.hpp"

namespace fs = std::filesystem;

namespace ccd {

namespace {
constexpr uint64_t kTrainTag = 0x7261696e;
constexpr uint64_t kTestNormalTag = 0x6e6f726d;
constexpr uint64_t kTestAbnormalTag = 0x61626e6f;
constexpr double kDeg = M_PI / 180.0;
}  // namespace

void SyntheticConfig::validate() const {
    if (image_size < 8) throw std::invalid_argument("synthetic: image_size too small");
    if (n_train < 0 || n_test_normal < 0 || n_test_abnormal < 0)
        throw std::invalid_argument("synthetic: negative sample count");
    if (anomaly_size_range.first < 1 || anomaly_size_range.second < anomaly_size_range.first)
        throw std::invalid_argument("synthetic: bad anomaly size range");
    if (anomaly_size_range.second >= image_size)
        throw std::invalid_argument("synthetic: anomaly size must be smaller than image");
    if (anomaly_contrast <= 0.f || anomaly_contrast > 1.f)
        throw std::invalid_argument("synthetic: anomaly_contrast must be in (0,1]");
}

// Oriented sinusoid mixture over two independent spatial cues: a brightness
// ramp along x and a texture-energy ramp along y. The fixed cue orientation
// keeps the 4 right-angle rotations of a texture distinguishable (rotation
// pretext) and lets patch statistics carry both coordinates (position
// pretext): mean brightness tracks x, local variance tracks y.
Image synthetic_texture(const SyntheticConfig& cfg, uint64_t role_tag, int index) {
    const int S = cfg.image_size;
    Rng rng(seed_combine(cfg.texture_seed, role_tag, static_cast<uint64_t>(index)));
    const double ramp_amp = rng.uniform(0.3, 0.45);
    struct Wave { double fx, fy, phase, amp; };
    Wave waves[3];
    for (auto& wv : waves) {
        const double theta = rng.uniform(-40.0, 40.0) * kDeg;
        const double freq = rng.uniform(4.0, 8.0);
        wv.fx = freq * std::cos(theta) / S;
        wv.fy = freq * std::sin(theta) / S;
        wv.phase = rng.uniform(0.0, 2.0 * M_PI);
        wv.amp = rng.uniform(0.08, 0.14);
    }
    Image img(S, S, 1);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            double v = 0.5;
            v += ramp_amp * (static_cast<double>(x) / S - 0.5);
            const double energy = 0.15 + 1.7 * static_cast<double>(y) / S;
            for (const auto& wv : waves)
                v += energy * wv.amp * std::sin(2.0 * M_PI * (wv.fx * x + wv.fy * y) + wv.phase);
            img.at(y, x, 0) = static_cast<float>(v);
        }
    img = gaussian_blur(img, 1.0f, 5);
    img.clip01();
    return img;
}

namespace {

ImageSample make_abnormal(const SyntheticConfig& cfg, int index) {
    ImageSample s;
    s.pixels = synthetic_texture(cfg, kTestAbnormalTag, index);
    s.label = Label::abnormal;

    const int S = cfg.image_size;
    Rng rng(seed_combine(cfg.texture_seed, kTestAbnormalTag ^ 0x616e6f6dULL,
                         static_cast<uint64_t>(index)));
    const int lo = cfg.anomaly_size_range.first, hi = cfg.anomaly_size_range.second;
    const int size = lo + static_cast<int>(rng.uniform_int(hi - lo + 1));
    const bool disc = cfg.allow_disc && rng.bernoulli(0.5);
    const int y0 = static_cast<int>(rng.uniform_int(S - size + 1));
    const int x0 = static_cast<int>(rng.uniform_int(S - size + 1));

    Mask m(S, S, 0);
    const double cy = y0 + (size - 1) / 2.0, cx = x0 + (size - 1) / 2.0, rad = size / 2.0;
    for (int y = y0; y < y0 + size; ++y)
        for (int x = x0; x < x0 + size; ++x) {
            if (disc && ((y - cy) * (y - cy) + (x - cx) * (x - cx)) > rad * rad) continue;
            m.at(y, x) = 1;
        }

    // Blend toward the opposite extreme of the local mean so the blob stays
    // visible at any contrast and every masked pixel actually changes.
    double mean = 0.0;
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            if (m.at(y, x)) mean += s.pixels.at(y, x, 0);
    mean /= static_cast<double>(m.count());
    const float target = (mean < 0.5) ? 0.95f : 0.05f;
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            if (m.at(y, x))
                s.pixels.at(y, x, 0) =
                    (1.f - cfg.anomaly_contrast) * s.pixels.at(y, x, 0) +
                    cfg.anomaly_contrast * target;
    s.pixels.clip01();
    s.mask = std::move(m);
    return s;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    SyntheticDataset ds;
    char buf[64];
    for (int i = 0; i < cfg.n_train; ++i) {
        ImageSample s;
        s.pixels = synthetic_texture(cfg, kTrainTag, i);
        s.label = Label::normal;
        std::snprintf(buf, sizeof(buf), "train/%04d.png", i);
        s.id = buf;
        ds.train.push_back(std::move(s));
    }
    for (int i = 0; i < cfg.n_test_normal; ++i) {
        ImageSample s;
        s.pixels = synthetic_texture(cfg, kTestNormalTag, i);
        s.label = Label::normal;
        std::snprintf(buf, sizeof(buf), "test/normal_%04d.png", i);
        s.id = buf;
        ds.test.push_back(std::move(s));
    }
    for (int i = 0; i < cfg.n_test_abnormal; ++i) {
        ImageSample s = make_abnormal(cfg, i);
        std::snprintf(buf, sizeof(buf), "test/abnormal_%04d.png", i);
        s.id = buf;
        s.group_id = i % 5;
        ds.test.push_back(std::move(s));
    }
    return ds;
}

std::string export_synthetic(const SyntheticConfig& cfg, const std::string& out_dir) {
    SyntheticDataset ds = generate_synthetic(cfg);
    fs::create_directories(fs::path(out_dir) / "train");
    fs::create_directories(fs::path(out_dir) / "test");
    fs::create_directories(fs::path(out_dir) / "masks");

    DatasetManifest m;
    m.root_path = out_dir;
    for (const auto& s : ds.train) {
        write_png((fs::path(out_dir) / s.id).string(), s.pixels);
        m.entries.push_back({s.id, Split::train, s.label, std::nullopt, std::nullopt});
    }
    for (const auto& s : ds.test) {
        write_png((fs::path(out_dir) / s.id).string(), s.pixels);
        ManifestEntry e{s.id, Split::test, s.label, std::nullopt, std::nullopt};
        if (s.mask) {
            const std::string mp = "masks/" + fs::path(s.id).filename().string();
            write_mask_png((fs::path(out_dir) / mp).string(), *s.mask);
            e.mask_path = mp;
        }
        if (s.group_id >= 0) e.group_id = s.group_id;
        m.entries.push_back(std::move(e));
    }
    const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    write_manifest(manifest_path, m);
    return manifest_path;
}

}  // namespace ccd
