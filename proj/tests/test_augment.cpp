#include <doctest.h>

#include <set>

#include "augment/augment.hpp"
#include "core/rng.hpp"
#include "data/synthetic.hpp"

using namespace ccd;

namespace {

Image random_image(int h, int w, int c, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, c);
    for (float& v : img.pix) v = static_cast<float>(rng.uniform());
    return img;
}

}  // namespace

TEST_CASE("weak augmentation: identity config, determinism, range") {
    Image img = random_image(40, 40, 3, 1);

    Image id = apply_weak(img, WeakAugConfig::identity(), 123);
    CHECK(id.pix == img.pix);

    WeakAugConfig cfg;
    Image a = apply_weak(img, cfg, 99);
    Image b = apply_weak(img, cfg, 99);
    CHECK(a.pix == b.pix);
    CHECK(a.same_shape(img));
    CHECK(a.finite_in_unit());
    Image c = apply_weak(img, cfg, 100);
    CHECK(a.pix != c.pix);
}

TEST_CASE("grayscale of a gray image is the identity") {
    Image img(16, 16, 3);
    Rng rng(3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const float v = static_cast<float>(rng.uniform());
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = v;
        }
    WeakAugConfig cfg = WeakAugConfig::identity();
    cfg.grayscale_prob = 1.f;
    Image out = apply_weak(img, cfg, 5);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(out.pix[i] == doctest::Approx(img.pix[i]).epsilon(1e-6));
}

TEST_CASE("rotation index mapping on a 2x2 image") {
    // [[a,b],[c,d]] rotated 90 CCW -> [[b,d],[a,c]]
    Image img(2, 2, 1);
    img.at(0, 0, 0) = 0.1f;  // a
    img.at(0, 1, 0) = 0.2f;  // b
    img.at(1, 0, 0) = 0.3f;  // c
    img.at(1, 1, 0) = 0.4f;  // d
    AugmentationDescriptor d;
    d.kind = StrongKind::rotation;
    d.rotation_quarter_turns = 1;
    d.class_index = 1;
    Image out = apply_strong(img, d, 0);
    CHECK(out.at(0, 0, 0) == 0.2f);
    CHECK(out.at(0, 1, 0) == 0.4f);
    CHECK(out.at(1, 0, 0) == 0.1f);
    CHECK(out.at(1, 1, 0) == 0.3f);
}

TEST_CASE("rotation group closure: 90 twice equals 180") {
    Image img = random_image(16, 16, 1, 7);
    auto descs = enumerate_strong(StrongKind::rotation, 4);
    Image r90 = apply_strong(img, descs[1], 0);
    Image r90r90 = apply_strong(r90, descs[1], 0);
    Image r180 = apply_strong(img, descs[2], 0);
    CHECK(r90r90.pix == r180.pix);
}

TEST_CASE("identity permutation leaves the image unchanged") {
    Image img = random_image(16, 16, 1, 8);
    AugmentationDescriptor d;
    d.kind = StrongKind::permutation;
    d.perm_grid = 4;
    d.class_index = 0;
    for (int i = 0; i < 16; ++i) d.permutation.push_back(i);
    CHECK(apply_strong(img, d, 0).pix == img.pix);
}

TEST_CASE("cutout covering the whole image zeroes it") {
    Image img = random_image(12, 12, 1, 9);
    AugmentationDescriptor d;
    d.kind = StrongKind::cutout;
    d.cutout_x = d.cutout_y = 0.f;
    d.cutout_w = d.cutout_h = 1.f;
    d.cutout_fill = 0.f;
    d.class_index = 0;
    Image out = apply_strong(img, d, 0);
    for (float v : out.pix) CHECK(v == 0.f);
}

TEST_CASE("enumerate_strong contracts") {
    auto rot = enumerate_strong(StrongKind::rotation, 4);
    REQUIRE(rot.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(rot[static_cast<size_t>(i)].class_index == i);
        CHECK(rot[static_cast<size_t>(i)].rotation_quarter_turns == i);
    }
    CHECK_THROWS(enumerate_strong(StrongKind::rotation, 5));
    CHECK_THROWS(enumerate_strong(StrongKind::rotation, 1));

    auto p1 = enumerate_strong(StrongKind::permutation, 4, 4, 42);
    auto p2 = enumerate_strong(StrongKind::permutation, 4, 4, 42);
    for (int i = 0; i < 4; ++i)
        CHECK(p1[static_cast<size_t>(i)].permutation == p2[static_cast<size_t>(i)].permutation);
    // all distinct
    std::set<std::vector<int>> pats;
    for (const auto& d : p1) pats.insert(d.permutation);
    CHECK(pats.size() == 4);

    auto noise = enumerate_strong(StrongKind::gaussian_noise, 4);
    CHECK(noise[3].noise_sigma == doctest::Approx(0.3f));
}

TEST_CASE("strong augmentations map [0,1] to [0,1], same shape, deterministic") {
    Image img = random_image(32, 32, 1, 10);
    for (auto kind : {StrongKind::rotation, StrongKind::permutation, StrongKind::cutout,
                      StrongKind::gaussian_noise}) {
        for (const auto& d : enumerate_strong(kind, 4)) {
            Image a = apply_strong(img, d, 77);
            Image b = apply_strong(img, d, 77);
            CHECK(a.pix == b.pix);
            CHECK(a.same_shape(img));
            CHECK(a.finite_in_unit());
        }
    }
}

TEST_CASE("distinct strong descriptors are pairwise distinguishable") {
    SyntheticConfig cfg;
    cfg.n_train = 0;
    cfg.n_test_normal = 0;
    cfg.n_test_abnormal = 0;
    int textures_checked = 0;
    for (int t = 0; t < 100; ++t) {
        Image img = synthetic_texture(cfg, 0xd15717c7, t);
        for (auto kind : {StrongKind::rotation, StrongKind::permutation, StrongKind::cutout,
                          StrongKind::gaussian_noise}) {
            auto ds = enumerate_strong(kind, 4);
            for (size_t i = 0; i < ds.size(); ++i)
                for (size_t j = i + 1; j < ds.size(); ++j) {
                    Image a = apply_strong(img, ds[i], 5);
                    Image b = apply_strong(img, ds[j], 5);
                    float maxdiff = 0.f;
                    for (size_t p = 0; p < a.size(); ++p)
                        maxdiff = std::max(maxdiff, std::abs(a.pix[p] - b.pix[p]));
                    CHECK(maxdiff > 0.f);
                }
        }
        ++textures_checked;
    }
    CHECK(textures_checked == 100);
}

TEST_CASE("patch pair sampling: labels, determinism, reassembly") {
    Image img = random_image(96, 96, 1, 20);

    // direct-above convention
    bool saw_above = false;
    std::set<int> labels;
    for (uint64_t s = 0; s < 2000 && !(saw_above && labels.size() == 8); ++s) {
        PatchPair pp = sample_patch_pair(img, 32, s);
        labels.insert(pp.position_label);
        if (pp.position_label == 1) {
            // N slot: patch_b is directly above patch_a
            Image expect = crop_image(img, pp.anchor_y - 32, pp.anchor_x, 32, 32);
            CHECK(pp.patch_b.pix == expect.pix);
            saw_above = true;
        }
    }
    CHECK(saw_above);
    CHECK(labels.size() == 8);  // empirical coverage of all 8 labels

    PatchPair a = sample_patch_pair(img, 32, 99);
    PatchPair b = sample_patch_pair(img, 32, 99);
    CHECK(a.position_label == b.position_label);
    CHECK(a.patch_a.pix == b.patch_a.pix);
    CHECK(a.patch_b.pix == b.patch_b.pix);

    CHECK_THROWS(sample_patch_pair(img, 33, 0));

    // reassembling the 3x3 neighbourhood reproduces the image region
    PatchPair pp = sample_patch_pair(img, 32, 5);
    Image region = crop_image(img, pp.anchor_y - 32, pp.anchor_x - 32, 96, 96);
    for (int ty = 0; ty < 3; ++ty)
        for (int tx = 0; tx < 3; ++tx) {
            Image tile = crop_image(img, pp.anchor_y + (ty - 1) * 32, pp.anchor_x + (tx - 1) * 32, 32, 32);
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    CHECK(tile.at(y, x, 0) == region.at(ty * 32 + y, tx * 32 + x, 0));
        }
}

TEST_CASE("descriptor JSON round trip") {
    for (auto kind : {StrongKind::rotation, StrongKind::permutation, StrongKind::cutout,
                      StrongKind::gaussian_noise}) {
        for (const auto& d : enumerate_strong(kind, 4)) {
            auto j = d.to_json();
            CHECK(AugmentationDescriptor::from_json(j) == d);
        }
    }
}
