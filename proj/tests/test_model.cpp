#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/rng.hpp"
#include "model/model.hpp"

using namespace ccd;
using nn::Var;

namespace {

ModelBundle default_bundle(uint64_t seed = 1) {
    EncoderConfig cfg;
    return ModelBundle::create(cfg, enumerate_strong(StrongKind::rotation, 4), seed);
}

Tensor<float> random_batch(int n, int c, int s, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t({n, c, s, s});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform());
    return t;
}

}  // namespace

TEST_CASE("encode: unit-norm 128-d rows, deterministic, shape errors") {
    ModelBundle b = default_bundle();
    auto x = Var<float>::constant(random_batch(3, 1, 64, 5));
    auto z = b.encode(x);
    REQUIRE(z.value().shape == std::vector<int64_t>{3, 128});
    for (int i = 0; i < 3; ++i) {
        float s = 0;
        for (int j = 0; j < 128; ++j) s += z.value()[i * 128 + j] * z.value()[i * 128 + j];
        CHECK(std::sqrt(s) == doctest::Approx(1.f).epsilon(1e-5));
    }
    auto z2 = b.encode(x);
    CHECK(z.value().data == z2.value().data);

    // identical duplicated inputs -> identical rows
    Tensor<float> dup({2, 1, 64, 64});
    for (int64_t i = 0; i < 64 * 64; ++i) dup[i] = dup[64 * 64 + i] = static_cast<float>(i % 7) / 7.f;
    auto zd = b.encode(Var<float>::constant(dup)).value();
    for (int j = 0; j < 128; ++j) CHECK(zd[j] == zd[128 + j]);

    CHECK_THROWS(b.encode(Var<float>::constant(random_batch(2, 3, 64, 6))));
}

TEST_CASE("decode: bounded output, shape round trip") {
    ModelBundle b = default_bundle();
    auto x = Var<float>::constant(random_batch(2, 1, 64, 7));
    auto z = b.encode(x);
    auto recon = b.decode(z);
    REQUIRE(recon.value().shape == x.value().shape);
    for (int64_t i = 0; i < recon.value().numel(); ++i) {
        CHECK(recon.value()[i] >= 0.f);
        CHECK(recon.value()[i] <= 1.f);
    }
    CHECK_THROWS(b.decode(x));  // wrong embedding arity
}

TEST_CASE("heads: simplex rows, arity, order sensitivity, sigmoid(0)") {
    ModelBundle b = default_bundle();
    auto x = Var<float>::constant(random_batch(4, 1, 64, 8));
    auto z = b.encode(x);

    auto pa = b.classify_augmentation(z);
    REQUIRE(pa.value().shape == std::vector<int64_t>{4, 4});
    for (int i = 0; i < 4; ++i) {
        float s = 0;
        for (int j = 0; j < 4; ++j) {
            s += pa.value()[i * 4 + j];
            CHECK(pa.value()[i * 4 + j] >= 0.f);
        }
        CHECK(s == doctest::Approx(1.f).epsilon(1e-6));
    }

    auto x2 = Var<float>::constant(random_batch(4, 1, 64, 9));
    auto z2 = b.encode(x2);
    auto pab = b.position_logits(z, z2).value();
    auto pba = b.position_logits(z2, z).value();
    REQUIRE(pab.shape == std::vector<int64_t>{4, 8});
    CHECK(pab.data != pba.data);  // concatenation is order-sensitive

    auto pp = b.classify_position(z, z2);
    for (int i = 0; i < 4; ++i) {
        float s = 0;
        for (int j = 0; j < 8; ++j) s += pp.value()[i * 8 + j];
        CHECK(s == doctest::Approx(1.f).epsilon(1e-6));
    }

    // zero psi -> sigmoid(0) = 0.5 everywhere
    for (auto* p : b.params_with_prefix("psi."))
        for (int64_t i = 0; i < p->value().numel(); ++i) p->value()[i] = 0.f;
    auto hs = b.normal_score(z);
    for (int i = 0; i < 4; ++i) CHECK(hs.value()[i] == doctest::Approx(0.5f).epsilon(1e-7));
}

TEST_CASE("parameter count is a pure function of the config") {
    ModelBundle b = default_bundle(1);
    ModelBundle b2 = default_bundle(2);
    CHECK(b.params.parameter_count() == b2.params.parameter_count());
    // frozen for the default config (small_cnn, base 32, dz 128, 1 channel, 64 px)
    CHECK(b.params.parameter_count() == 1446318);

    EncoderConfig rc;
    rc.backbone = Backbone::standard_resnet18;
    rc.input_size = 80;
    ModelBundle rb = ModelBundle::create(rc, enumerate_strong(StrongKind::rotation, 4), 3);
    CHECK(rb.params.parameter_count() == 14763214);
}

TEST_CASE("resnet18 backbone forward") {
    EncoderConfig rc;
    rc.backbone = Backbone::standard_resnet18;
    rc.input_size = 80;
    ModelBundle rb = ModelBundle::create(rc, enumerate_strong(StrongKind::rotation, 4), 3);
    auto z = rb.encode(Var<float>::constant(random_batch(1, 1, 80, 10)));
    REQUIRE(z.value().shape == std::vector<int64_t>{1, 128});
    float s = 0;
    for (int j = 0; j < 128; ++j) s += z.value()[j] * z.value()[j];
    CHECK(std::sqrt(s) == doctest::Approx(1.f).epsilon(1e-5));
}

TEST_CASE("checkpoint round trip is bit-exact and validates") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ccd_test_ckpt";
    fs::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();

    ModelBundle b = default_bundle(42);
    save_checkpoint(b, path, {{"note", "unit"}});

    nlohmann::json extra;
    ModelBundle r = load_checkpoint(path, &extra);
    CHECK(extra.at("note") == "unit");
    CHECK(r.config == b.config);
    REQUIRE(r.params.items.size() == b.params.items.size());
    for (size_t i = 0; i < b.params.items.size(); ++i) {
        CHECK(r.params.items[i].first == b.params.items[i].first);
        CHECK(r.params.items[i].second.value().data == b.params.items[i].second.value().data);
    }
    REQUIRE(r.aug_descriptors.size() == b.aug_descriptors.size());
    for (size_t i = 0; i < b.aug_descriptors.size(); ++i)
        CHECK(r.aug_descriptors[i] == b.aug_descriptors[i]);

    // stored descriptors reproduce identical strong augmentations
    Image img(8, 8, 1);
    Rng rng(4);
    for (float& v : img.pix) v = static_cast<float>(rng.uniform());
    CHECK(apply_strong(img, r.aug_descriptors[1], 3).pix ==
          apply_strong(img, b.aug_descriptors[1], 3).pix);

    // flipped magic bytes -> corrupt-file error
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XX", 2);
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("corrupt"), std::runtime_error);
}

TEST_CASE("encoder config validation") {
    EncoderConfig cfg;
    cfg.embed_dim = 4;
    CHECK_THROWS(cfg.validate());
    cfg = EncoderConfig{};
    cfg.backbone = Backbone::standard_resnet18;
    cfg.input_size = 64;  // small_cnn mandatory at <= 64
    CHECK_THROWS(cfg.validate());
    cfg = EncoderConfig{};
    cfg.input_size = 60;
    CHECK_THROWS(cfg.validate());
}
