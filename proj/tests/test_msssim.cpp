#include <doctest.h>

#include <cmath>
#include <vector>

#include "core/rng.hpp"
#include "detect/msssim.hpp"
#include "gradcheck.hpp"
#include "msssim_reference.hpp"

using namespace ccd;
using ccd::testing::reference_ms_ssim;

namespace {

Image random_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, 1);
    for (float& v : img.pix) v = static_cast<float>(rng.uniform());
    return img;
}

}  // namespace

TEST_CASE("ms_ssim agrees with direct-formula reference on 16 random 64x64 pairs") {
    const MsSsimConfig cfg = MsSsimConfig::for_size(64);
    CHECK(cfg.n_scales == 3);
    for (int t = 0; t < 16; ++t) {
        Image x = random_image(64, 64, 100 + static_cast<uint64_t>(t));
        Image y = random_image(64, 64, 200 + static_cast<uint64_t>(t));
        const double got = ms_ssim_value(x, y, cfg);
        const double want = reference_ms_ssim(x, y, cfg);
        CHECK(std::abs(got - want) < 1e-6);
    }
}

TEST_CASE("ms_ssim identity, symmetry and bounds") {
    for (int t = 0; t < 4; ++t) {
        Image x = random_image(64, 64, 300 + static_cast<uint64_t>(t));
        Image y = random_image(64, 64, 400 + static_cast<uint64_t>(t));
        CHECK(std::abs(ms_ssim_value(x, x) - 1.0) < 1e-6);
        CHECK(ms_ssim_value(x, y) == ms_ssim_value(y, x));  // exact symmetry
        CHECK(ms_ssim_value(x, y) > 0.0);
        CHECK(ms_ssim_value(x, y) <= 1.0);
    }
}

TEST_CASE("ms_ssim of a checkerboard vs its inverse is tiny") {
    Image x(64, 64, 1);
    for (int y = 0; y < 64; ++y)
        for (int c = 0; c < 64; ++c) x.at(y, c, 0) = ((y / 4 + c / 4) % 2) ? 1.f : 0.f;
    Image inv = x;
    for (float& v : inv.pix) v = 1.f - v;
    CHECK(ms_ssim_value(x, inv) < 0.1);
}

TEST_CASE("local ms_ssim: identity, degenerate single patch, decomposition") {
    Image x = random_image(64, 64, 500);
    CHECK(std::abs(local_ms_ssim_value(x, x, 32) - 1.0) < 1e-9);

    Image y = random_image(64, 64, 501);
    CHECK(local_ms_ssim_value(x, y, 64) == doctest::Approx(ms_ssim_value(x, y)).epsilon(1e-12));

    // differ in exactly one of 4 patches: mean decomposes per patch
    Image z = x;
    for (int yy = 0; yy < 32; ++yy)
        for (int xx = 0; xx < 32; ++xx) z.at(yy, xx, 0) = y.at(yy, xx, 0);
    Image px(32, 32, 1), pz(32, 32, 1);
    for (int yy = 0; yy < 32; ++yy)
        for (int xx = 0; xx < 32; ++xx) {
            px.at(yy, xx, 0) = x.at(yy, xx, 0);
            pz.at(yy, xx, 0) = z.at(yy, xx, 0);
        }
    const double expect = (3.0 + ms_ssim_value(px, pz, MsSsimConfig::for_size(32))) / 4.0;
    CHECK(local_ms_ssim_value(x, z, 32) == doctest::Approx(expect).epsilon(1e-9));

    CHECK_THROWS(local_ms_ssim_value(x, y, 5));  // 5 does not divide 64
}

TEST_CASE("reconstruction loss reductions") {
    Image x = random_image(64, 64, 600);

    auto vx = nn::Var<double>::constant(image_to_tensor_t<double>(x));
    CHECK(nn::reconstruction_loss(vx, vx, 0.5, 0.5, 32).item() == doctest::Approx(0.0).epsilon(1e-9));

    // rho = 1: exact mean absolute error
    Image zeros(64, 64, 1, 0.f), halves(64, 64, 1, 0.5f);
    auto v0 = nn::Var<double>::constant(image_to_tensor_t<double>(zeros));
    auto vh = nn::Var<double>::constant(image_to_tensor_t<double>(halves));
    CHECK(nn::reconstruction_loss(v0, vh, 1.0, 0.5, 32).item() == doctest::Approx(0.5).epsilon(1e-12));

    // rho = 0, nu = 1: 1 - m_G
    Image y = random_image(64, 64, 601);
    auto vy = nn::Var<double>::constant(image_to_tensor_t<double>(y));
    CHECK(nn::reconstruction_loss(vx, vy, 0.0, 1.0, 32).item() ==
          doctest::Approx(1.0 - ms_ssim_value(x, y)).epsilon(1e-9));

    CHECK(nn::reconstruction_loss(vx, vy, 0.5, 0.5, 32).item() >= 0.0);
}

TEST_CASE("ms_ssim and reconstruction loss gradcheck") {
    Rng rng(700);
    // correlated pair keeps cs away from the clamp
    Tensor<double> x({1, 1, 16, 16});
    Tensor<double> y({1, 1, 16, 16});
    for (int64_t i = 0; i < x.numel(); ++i) {
        x[i] = rng.uniform(0.2, 0.8);
        y[i] = x[i] + rng.uniform(-0.05, 0.05);
    }
    const MsSsimConfig cfg = MsSsimConfig::for_size(16);
    auto f = [cfg](std::vector<nn::Var<double>>& v) { return nn::ms_ssim(v[0], v[1], cfg); };
    CHECK(ccd::testing::max_rel_grad_error(f, {x, y}, 20, 7) < 1e-3);

    auto g = [](std::vector<nn::Var<double>>& v) {
        return nn::reconstruction_loss(v[0], v[1], 0.5, 0.5, 8);
    };
    CHECK(ccd::testing::max_rel_grad_error(g, {x, y}, 20, 8) < 1e-3);
}
