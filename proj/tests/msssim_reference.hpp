#pragma once

#include <cmath>
#include <vector>

#include "detect/msssim.hpp"

namespace ccd::testing {

// ---------------------------------------------------------------------------
// Independent direct-formula MS-SSIM reference: 2-D Gaussian window applied
// by brute-force correlation, no shared code with the implementation.
// ---------------------------------------------------------------------------

struct Plane {
    int h = 0, w = 0;
    std::vector<double> v;
    Plane(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0.0) {}
    double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

Plane image_channel(const Image& img, int ch) {
    Plane p(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) p.at(y, x) = img.at(y, x, ch);
    return p;
}

Plane downsample2(const Plane& p) {
    Plane o(p.h / 2, p.w / 2);
    for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x)
            o.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) +
                                 p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
    return o;
}

// brute-force valid correlation with a 2-D window
Plane correlate(const Plane& p, const std::vector<std::vector<double>>& win) {
    const int k = static_cast<int>(win.size());
    Plane o(p.h - k + 1, p.w - k + 1);
    for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x) {
            double s = 0;
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) s += win[static_cast<size_t>(i)][static_cast<size_t>(j)] * p.at(y + i, x + j);
            o.at(y, x) = s;
        }
    return o;
}

double reference_ms_ssim(const Image& xi, const Image& yi, const MsSsimConfig& cfg) {
    const int k = cfg.window_size;
    std::vector<std::vector<double>> win(static_cast<size_t>(k), std::vector<double>(static_cast<size_t>(k)));
    double wsum = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double dy = i - k / 2, dx = j - k / 2;
            win[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                std::exp(-(dy * dy + dx * dx) / (2 * cfg.window_sigma * cfg.window_sigma));
            wsum += win[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
    for (auto& row : win)
        for (double& v : row) v /= wsum;

    const double c1 = 0.01 * cfg.data_range * 0.01 * cfg.data_range;
    const double c2 = 0.03 * cfg.data_range * 0.03 * cfg.data_range;

    double result = 1.0;
    for (int ch = 0; ch < xi.c; ++ch) {
        // per-channel reference; implementation averages channels inside the
        // moment maps, so feed it single-channel images in tests with c=1
        Plane x = image_channel(xi, ch), y = image_channel(yi, ch);
        double acc = 1.0;
        for (int s = 0; s < cfg.n_scales; ++s) {
            Plane mx = correlate(x, win), my = correlate(y, win);
            Plane xx = x, yy = y, xy = x;
            for (size_t i = 0; i < xx.v.size(); ++i) {
                xy.v[i] = x.v[i] * y.v[i];
                xx.v[i] *= xx.v[i];
                yy.v[i] *= yy.v[i];
            }
            Plane mxx = correlate(xx, win), myy = correlate(yy, win), mxy = correlate(xy, win);
            double cs_sum = 0, l_sum = 0;
            for (int y0 = 0; y0 < mx.h; ++y0)
                for (int x0 = 0; x0 < mx.w; ++x0) {
                    const double sx = mxx.at(y0, x0) - mx.at(y0, x0) * mx.at(y0, x0);
                    const double sy = myy.at(y0, x0) - my.at(y0, x0) * my.at(y0, x0);
                    const double sxy = mxy.at(y0, x0) - mx.at(y0, x0) * my.at(y0, x0);
                    cs_sum += (2 * sxy + c2) / (sx + sy + c2);
                    l_sum += (2 * mx.at(y0, x0) * my.at(y0, x0) + c1) /
                             (mx.at(y0, x0) * mx.at(y0, x0) + my.at(y0, x0) * my.at(y0, x0) + c1);
                }
            const double n = static_cast<double>(mx.h) * mx.w;
            const double cs = std::max(cs_sum / n, 1e-8);
            acc *= std::pow(cs, cfg.weights[static_cast<size_t>(s)]);
            if (s == cfg.n_scales - 1)
                acc *= std::pow(std::max(l_sum / n, 1e-8), cfg.weights[static_cast<size_t>(s)]);
            else {
                x = downsample2(x);
                y = downsample2(y);
            }
        }
        result = acc;  // single channel expected in these tests
    }
    return result;
}

}  // namespace ccd::testing
