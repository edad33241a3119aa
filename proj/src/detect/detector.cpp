#include "detect/detector.hpp"

#include <algorithm>
#include <cmath>

#include "core/rng.hpp"
#include "train/ccd.hpp"

namespace ccd {

const char* detector_kind_name(DetectorKind k) {
    switch (k) {
        case DetectorKind::msssim_ae: return "msssim_ae";
        case DetectorKind::igd: return "igd";
        case DetectorKind::fanogan: return "fanogan";
    }
    return "?";
}

DetectorKind detector_kind_from_name(const std::string& s) {
    if (s == "msssim_ae") return DetectorKind::msssim_ae;
    if (s == "igd") return DetectorKind::igd;
    if (s == "fanogan") return DetectorKind::fanogan;
    throw std::invalid_argument("unknown detector kind: " + s);
}

const char* detector_scale_name(DetectorScale s) {
    return s == DetectorScale::global_256 ? "global" : "local";
}

DetectorScale detector_scale_from_name(const std::string& s) {
    if (s == "global" || s == "global_256") return DetectorScale::global_256;
    if (s == "local" || s == "local_32") return DetectorScale::local_32;
    throw std::invalid_argument("unknown detector scale: " + s);
}

void DetectorConfig::validate() const {
    auto in01 = [](float v) { return v >= 0.f && v <= 1.f; };
    if (!in01(xi) || !in01(rho) || !in01(nu))
        throw std::invalid_argument("detector config: xi/rho/nu must lie in [0,1]");
    if (kappa < 0.f) throw std::invalid_argument("detector config: kappa must be >= 0");
    if (epochs < 0 || batch_size < 1 || lr <= 0.f)
        throw std::invalid_argument("detector config: bad training parameters");
    if (instance_size < 0 || instance_size % 16 != 0)
        throw std::invalid_argument("detector config: instance_size must be a multiple of 16");
    if (local_patch < 0) throw std::invalid_argument("detector config: bad local_patch");
}

int DetectorConfig::resolved_instance_size(int model_input) const {
    if (instance_size > 0) return instance_size;
    return scale == DetectorScale::global_256 ? model_input : 32;
}

int DetectorConfig::resolved_local_patch(int instance) const {
    if (local_patch > 0) return local_patch;
    return std::max(8, instance / 2);
}

nlohmann::json DetectorConfig::to_json() const {
    return {{"kind", detector_kind_name(kind)},
            {"xi", xi},
            {"rho", rho},
            {"nu", nu},
            {"kappa", kappa},
            {"scale", detector_scale_name(scale)},
            {"instance_size", instance_size},
            {"local_patch", local_patch},
            {"epochs", epochs},
            {"lr", lr},
            {"momentum", momentum},
            {"batch_size", batch_size},
            {"freeze_encoder", freeze_encoder},
            {"init", init == DetectorInit::pretrained ? "pretrained" : "random"},
            {"seed", seed}};
}

DetectorConfig DetectorConfig::from_json(const nlohmann::json& j) {
    DetectorConfig c;
    if (j.contains("kind")) c.kind = detector_kind_from_name(j.at("kind").get<std::string>());
    c.xi = j.value("xi", c.xi);
    c.rho = j.value("rho", c.rho);
    c.nu = j.value("nu", c.nu);
    c.kappa = j.value("kappa", c.kappa);
    if (j.contains("scale")) c.scale = detector_scale_from_name(j.at("scale").get<std::string>());
    c.instance_size = j.value("instance_size", c.instance_size);
    c.local_patch = j.value("local_patch", c.local_patch);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.freeze_encoder = j.value("freeze_encoder", c.freeze_encoder);
    if (j.contains("init"))
        c.init = j.at("init").get<std::string>() == "random" ? DetectorInit::random
                                                             : DetectorInit::pretrained;
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

double msssim_score_from_terms(double m_g, double m_l, double nu) {
    return 1.0 - (nu * m_g + (1.0 - nu) * m_l);
}

double igd_score_from_terms(double l_rec, double h_psi, double xi) {
    return xi * l_rec + (1.0 - xi) * (1.0 - h_psi);
}

double fanogan_score_from_terms(double pixel_norm, double latent_norm, double kappa) {
    return pixel_norm + kappa * latent_norm;
}

namespace {

Image tensor_row_to_image(const Tensor<float>& t, int64_t row) {
    const int c = static_cast<int>(t.dim(1)), h = static_cast<int>(t.dim(2)),
              w = static_cast<int>(t.dim(3));
    Image img(h, w, c);
    const float* in = t.data.data() + row * c * h * w;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img.at(y, x, ch) = in[(ch * h + y) * w + x];
    return img;
}

struct Scored {
    Image recon;
    Tensor<float> z;
    Tensor<float> z_recon;
};

Scored autoencode(const Image& x, const DetectorBundle& d, bool need_latents) {
    if (!d.trained) throw std::logic_error("detector bundle is untrained");
    auto xt = nn::Var<float>::constant(image_to_tensor(x));
    auto z = d.model.encode(xt);
    auto recon = d.model.decode(z);
    Scored s;
    s.recon = tensor_row_to_image(recon.value(), 0);
    if (need_latents) {
        s.z = z.value();
        s.z_recon = d.model.encode(recon).value();
    }
    return s;
}

double mae(const Image& a, const Image& b) {
    double s = 0;
    for (size_t i = 0; i < a.pix.size(); ++i) s += std::abs(double(a.pix[i]) - double(b.pix[i]));
    return s / static_cast<double>(a.pix.size());
}

double rec_terms(const Image& x, const Image& recon, const DetectorConfig& cfg, double* m_g_out,
                 double* m_l_out) {
    const int patch = cfg.resolved_local_patch(std::min(x.h, x.w));
    const double m_g = ms_ssim_value(x, recon);
    const double m_l = local_ms_ssim_value(x, recon, patch);
    if (m_g_out) *m_g_out = m_g;
    if (m_l_out) *m_l_out = m_l;
    return cfg.rho * mae(x, recon) +
           (1.0 - cfg.rho) * (1.0 - (cfg.nu * m_g + (1.0 - cfg.nu) * m_l));
}

double rms(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace

double score_msssim_ae(const Image& x, const DetectorBundle& d) {
    Scored s = autoencode(x, d, false);
    double m_g = 0, m_l = 0;
    rec_terms(x, s.recon, d.config, &m_g, &m_l);
    return msssim_score_from_terms(m_g, m_l, d.config.nu);
}

double score_igd(const Image& x, const DetectorBundle& d) {
    Scored s = autoencode(x, d, true);
    const double l_rec = rec_terms(x, s.recon, d.config, nullptr, nullptr);
    auto z = nn::Var<float>::constant(s.z);
    const double h_psi = d.model.normal_score(z).value()[0];
    return igd_score_from_terms(l_rec, h_psi, d.config.xi);
}

double score_fanogan(const Image& x, const DetectorBundle& d) {
    Scored s = autoencode(x, d, true);
    const double pix = rms(x.pix, s.recon.pix);
    const double lat = rms(s.z.data, s.z_recon.data);
    return fanogan_score_from_terms(pix, lat, d.config.kappa);
}

double score_image(const Image& x, const DetectorBundle& d) {
    switch (d.config.kind) {
        case DetectorKind::msssim_ae: return score_msssim_ae(x, d);
        case DetectorKind::igd: return score_igd(x, d);
        case DetectorKind::fanogan: return score_fanogan(x, d);
    }
    throw std::logic_error("unreachable");
}

double score_sample(const Image& x, const DetectorBundle& d, int stride) {
    const int inst = d.config.resolved_instance_size(d.model.config.input_size);
    if (d.config.scale == DetectorScale::global_256) {
        const Image r = (x.h == inst && x.w == inst) ? x : resize_bilinear(x, inst, inst);
        return score_image(r, d);
    }
    if (x.h < inst || x.w < inst)
        throw std::invalid_argument("score_sample: image smaller than the local window");
    if (stride <= 0) stride = std::max(1, inst / 2);
    double best = -1e300;
    for (int y = 0;; y += stride) {
        const int yy = std::min(y, x.h - inst);
        for (int xx0 = 0;; xx0 += stride) {
            const int xx = std::min(xx0, x.w - inst);
            best = std::max(best, score_image(crop_image(x, yy, xx, inst, inst), d));
            if (xx == x.w - inst) break;
        }
        if (yy == x.h - inst) break;
    }
    return best;
}

namespace {

// Copy every parameter whose name and shape match; the decoder is rebuilt
// when the instance size differs from the pretraining size.
void copy_matching_params(const ModelBundle& src, ModelBundle& dst) {
    for (const auto& [name, var] : src.params.items)
        if (dst.params.has(name) && dst.params.get(name).value().shape == var.value().shape)
            dst.params.get(name).value() = var.value();
}

}  // namespace

DetectorBundle train_detector(const ModelBundle& pretrained, const std::vector<ImageSample>& train,
                              const DetectorConfig& cfg, std::ostream* log) {
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("train_detector: empty dataset");
    for (const auto& s : train)
        if (s.label == Label::abnormal)
            throw std::invalid_argument("train_detector: dataset must be normal-only");

    const int inst = cfg.resolved_instance_size(pretrained.config.input_size);
    DetectorBundle d;
    d.config = cfg;

    if (cfg.init == DetectorInit::random) {
        EncoderConfig ec = pretrained.config;
        ec.input_size = inst;
        d.model = ModelBundle::create(ec, pretrained.aug_descriptors,
                                      seed_combine(cfg.seed, 0x72616e64ULL));
    } else if (inst == pretrained.config.input_size) {
        d.model = pretrained.clone();
    } else {
        EncoderConfig ec = pretrained.config;
        ec.input_size = inst;
        d.model = ModelBundle::create(ec, pretrained.aug_descriptors,
                                      seed_combine(cfg.seed, 0x696e6974ULL));
        copy_matching_params(pretrained, d.model);
    }

    std::vector<Param*> opt_params = d.model.params_with_prefix("dec.");
    if (cfg.kind == DetectorKind::igd)
        for (auto* p : d.model.params_with_prefix("psi.")) opt_params.push_back(p);
    if (!cfg.freeze_encoder) {
        for (auto* p : d.model.params_with_prefix("enc.")) opt_params.push_back(p);
        for (auto* p : d.model.params_with_prefix("proj.")) opt_params.push_back(p);
    }
    Sgd opt(opt_params, cfg.momentum);

    const int local_patch = cfg.resolved_local_patch(inst);
    const int64_t n = static_cast<int64_t>(train.size());

    auto instance_of = [&](int64_t idx, uint64_t seed) {
        const Image& img = train[idx].pixels;
        if (cfg.scale == DetectorScale::global_256)
            return (img.h == inst && img.w == inst) ? img : resize_bilinear(img, inst, inst);
        if (img.h < inst || img.w < inst)
            throw std::invalid_argument("train_detector: image smaller than the local window");
        Rng rng(seed);
        const int y = static_cast<int>(rng.uniform_int(img.h - inst + 1));
        const int x = static_cast<int>(rng.uniform_int(img.w - inst + 1));
        return crop_image(img, y, x, inst, inst);
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng(seed_combine(cfg.seed, static_cast<uint64_t>(epoch), 0x64657462ULL));
        std::vector<int> order = order_rng.permutation(static_cast<int>(n));
        const float lr =
            cfg.lr * 0.5f * (1.f + std::cos(float(M_PI) * epoch / std::max(1, cfg.epochs)));
        double epoch_loss = 0;
        int steps = 0;
        for (int64_t off = 0; off < n; off += cfg.batch_size) {
            const int64_t bs = std::min<int64_t>(cfg.batch_size, n - off);
            const uint64_t step_seed =
                seed_combine(cfg.seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(off));

            Tensor<float> xb({bs, pretrained.config.in_channels, inst, inst});
            std::vector<Image> crops(bs);
            for (int64_t i = 0; i < bs; ++i) {
                crops[i] = instance_of(order[off + i], seed_combine(step_seed, uint64_t(i)));
                const Tensor<float> one = image_to_tensor(crops[i]);
                std::copy(one.data.begin(), one.data.end(),
                          xb.data.begin() + i * one.numel());
            }
            auto x = nn::Var<float>::constant(xb);
            auto z = d.model.encode(x);
            auto recon = d.model.decode(z);

            const float rho = cfg.kind == DetectorKind::msssim_ae ? 0.f : cfg.rho;
            auto loss = nn::reconstruction_loss(x, recon, rho, cfg.nu, local_patch);

            if (cfg.kind == DetectorKind::igd) {
                // h_psi: normal embeddings -> 1, strong-augmented -> 0
                Tensor<float> ab({bs, pretrained.config.in_channels, inst, inst});
                Rng arng(seed_combine(step_seed, 0x70736575ULL));
                for (int64_t i = 0; i < bs; ++i) {
                    const auto& descs = d.model.aug_descriptors;
                    const auto& dsc = descs[arng.uniform_int(int64_t(descs.size()))];
                    const Tensor<float> one = image_to_tensor(
                        apply_strong(crops[i], dsc, seed_combine(step_seed, 0x61756766ULL,
                                                                 static_cast<uint64_t>(i))));
                    std::copy(one.data.begin(), one.data.end(), ab.data.begin() + i * one.numel());
                }
                auto p_norm = nn::clamp_min(d.model.normal_score(z), 1e-7f);
                auto p_anom = d.model.normal_score(
                    d.model.encode(nn::Var<float>::constant(ab)));
                auto q_anom = nn::clamp_min(nn::add_scalar(nn::neg(p_anom), 1.f), 1e-7f);
                auto bce = nn::mul_scalar(
                    nn::add(nn::mean_all(nn::neg(nn::log_(p_norm))),
                            nn::mean_all(nn::neg(nn::log_(q_anom)))),
                    0.5f);
                loss = nn::add(loss, bce);
            } else if (cfg.kind == DetectorKind::fanogan) {
                auto z_recon = d.model.encode(recon);
                auto diff = nn::sub(z, z_recon);
                loss = nn::add(loss, nn::mul_scalar(nn::mean_all(nn::mul(diff, diff)), cfg.kappa));
            }

            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw std::runtime_error("train_detector: non-finite loss at epoch " +
                                         std::to_string(epoch));
            opt.zero_grads();
            nn::backward(loss);
            opt.step(lr);
            epoch_loss += lv;
            ++steps;
        }
        if (log)
            (*log) << "epoch=" << epoch << " loss=" << epoch_loss / std::max(1, steps)
                   << " lr=" << lr << "\n";
    }
    if (!d.model.params.all_finite())
        throw std::runtime_error("train_detector: non-finite parameters");
    d.trained = true;
    return d;
}

void save_detector(const DetectorBundle& d, const std::string& path) {
    nlohmann::json extra;
    extra["detector"] = d.config.to_json();
    extra["trained"] = d.trained;
    save_checkpoint(d.model, path, extra);
}

DetectorBundle load_detector(const std::string& path) {
    nlohmann::json extra;
    DetectorBundle d;
    d.model = load_checkpoint(path, &extra);
    if (!extra.contains("detector"))
        throw std::runtime_error("checkpoint does not hold a detector bundle");
    d.config = DetectorConfig::from_json(extra.at("detector"));
    d.trained = extra.value("trained", false);
    return d;
}

}  // namespace ccd
