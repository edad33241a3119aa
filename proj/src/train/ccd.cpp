#include "train/ccd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "core/rng.hpp"

namespace ccd {

void CCDTrainConfig::validate() const {
    if (temperature <= 0.f) throw std::invalid_argument("ccd config: temperature must be > 0");
    if (batch_size < 2) throw std::invalid_argument("ccd config: batch_size must be >= 2");
    if (epochs < 0) throw std::invalid_argument("ccd config: epochs must be >= 0");
    if (lr <= 0.f) throw std::invalid_argument("ccd config: lr must be > 0");
    if (momentum < 0.f || momentum >= 1.f)
        throw std::invalid_argument("ccd config: momentum must be in [0,1)");
    if (patch_size < 0) throw std::invalid_argument("ccd config: patch_size must be >= 0");
}

nlohmann::json CCDTrainConfig::to_json() const {
    return {{"batch_size", batch_size}, {"lr", lr},
            {"epochs", epochs},         {"temperature", temperature},
            {"w_con", w_con},           {"w_cla", w_cla},
            {"w_pos", w_pos},           {"momentum", momentum},
            {"cosine_decay", cosine_decay}, {"seed", seed},
            {"strict_eq2", strict_eq2}, {"deterministic", deterministic},
            {"patch_size", patch_size}};
}

CCDTrainConfig CCDTrainConfig::from_json(const nlohmann::json& j) {
    CCDTrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.temperature = j.value("temperature", c.temperature);
    c.w_con = j.value("w_con", c.w_con);
    c.w_cla = j.value("w_cla", c.w_cla);
    c.w_pos = j.value("w_pos", c.w_pos);
    c.momentum = j.value("momentum", c.momentum);
    c.cosine_decay = j.value("cosine_decay", c.cosine_decay);
    c.seed = j.value("seed", c.seed);
    c.strict_eq2 = j.value("strict_eq2", c.strict_eq2);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.validate();
    return c;
}

// Largest multiple of 16 such that a 3x3 patch grid still fits; the
// encoder's stride-16 pyramid needs multiples of 16.
int derive_patch_size(int input_size) {
    int p = (input_size / 3) / 16 * 16;
    if (p < 16) throw std::invalid_argument("image too small for patch pairs");
    return p;
}

namespace {

void copy_into(Tensor<float>& dst, int64_t row, const Image& img) {
    // HWC -> CHW
    const int64_t c = img.c, h = img.h, w = img.w;
    float* out = dst.data.data() + row * c * h * w;
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                out[(ch * h + y) * w + x] = img.pix[(y * w + x) * c + ch];
}

}  // namespace

CCDBatch build_batch(const std::vector<const Image*>& images,
                     const std::vector<AugmentationDescriptor>& descriptors,
                     const WeakAugConfig& weak, int patch_size, uint64_t seed, bool strict_eq2) {
    const int64_t b = static_cast<int64_t>(images.size());
    if (b < 2) throw std::invalid_argument("build_batch: need at least 2 images");
    if (descriptors.empty()) throw std::invalid_argument("build_batch: empty strong set");
    const Image& first = *images[0];
    for (const Image* im : images)
        if (!im->same_shape(first)) throw std::invalid_argument("build_batch: mixed image shapes");
    if (patch_size <= 0) patch_size = derive_patch_size(std::min(first.h, first.w));

    Rng rng(seed_combine(seed, 0x62617463ULL));
    CCDBatch out;
    out.strong_index = static_cast<int>(rng.uniform_int(static_cast<int64_t>(descriptors.size())));
    out.anchors = Tensor<float>({b, first.c, first.h, first.w});
    out.positives = Tensor<float>({b, first.c, first.h, first.w});
    out.cla_views = Tensor<float>({b, first.c, first.h, first.w});
    out.patch_a = Tensor<float>({b, first.c, patch_size, patch_size});
    out.patch_b = Tensor<float>({b, first.c, patch_size, patch_size});
    out.cla_labels.resize(b);
    out.patch_labels.resize(b);

    for (int64_t i = 0; i < b; ++i) {
        const uint64_t si = seed_combine(seed, static_cast<uint64_t>(i));
        const Image strong = apply_strong(*images[i], descriptors[out.strong_index],
                                          seed_combine(si, 0x73747267ULL));
        copy_into(out.anchors, i, apply_weak(strong, weak, seed_combine(si, 1)));
        copy_into(out.positives, i, apply_weak(strong, weak, seed_combine(si, 2)));

        const int ji = static_cast<int>(Rng(seed_combine(si, 3))
                                            .uniform_int(static_cast<int64_t>(descriptors.size())));
        out.cla_labels[i] = ji;
        copy_into(out.cla_views, i,
                  apply_strong(*images[i], descriptors[ji], seed_combine(si, 4)));

        const PatchPair pp = sample_patch_pair(*images[i], patch_size, seed_combine(si, 5));
        out.patch_labels[i] = pp.position_label;
        copy_into(out.patch_a, i, pp.patch_a);
        copy_into(out.patch_b, i, pp.patch_b);
    }

    if (strict_eq2) {
        out.strict_anchors.resize(b);
        out.strict_positives.resize(b);
        out.strict_negatives.resize(b);
        for (int64_t i = 0; i < b; ++i) {
            const uint64_t si = seed_combine(seed, static_cast<uint64_t>(i), 0x73747263ULL);
            const int ji = static_cast<int>(
                Rng(si).uniform_int(static_cast<int64_t>(descriptors.size())));
            const Image strong =
                apply_strong(*images[i], descriptors[ji], seed_combine(si, 1));
            out.strict_anchors[i] = Tensor<float>({1, first.c, first.h, first.w});
            out.strict_positives[i] = Tensor<float>({1, first.c, first.h, first.w});
            copy_into(out.strict_anchors[i], 0, apply_weak(strong, weak, seed_combine(si, 2)));
            copy_into(out.strict_positives[i], 0, apply_weak(strong, weak, seed_combine(si, 3)));
            out.strict_negatives[i] = Tensor<float>({b - 1, first.c, first.h, first.w});
            int64_t row = 0;
            for (int64_t k = 0; k < b; ++k) {
                if (k == i) continue;
                const Image neg_strong = apply_strong(
                    *images[k], descriptors[ji], seed_combine(si, 4, static_cast<uint64_t>(k)));
                copy_into(out.strict_negatives[i], row++,
                          apply_weak(neg_strong, weak, seed_combine(si, 5, static_cast<uint64_t>(k))));
            }
        }
    }
    return out;
}

LossBreakdown CCDLossGraph::values() const {
    LossBreakdown b;
    b.l_con = l_con.item();
    b.l_cla = l_cla.item();
    b.l_pos = l_pos.item();
    b.total = total.item();
    return b;
}

CCDLossGraph ccd_loss_graph(const CCDBatch& batch, const ModelBundle& bundle,
                            const CCDTrainConfig& cfg) {
    cfg.validate();
    nn::Var<float> l_con;
    if (cfg.strict_eq2 && !batch.strict_anchors.empty()) {
        const size_t b = batch.strict_anchors.size();
        for (size_t i = 0; i < b; ++i) {
            auto za = bundle.encode(nn::Var<float>::constant(batch.strict_anchors[i]));
            auto zp = bundle.encode(nn::Var<float>::constant(batch.strict_positives[i]));
            auto zn = bundle.encode(nn::Var<float>::constant(batch.strict_negatives[i]));
            auto li = contrastive_distribution_loss(za, zp, zn, cfg.temperature);
            l_con = i == 0 ? li : nn::add(l_con, li);
        }
        l_con = nn::mul_scalar(l_con, 1.f / static_cast<float>(b));
    } else {
        auto z_a = bundle.encode(nn::Var<float>::constant(batch.anchors));
        auto z_p = bundle.encode(nn::Var<float>::constant(batch.positives));
        l_con = in_batch_contrastive_loss(z_a, z_p, cfg.temperature);
    }

    auto z_c = bundle.encode(nn::Var<float>::constant(batch.cla_views));
    auto l_cla =
        augmentation_classification_loss(bundle.classify_augmentation(z_c), batch.cla_labels);

    auto z_pa = bundle.encode(nn::Var<float>::constant(batch.patch_a));
    auto z_pb = bundle.encode(nn::Var<float>::constant(batch.patch_b));
    auto l_pos =
        position_prediction_loss(bundle.classify_position(z_pa, z_pb), batch.patch_labels);

    auto total = nn::add(nn::add(nn::mul_scalar(l_con, cfg.w_con), nn::mul_scalar(l_cla, cfg.w_cla)),
                         nn::mul_scalar(l_pos, cfg.w_pos));
    return {l_con, l_cla, l_pos, total};
}

LossBreakdown ccd_total_loss(const CCDBatch& batch, const ModelBundle& bundle,
                             const CCDTrainConfig& cfg) {
    LossBreakdown b = ccd_loss_graph(batch, bundle, cfg).values();
    if (!std::isfinite(b.total)) throw std::runtime_error("ccd loss is not finite");
    return b;
}

Sgd::Sgd(std::vector<Param*> ps, float momentum_) : params(std::move(ps)), momentum(momentum_) {
    velocity.reserve(params.size());
    for (Param* p : params) velocity.push_back(Tensor<float>::zeros(p->value().shape));
}

void Sgd::step(float lr) {
    for (size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k]->value();
        const auto& g = params[k]->grad();
        auto& v = velocity[k];
        const bool has_grad = g.numel() == p.numel();
        for (int64_t i = 0; i < p.numel(); ++i) {
            v[i] = momentum * v[i] + (has_grad ? g[i] : 0.f);
            p[i] -= lr * v[i];
        }
    }
}

void Sgd::zero_grads() {
    for (Param* p : params) p->zero_grad();
}

ModelBundle pretrain(const std::vector<ImageSample>& train_set, const CCDTrainConfig& tcfg,
                     const EncoderConfig& ecfg,
                     const std::vector<AugmentationDescriptor>& descriptors,
                     const WeakAugConfig& weak, std::ostream* log) {
    tcfg.validate();
    ecfg.validate();
    if (train_set.empty()) throw std::invalid_argument("pretrain: empty dataset");
    for (const auto& s : train_set)
        if (s.label == Label::abnormal)
            throw std::invalid_argument("pretrain: dataset must be normal-only");

    ModelBundle bundle = ModelBundle::create(ecfg, descriptors, tcfg.seed);
    const int patch_size =
        tcfg.patch_size > 0 ? tcfg.patch_size : derive_patch_size(ecfg.input_size);

    Sgd opt(bundle.params_with_prefix(""), tcfg.momentum);
    const int64_t n = static_cast<int64_t>(train_set.size());
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        Rng order_rng(seed_combine(tcfg.seed, static_cast<uint64_t>(epoch), 0x6f726472ULL));
        std::vector<int> order = order_rng.permutation(static_cast<int>(n));
        const float lr = tcfg.cosine_decay
                             ? tcfg.lr * 0.5f *
                                   (1.f + std::cos(float(M_PI) * epoch / std::max(1, tcfg.epochs)))
                             : tcfg.lr;

        LossBreakdown epoch_loss;
        int steps = 0;
        for (int64_t off = 0; off + 2 <= n; off += tcfg.batch_size) {
            const int64_t bs = std::min<int64_t>(tcfg.batch_size, n - off);
            if (bs < 2) break;
            std::vector<const Image*> imgs(bs);
            for (int64_t i = 0; i < bs; ++i) imgs[i] = &train_set[order[off + i]].pixels;
            CCDBatch batch =
                build_batch(imgs, descriptors, weak, patch_size,
                            seed_combine(tcfg.seed, static_cast<uint64_t>(epoch),
                                         static_cast<uint64_t>(off)),
                            tcfg.strict_eq2);
            CCDLossGraph g = ccd_loss_graph(batch, bundle, tcfg);
            const LossBreakdown vals = g.values();
            if (!std::isfinite(vals.total))
                throw std::runtime_error("pretrain: non-finite loss at epoch " +
                                         std::to_string(epoch));
            opt.zero_grads();
            nn::backward(g.total);
            opt.step(lr);
            epoch_loss.l_con += vals.l_con;
            epoch_loss.l_cla += vals.l_cla;
            epoch_loss.l_pos += vals.l_pos;
            epoch_loss.total += vals.total;
            ++steps;
        }
        if (steps == 0) throw std::invalid_argument("pretrain: dataset smaller than 2 samples");
        if (log) {
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            (*log) << "epoch=" << epoch << " l_con=" << epoch_loss.l_con / steps
                   << " l_cla=" << epoch_loss.l_cla / steps
                   << " l_pos=" << epoch_loss.l_pos / steps
                   << " total=" << epoch_loss.total / steps << " lr=" << lr
                   << " wall_time=" << wall << "\n";
        }
    }
    if (!bundle.params.all_finite()) throw std::runtime_error("pretrain: non-finite parameters");
    return bundle;
}

double strong_aug_accuracy(const ModelBundle& bundle, const std::vector<ImageSample>& samples,
                           uint64_t seed) {
    if (samples.empty()) throw std::invalid_argument("strong_aug_accuracy: empty sample set");
    const int64_t k = static_cast<int64_t>(bundle.aug_descriptors.size());
    int64_t correct = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const uint64_t si = seed_combine(seed, static_cast<uint64_t>(i), 0x61636375ULL);
        const int label = static_cast<int>(Rng(si).uniform_int(k));
        const Image view =
            apply_strong(samples[i].pixels, bundle.aug_descriptors[label], seed_combine(si, 1));
        Tensor<float> x({1, view.c, view.h, view.w});
        copy_into(x, 0, view);
        auto probs = bundle.classify_augmentation(bundle.encode(nn::Var<float>::constant(x)));
        const auto& p = probs.value();
        int arg = 0;
        for (int64_t j = 1; j < k; ++j)
            if (p[j] > p[arg]) arg = static_cast<int>(j);
        if (arg == label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double patch_position_accuracy(const ModelBundle& bundle, const std::vector<ImageSample>& samples,
                               int patch_size, uint64_t seed) {
    if (samples.empty()) throw std::invalid_argument("patch_position_accuracy: empty sample set");
    int64_t correct = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const uint64_t si = seed_combine(seed, static_cast<uint64_t>(i), 0x706f7361ULL);
        const PatchPair pp = sample_patch_pair(samples[i].pixels, patch_size, si);
        Tensor<float> a({1, pp.patch_a.c, pp.patch_a.h, pp.patch_a.w});
        Tensor<float> b({1, pp.patch_b.c, pp.patch_b.h, pp.patch_b.w});
        copy_into(a, 0, pp.patch_a);
        copy_into(b, 0, pp.patch_b);
        auto probs = bundle.classify_position(bundle.encode(nn::Var<float>::constant(a)),
                                              bundle.encode(nn::Var<float>::constant(b)));
        const auto& p = probs.value();
        int arg = 0;
        for (int j = 1; j < 8; ++j)
            if (p[j] > p[arg]) arg = j;
        if (arg == pp.position_label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace ccd
