#include "model/model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "core/rng.hpp"

using nlohmann::json;

namespace ccd {

using nn::Var;

void EncoderConfig::validate() const {
    if (embed_dim < 8) throw std::invalid_argument("encoder: embed_dim must be >= 8");
    if (input_size < 16 || input_size % 16 != 0)
        throw std::invalid_argument("encoder: input_size must be a positive multiple of 16");
    if (in_channels != 1 && in_channels != 3)
        throw std::invalid_argument("encoder: in_channels must be 1 or 3");
    if (input_size <= 64 && backbone != Backbone::small_cnn)
        throw std::invalid_argument("encoder: small_cnn is mandatory for input_size <= 64");
    if (projection_layers < 1 || projection_layers > 2)
        throw std::invalid_argument("encoder: projection_layers must be 1 or 2");
    if (base_channels < 4) throw std::invalid_argument("encoder: base_channels too small");
}

json EncoderConfig::to_json() const {
    return json{{"backbone", backbone == Backbone::small_cnn ? "small_cnn" : "standard_resnet18"},
                {"embed_dim", embed_dim},
                {"input_size", input_size},
                {"in_channels", in_channels},
                {"projection_layers", projection_layers},
                {"base_channels", base_channels}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
    EncoderConfig c;
    const std::string bb = j.value("backbone", "small_cnn");
    if (bb == "small_cnn") c.backbone = Backbone::small_cnn;
    else if (bb == "standard_resnet18") c.backbone = Backbone::standard_resnet18;
    else throw std::invalid_argument("encoder: unknown backbone '" + bb + "'");
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.input_size = j.value("input_size", c.input_size);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.projection_layers = j.value("projection_layers", c.projection_layers);
    c.base_channels = j.value("base_channels", c.base_channels);
    return c;
}

Param& ParamStore::add(const std::string& name, Tensor<float> init) {
    if (has(name)) throw std::logic_error("duplicate parameter " + name);
    items.emplace_back(name, Param::leaf(std::move(init), true));
    return items.back().second;
}

Param& ParamStore::get(const std::string& name) {
    for (auto& [n, p] : items)
        if (n == name) return p;
    throw std::logic_error("unknown parameter " + name);
}

const Param& ParamStore::get(const std::string& name) const {
    for (auto& [n, p] : items)
        if (n == name) return p;
    throw std::logic_error("unknown parameter " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (auto& [n, p] : items)
        if (n == name) return true;
    return false;
}

void ParamStore::zero_grads() {
    for (auto& [n, p] : items) p.zero_grad();
}

int64_t ParamStore::parameter_count() const {
    int64_t c = 0;
    for (const auto& [n, p] : items) c += p.value().numel();
    return c;
}

bool ParamStore::all_finite() const {
    for (const auto& [n, p] : items)
        for (int64_t i = 0; i < p.value().numel(); ++i)
            if (!std::isfinite(p.value()[i])) return false;
    return true;
}

namespace {

Tensor<float> he_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    Tensor<float> t(std::move(shape));
    const float stddev = std::sqrt(2.f / static_cast<float>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * static_cast<float>(rng.normal());
    return t;
}

void add_conv(ParamStore& ps, const std::string& name, int64_t out_c, int64_t in_c, int k,
              Rng& rng) {
    ps.add(name + ".w", he_init({out_c, in_c, k, k}, in_c * k * k, rng));
    ps.add(name + ".b", Tensor<float>({out_c}, 0.f));
}

void add_fc(ParamStore& ps, const std::string& name, int64_t out_d, int64_t in_d, Rng& rng) {
    ps.add(name + ".w", he_init({out_d, in_d}, in_d, rng));
    ps.add(name + ".b", Tensor<float>({out_d}, 0.f));
}

Var<float> conv(const ParamStore& ps, const std::string& name, const Var<float>& x, int stride,
                int pad) {
    return nn::conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), stride, pad);
}

Var<float> fc(const ParamStore& ps, const std::string& name, const Var<float>& x) {
    return nn::linear(x, ps.get(name + ".w"), ps.get(name + ".b"));
}

// Feature width at the encoder output (before the projection head).
int64_t top_channels(const EncoderConfig& cfg) {
    return cfg.backbone == Backbone::small_cnn ? cfg.base_channels * 8 : 512;
}

constexpr uint32_t kCheckpointVersion = 1;
constexpr char kMagic[8] = {'C', 'C', 'D', 'C', 'K', 'P', 'T', '1'};

}  // namespace

ModelBundle ModelBundle::create(const EncoderConfig& cfg,
                                std::vector<AugmentationDescriptor> descriptors, uint64_t seed) {
    cfg.validate();
    if (descriptors.empty()) throw std::invalid_argument("model: aug descriptor set is empty");
    ModelBundle b;
    b.config = cfg;
    b.aug_descriptors = std::move(descriptors);
    Rng rng(seed_combine(seed, 0x6d6f64656cULL));
    ParamStore& ps = b.params;

    const int64_t ci = cfg.in_channels;
    const int64_t top = top_channels(cfg);
    if (cfg.backbone == Backbone::small_cnn) {
        const int64_t c0 = cfg.base_channels;
        add_conv(ps, "enc.conv1", c0, ci, 3, rng);
        add_conv(ps, "enc.conv2", c0 * 2, c0, 3, rng);
        add_conv(ps, "enc.conv3", c0 * 4, c0 * 2, 3, rng);
        add_conv(ps, "enc.conv4", c0 * 8, c0 * 4, 3, rng);
    } else {
        // BN-free resnet18 layout: stem /2, then stages 64/128/256/512 with
        // two basic blocks each; stages 2-4 downsample (net stride 16).
        add_conv(ps, "enc.stem", 64, ci, 3, rng);
        const int64_t ch[4] = {64, 128, 256, 512};
        for (int s = 0; s < 4; ++s) {
            const int64_t in_ch = s == 0 ? 64 : ch[s - 1];
            const std::string sn = "enc.stage" + std::to_string(s);
            add_conv(ps, sn + ".b0.c1", ch[s], in_ch, 3, rng);
            add_conv(ps, sn + ".b0.c2", ch[s], ch[s], 3, rng);
            if (in_ch != ch[s]) add_conv(ps, sn + ".b0.skip", ch[s], in_ch, 1, rng);
            add_conv(ps, sn + ".b1.c1", ch[s], ch[s], 3, rng);
            add_conv(ps, sn + ".b1.c2", ch[s], ch[s], 3, rng);
        }
    }
    if (cfg.projection_layers == 2) {
        add_fc(ps, "proj.fc1", top, top, rng);
        add_fc(ps, "proj.fc2", cfg.embed_dim, top, rng);
    } else {
        add_fc(ps, "proj.fc1", cfg.embed_dim, top, rng);
    }

    // decoder: dz -> top x s x s, then 4 upsample stages back to input_size
    const int64_t s0 = cfg.input_size / 16;
    add_fc(ps, "dec.fc", top * s0 * s0, cfg.embed_dim, rng);
    add_conv(ps, "dec.conv1", top / 2, top, 3, rng);
    add_conv(ps, "dec.conv2", top / 4, top / 2, 3, rng);
    add_conv(ps, "dec.conv3", top / 8, top / 4, 3, rng);
    add_conv(ps, "dec.conv4", top / 8, top / 8, 3, rng);
    add_conv(ps, "dec.out", ci, top / 8, 3, rng);

    add_fc(ps, "beta.fc", static_cast<int64_t>(b.aug_descriptors.size()), cfg.embed_dim, rng);
    add_fc(ps, "gamma.fc1", cfg.embed_dim, 2 * cfg.embed_dim, rng);
    add_fc(ps, "gamma.fc2", 8, cfg.embed_dim, rng);
    add_fc(ps, "psi.fc", 1, cfg.embed_dim, rng);
    return b;
}

ModelBundle ModelBundle::clone() const {
    ModelBundle out;
    out.config = config;
    out.aug_descriptors = aug_descriptors;
    for (const auto& [name, var] : params.items) out.params.add(name, var.value());
    return out;
}

Var<float> ModelBundle::encode(const Var<float>& images) const {
    const auto& v = images.value();
    if (v.ndim() != 4 || v.dim(1) != config.in_channels)
        throw std::invalid_argument("encode: expected [N," + std::to_string(config.in_channels) +
                                    ",H,W], got " + v.shape_str());
    Var<float> x = images;
    if (config.backbone == Backbone::small_cnn) {
        x = nn::relu(conv(params, "enc.conv1", x, 2, 1));
        x = nn::relu(conv(params, "enc.conv2", x, 2, 1));
        x = nn::relu(conv(params, "enc.conv3", x, 2, 1));
        x = nn::relu(conv(params, "enc.conv4", x, 2, 1));
    } else {
        x = nn::relu(conv(params, "enc.stem", x, 2, 1));
        for (int s = 0; s < 4; ++s) {
            const std::string sn = "enc.stage" + std::to_string(s);
            const int stride = s == 0 ? 1 : 2;
            Var<float> skip = x;
            Var<float> y = nn::relu(conv(params, sn + ".b0.c1", x, stride, 1));
            y = conv(params, sn + ".b0.c2", y, 1, 1);
            if (params.has(sn + ".b0.skip.w")) skip = conv(params, sn + ".b0.skip", x, stride, 0);
            x = nn::relu(nn::add(y, skip));
            Var<float> y2 = nn::relu(conv(params, sn + ".b1.c1", x, 1, 1));
            y2 = conv(params, sn + ".b1.c2", y2, 1, 1);
            x = nn::relu(nn::add(y2, x));
        }
    }
    x = nn::global_avg_pool(x);
    if (config.projection_layers == 2) {
        x = nn::relu(fc(params, "proj.fc1", x));
        x = fc(params, "proj.fc2", x);
    } else {
        x = fc(params, "proj.fc1", x);
    }
    return nn::l2_normalize_rows(x);
}

Var<float> ModelBundle::decode(const Var<float>& embeddings) const {
    if (embeddings.value().ndim() != 2 || embeddings.value().dim(1) != config.embed_dim)
        throw std::invalid_argument("decode: expected [N," + std::to_string(config.embed_dim) +
                                    "], got " + embeddings.value().shape_str());
    const int64_t N = embeddings.value().dim(0);
    const int64_t top = top_channels(config);
    const int64_t s0 = config.input_size / 16;
    Var<float> x = nn::relu(fc(params, "dec.fc", embeddings));
    x = nn::reshape(x, {N, top, s0, s0});
    x = nn::relu(conv(params, "dec.conv1", nn::upsample_nearest2(x), 1, 1));
    x = nn::relu(conv(params, "dec.conv2", nn::upsample_nearest2(x), 1, 1));
    x = nn::relu(conv(params, "dec.conv3", nn::upsample_nearest2(x), 1, 1));
    x = nn::relu(conv(params, "dec.conv4", nn::upsample_nearest2(x), 1, 1));
    return nn::sigmoid(conv(params, "dec.out", x, 1, 1));
}

Var<float> ModelBundle::aug_logits(const Var<float>& embeddings) const {
    return fc(params, "beta.fc", embeddings);
}

Var<float> ModelBundle::position_logits(const Var<float>& emb_a, const Var<float>& emb_b) const {
    if (emb_a.value().dim(0) != emb_b.value().dim(0))
        throw std::invalid_argument("position_logits: batch size mismatch");
    Var<float> x = nn::concat_cols(emb_a, emb_b);
    x = nn::relu(fc(params, "gamma.fc1", x));
    return fc(params, "gamma.fc2", x);
}

Var<float> ModelBundle::normal_score(const Var<float>& embeddings) const {
    return nn::sigmoid(fc(params, "psi.fc", embeddings));
}

Var<float> ModelBundle::classify_augmentation(const Var<float>& embeddings) const {
    return nn::softmax_rows(aug_logits(embeddings));
}

Var<float> ModelBundle::classify_position(const Var<float>& emb_a, const Var<float>& emb_b) const {
    return nn::softmax_rows(position_logits(emb_a, emb_b));
}

Tensor<float> batch_to_tensor(const std::vector<const Image*>& images) {
    if (images.empty()) throw std::invalid_argument("batch_to_tensor: empty batch");
    const Image& first = *images[0];
    Tensor<float> t({static_cast<int64_t>(images.size()), first.c, first.h, first.w});
    const int64_t plane = static_cast<int64_t>(first.h) * first.w;
    for (size_t n = 0; n < images.size(); ++n) {
        const Image& img = *images[n];
        if (!img.same_shape(first)) throw std::invalid_argument("batch_to_tensor: ragged batch");
        float* base = t.ptr() + static_cast<int64_t>(n) * first.c * plane;
        for (int ch = 0; ch < img.c; ++ch)
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x)
                    base[(ch * img.h + y) * img.w + x] = img.at(y, x, ch);
    }
    return t;
}

Tensor<float> ModelBundle::encode_images(const std::vector<const Image*>& images) const {
    return encode(Var<float>::constant(batch_to_tensor(images))).value();
}

std::vector<Param*> ModelBundle::params_with_prefix(const std::string& prefix) {
    std::vector<Param*> out;
    for (auto& [n, p] : params.items)
        if (n.rfind(prefix, 0) == 0) out.push_back(&p);
    return out;
}

void save_checkpoint(const ModelBundle& bundle, const std::string& path, const json& extra) {
    json header;
    header["version"] = kCheckpointVersion;
    header["encoder"] = bundle.config.to_json();
    header["augmentations"] = json::array();
    for (const auto& d : bundle.aug_descriptors) header["augmentations"].push_back(d.to_json());
    header["arrays"] = json::array();
    for (const auto& [name, p] : bundle.params.items)
        header["arrays"].push_back({{"name", name}, {"shape", p.value().shape}});
    header["extra"] = extra;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    const std::string hs = header.dump();
    const uint64_t hlen = hs.size();
    out.write(kMagic, 8);
    uint32_t ver = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&ver), 4);
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hlen));
    for (const auto& [name, p] : bundle.params.items)
        out.write(reinterpret_cast<const char*>(p.value().ptr()),
                  static_cast<std::streamsize>(p.value().numel() * sizeof(float)));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

ModelBundle load_checkpoint(const std::string& path, json* extra_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: corrupt file (bad magic): " + path);
    uint32_t ver = 0;
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&ver), 4);
    in.read(reinterpret_cast<char*>(&hlen), 8);
    if (ver != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ver));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("checkpoint: truncated header: " + path);
    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception&) {
        throw std::runtime_error("checkpoint: corrupt header: " + path);
    }

    std::vector<AugmentationDescriptor> descs;
    for (const auto& jd : header.at("augmentations"))
        descs.push_back(AugmentationDescriptor::from_json(jd));

    ModelBundle b = ModelBundle::create(EncoderConfig::from_json(header.at("encoder")),
                                        std::move(descs), /*seed=*/0);
    size_t idx = 0;
    for (const auto& ja : header.at("arrays")) {
        if (idx >= b.params.items.size())
            throw std::runtime_error("checkpoint: array table mismatch");
        auto& [name, p] = b.params.items[idx++];
        if (ja.at("name").get<std::string>() != name ||
            ja.at("shape").get<std::vector<int64_t>>() != p.value().shape)
            throw std::runtime_error("checkpoint: arity mismatch for parameter " + name);
        in.read(reinterpret_cast<char*>(p.value().ptr()),
                static_cast<std::streamsize>(p.value().numel() * sizeof(float)));
    }
    if (idx != b.params.items.size() || !in)
        throw std::runtime_error("checkpoint: truncated parameter data: " + path);
    if (!b.params.all_finite()) throw std::runtime_error("checkpoint: non-finite parameters");
    if (extra_out) *extra_out = header.value("extra", json::object());
    return b;
}

}  // namespace ccd
