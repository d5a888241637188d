#include "lsconf/sae_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lsconf/errors.hpp"

namespace lsconf {

// ---------------------------------------------------------------- polar head

PolarConfig PolarConfig::paper_instance()
{
    constexpr double pi = std::numbers::pi;
    return {pi / 3.0, 2.0 * pi / 9.0, pi / 18.0, pi / 6.0};
}

void PolarConfig::validate() const
{
    if (!(sector_period > 0.0 && inner_test_modulus > 0.0 && prohibited_threshold > 0.0 && extra_rotation > 0.0))
        throw ConfigError("polar config: all angles must be positive");
    if (!(prohibited_threshold < inner_test_modulus && inner_test_modulus <= sector_period))
        throw ConfigError("polar config: need prohibited_threshold < inner_test_modulus <= sector_period");
}

nlohmann::json PolarConfig::to_json() const
{
    return {{"sector_period", sector_period},
            {"inner_test_modulus", inner_test_modulus},
            {"prohibited_threshold", prohibited_threshold},
            {"extra_rotation", extra_rotation}};
}

PolarConfig PolarConfig::from_json(const nlohmann::json& j)
{
    PolarConfig p = paper_instance();
    p.sector_period = j.value("sector_period", p.sector_period);
    p.inner_test_modulus = j.value("inner_test_modulus", p.inner_test_modulus);
    p.prohibited_threshold = j.value("prohibited_threshold", p.prohibited_threshold);
    p.extra_rotation = j.value("extra_rotation", p.extra_rotation);
    p.validate();
    return p;
}

double positive_mod(double x, double m)
{
    double r = std::fmod(x, m);
    if (r < 0.0) r += m;
    return r >= m ? 0.0 : r;
}

bool polar_prohibited(double phi, const PolarConfig& cfg)
{
    return positive_mod(positive_mod(phi, cfg.sector_period), cfg.inner_test_modulus) > cfg.prohibited_threshold;
}

Tensor polar_transform(const Tensor& z, const PolarConfig& cfg)
{
    if (z.shape().size() != 2 || z.dim(1) != 2)
        throw DimensionError("polar_transform: expects [N, 2], got " + shape_to_string(z.shape()));
    const std::size_t n = z.dim(0);
    NdArray out({n, 2});
    std::vector<double> shift(n, 0.0);
    const NdArray& zv = z.value();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::hypot(zv[2 * i], zv[2 * i + 1]);
        const double phi = std::atan2(zv[2 * i + 1], zv[2 * i]);
        if (polar_prohibited(phi, cfg)) shift[i] = cfg.extra_rotation;
        const double phi2 = phi + shift[i];
        out[2 * i] = r * std::cos(phi2);
        out[2 * i + 1] = r * std::sin(phi2);
    }
    // The map is a fixed rotation per row, so its Jacobian is that rotation.
    return record("polar_transform", std::move(out), {z}, [shift = std::move(shift)](detail::Node& node) {
        const auto& p = node.parents[0];
        if (!p->requires_grad) return;
        NdArray& g = p->grad_buffer();
        for (std::size_t i = 0; i < shift.size(); ++i) {
            const double c = std::cos(shift[i]), s = std::sin(shift[i]);
            const double gx = node.grad[2 * i], gy = node.grad[2 * i + 1];
            g[2 * i] += c * gx + s * gy;
            g[2 * i + 1] += -s * gx + c * gy;
        }
    });
}

// ---------------------------------------------------------------- config

HeadKind parse_head_kind(const std::string& name)
{
    if (name == "plain") return HeadKind::plain;
    if (name == "vae") return HeadKind::vae;
    if (name == "polar") return HeadKind::polar;
    throw ConfigError("unknown head '" + name + "' (expected plain, vae or polar)");
}

std::string to_string(HeadKind head)
{
    switch (head) {
    case HeadKind::plain: return "plain";
    case HeadKind::vae: return "vae";
    case HeadKind::polar: return "polar";
    }
    return "plain";
}

void SaeConfig::validate() const
{
    if (input_hw == 0 || input_hw % 16 != 0)
        throw ConfigError("sae config: input_hw must be a positive multiple of 16, got " + std::to_string(input_hw));
    if (input_channels == 0) throw ConfigError("sae config: input_channels must be positive");
    if (!(width_scale > 0.0 && width_scale <= 1.0)) throw ConfigError("sae config: width_scale must lie in (0, 1]");
    if (n_classes < 2) throw ConfigError("sae config: n_classes must be >= 2");
    if (latent_dims < 2) throw ConfigError("sae config: latent_dims must be >= 2");
    if (head == HeadKind::polar && latent_dims != 2) throw ConfigError("sae config: polar head requires latent_dims == 2");
    if (polar) polar->validate();
}

std::vector<std::size_t> SaeConfig::stage_channels() const
{
    static constexpr std::size_t table[] = {64, 128, 256, 512, 512};
    std::vector<std::size_t> out;
    for (auto c : table)
        out.push_back(std::max<std::size_t>(8, static_cast<std::size_t>(std::lround(width_scale * c))));
    return out;
}

nlohmann::json SaeConfig::to_json() const
{
    nlohmann::json j{{"input_hw", input_hw},       {"input_channels", input_channels},
                     {"width_scale", width_scale}, {"n_classes", n_classes},
                     {"latent_dims", latent_dims}, {"head", to_string(head)}};
    if (polar) j["polar"] = polar->to_json();
    return j;
}

SaeConfig SaeConfig::from_json(const nlohmann::json& j)
{
    SaeConfig c;
    try {
        c.input_hw = j.value("input_hw", c.input_hw);
        c.input_channels = j.value("input_channels", c.input_channels);
        c.width_scale = j.value("width_scale", c.width_scale);
        c.n_classes = j.value("n_classes", c.n_classes);
        c.latent_dims = j.value("latent_dims", c.latent_dims);
        c.head = parse_head_kind(j.value("head", std::string("plain")));
        if (j.contains("polar") && !j["polar"].is_null()) c.polar = PolarConfig::from_json(j["polar"]);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("sae config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<std::size_t> argmax_rows(const NdArray& logits)
{
    const std::size_t n = logits.dim(0), nc = logits.dim(1);
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * nc;
        out[i] = static_cast<std::size_t>(std::max_element(row, row + nc) - row);
    }
    return out;
}

// ---------------------------------------------------------------- model

namespace {

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual framework default. A wider
// bound puts the initial latents far out on the exponential part of L_G.
NdArray uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng)
{
    NdArray a(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : a.storage()) v = u(rng);
    return a;
}

}  // namespace

SaeModel::SaeModel(SaeConfig config, std::uint64_t seed) : config_(std::move(config)), noise_rng_(seed ^ 0x9E3779B97F4A7C15ULL)
{
    config_.validate();
    if (config_.head == HeadKind::polar && !config_.polar) config_.polar = PolarConfig::paper_instance();
    std::mt19937_64 rng(seed);
    const auto ch = config_.stage_channels();
    std::size_t cin = config_.input_channels;
    for (std::size_t s = 0; s < ch.size(); ++s) {
        for (int k = 0; k < 2; ++k) {
            const std::size_t in = k == 0 ? cin : ch[s];
            ConvBlock b{Tensor::parameter(uniform_init({ch[s], in, 3, 3}, in * 9, rng)),
                        Tensor::parameter(NdArray({ch[s]}, 0.0)), Tensor::parameter(NdArray({ch[s]}, 1.0)),
                        Tensor::parameter(NdArray({ch[s]}, 0.0)), RunningStats(ch[s])};
            convs_.push_back(std::move(b));
        }
        cin = ch[s];
    }
    const std::size_t spatial = config_.input_hw / 16;
    const std::size_t flat = ch.back() * spatial * spatial;
    const std::size_t nd = config_.latent_dims;
    auto dense = [&](std::size_t din, std::size_t dout) {
        return Dense{Tensor::parameter(uniform_init({dout, din}, din, rng)), Tensor::parameter(NdArray({dout}, 0.0))};
    };
    head_a_ = dense(flat, nd);
    head_b_ = dense(flat, nd);
    classifier_.push_back(dense(nd, 32));
    classifier_.push_back(dense(32, 64));
    classifier_.push_back(dense(64, config_.n_classes));
}

template <class Bn>
SaeModel::Encoding SaeModel::run_encoder(const Tensor& batch, Bn&& bn, std::mt19937_64* noise) const
{
    const Shape& s = batch.shape();
    if (s.size() != 4) throw DimensionError("encode: batch must be [N,C,H,W], got " + shape_to_string(s));
    if (s[1] != config_.input_channels)
        throw DimensionError("encode: axis 1 (channels) is " + std::to_string(s[1]) + ", expected " +
                             std::to_string(config_.input_channels));
    if (s[2] != config_.input_hw || s[3] != config_.input_hw)
        throw DimensionError("encode: spatial axes are " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                             ", expected " + std::to_string(config_.input_hw));

    Tensor h = batch;
    for (std::size_t stage = 0; stage < 5; ++stage) {
        if (stage > 0) h = maxpool2(h);
        for (std::size_t k = 0; k < 2; ++k) {
            const std::size_t idx = 2 * stage + k;
            h = relu(bn(conv2d(h, convs_[idx].weight, convs_[idx].bias), idx));
        }
    }
    h = reshape(h, {s[0], h.size() / s[0]});
    Tensor a = linear(h, head_a_.weight, head_a_.bias);
    Tensor b = linear(h, head_b_.weight, head_b_.bias);

    switch (config_.head) {
    case HeadKind::plain: return {add(a, b), a, b};
    case HeadKind::polar: return {polar_transform(add(a, b), *config_.polar), a, b};
    case HeadKind::vae: {
        Tensor sigma = softplus(b);
        if (!noise) return {a, a, sigma};
        NdArray eps(a.shape());
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& v : eps.storage()) v = normal(*noise);
        return {add(a, mul(sigma, Tensor(std::move(eps)))), a, sigma};
    }
    }
    throw ContractError("encode: unknown head");
}

SaeModel::Encoding SaeModel::encode_full(const Tensor& batch, Mode mode)
{
    if (mode == Mode::eval)
        return run_encoder(
            batch, [this](const Tensor& x, std::size_t i) {
                const auto& c = convs_[i];
                return batchnorm2d_eval(x, c.gamma, c.beta, c.stats);
            },
            nullptr);
    return run_encoder(
        batch, [this](const Tensor& x, std::size_t i) {
            auto& c = convs_[i];
            return batchnorm2d(x, c.gamma, c.beta, c.stats, Mode::train);
        },
        config_.head == HeadKind::vae ? &noise_rng_ : nullptr);
}

NdArray SaeModel::encode_eval(const NdArray& batch) const
{
    Tensor in(batch);
    const Encoding e = run_encoder(
        in, [this](const Tensor& x, std::size_t i) {
            const auto& c = convs_[i];
            return batchnorm2d_eval(x, c.gamma, c.beta, c.stats);
        },
        nullptr);
    return e.z.value();
}

Classification SaeModel::classify(const Tensor& z) const
{
    if (z.shape().size() != 2 || z.dim(1) != config_.latent_dims)
        throw DimensionError("classify: z must be [N," + std::to_string(config_.latent_dims) + "], got " +
                             shape_to_string(z.shape()));
    Tensor h = relu(linear(z, classifier_[0].weight, classifier_[0].bias));
    h = relu(linear(h, classifier_[1].weight, classifier_[1].bias));
    Tensor logits = linear(h, classifier_[2].weight, classifier_[2].bias);
    auto labels = argmax_rows(logits.value());
    return {logits, std::move(labels)};
}

std::pair<Tensor, Tensor> SaeModel::vae_kld_inputs(const Tensor& batch, Mode mode)
{
    if (config_.head != HeadKind::vae) throw ContractError("vae_kld_inputs: model head is " + to_string(config_.head));
    Encoding e = encode_full(batch, mode);
    return {e.a, e.b};
}

std::vector<Tensor> SaeModel::parameters() const
{
    std::vector<Tensor> out;
    for (const auto& c : convs_) {
        out.push_back(c.weight);
        out.push_back(c.bias);
        out.push_back(c.gamma);
        out.push_back(c.beta);
    }
    out.push_back(head_a_.weight);
    out.push_back(head_a_.bias);
    out.push_back(head_b_.weight);
    out.push_back(head_b_.bias);
    for (const auto& d : classifier_) {
        out.push_back(d.weight);
        out.push_back(d.bias);
    }
    return out;
}

void SaeModel::visit_named(const std::function<void(const std::string&, const NdArray&)>& fn) const
{
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const std::string p = "encoder.stage" + std::to_string(i / 2) + ".conv" + std::to_string(i % 2) + ".";
        fn(p + "weight", convs_[i].weight.value());
        fn(p + "bias", convs_[i].bias.value());
        fn(p + "bn_gamma", convs_[i].gamma.value());
        fn(p + "bn_beta", convs_[i].beta.value());
        fn(p + "bn_running_mean", convs_[i].stats.mean);
        fn(p + "bn_running_var", convs_[i].stats.var);
    }
    fn("head_a.weight", head_a_.weight.value());
    fn("head_a.bias", head_a_.bias.value());
    fn("head_b.weight", head_b_.weight.value());
    fn("head_b.bias", head_b_.bias.value());
    for (std::size_t i = 0; i < classifier_.size(); ++i) {
        fn("classifier." + std::to_string(i) + ".weight", classifier_[i].weight.value());
        fn("classifier." + std::to_string(i) + ".bias", classifier_[i].bias.value());
    }
}

Checkpoint SaeModel::to_checkpoint() const
{
    Checkpoint ck;
    visit_named([&](const std::string& name, const NdArray& v) { ck.entries.push_back({name, v}); });
    ck.meta["sae_config"] = config_.to_json();
    return ck;
}

SaeModel SaeModel::from_checkpoint(const Checkpoint& ckpt)
{
    if (!ckpt.meta.contains("sae_config")) throw IoError("checkpoint: missing sae_config");
    SaeModel m(SaeConfig::from_json(ckpt.meta["sae_config"]), 0);
    auto assign = [&](const std::string& name, NdArray& dst) {
        const NdArray& src = ckpt.get(name);
        if (src.shape() != dst.shape())
            throw IoError("checkpoint: entry '" + name + "' has shape " + shape_to_string(src.shape()) +
                          ", model expects " + shape_to_string(dst.shape()));
        dst = src;
    };
    for (std::size_t i = 0; i < m.convs_.size(); ++i) {
        const std::string p = "encoder.stage" + std::to_string(i / 2) + ".conv" + std::to_string(i % 2) + ".";
        auto& c = m.convs_[i];
        assign(p + "weight", c.weight.mutable_value());
        assign(p + "bias", c.bias.mutable_value());
        assign(p + "bn_gamma", c.gamma.mutable_value());
        assign(p + "bn_beta", c.beta.mutable_value());
        assign(p + "bn_running_mean", c.stats.mean);
        assign(p + "bn_running_var", c.stats.var);
    }
    assign("head_a.weight", m.head_a_.weight.mutable_value());
    assign("head_a.bias", m.head_a_.bias.mutable_value());
    assign("head_b.weight", m.head_b_.weight.mutable_value());
    assign("head_b.bias", m.head_b_.bias.mutable_value());
    for (std::size_t i = 0; i < m.classifier_.size(); ++i) {
        assign("classifier." + std::to_string(i) + ".weight", m.classifier_[i].weight.mutable_value());
        assign("classifier." + std::to_string(i) + ".bias", m.classifier_[i].bias.mutable_value());
    }
    return m;
}

void SaeModel::save(const std::filesystem::path& path) const { write_checkpoint(path, to_checkpoint()); }

SaeModel SaeModel::load(const std::filesystem::path& path) { return from_checkpoint(read_checkpoint(path)); }

NdArray stack_images(std::span<const NdArray* const> images, std::size_t channels)
{
    if (images.empty()) throw ContractError("stack_images: no images");
    const NdArray& first = *images[0];
    const std::size_t h = first.dim(first.rank() - 2), w = first.dim(first.rank() - 1);
    const std::size_t per = channels * h * w;
    NdArray out({images.size(), channels, h, w});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i]->size() != per)
            throw DimensionError("stack_images: image " + std::to_string(i) + " has shape " +
                                 shape_to_string(images[i]->shape()));
        std::copy_n(images[i]->data(), per, out.data() + i * per);
    }
    return out;
}

}  // namespace lsconf
