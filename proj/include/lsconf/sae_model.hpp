#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsconf/checkpoint.hpp"
#include "lsconf/nn_ops.hpp"

namespace lsconf {

/// Angular deflection of the polar encoder head.
struct PolarConfig {
    double sector_period;
    double inner_test_modulus;
    double prohibited_threshold;
    double extra_rotation;

    /// 60 degree period, 40 degree inner modulus, 10 degree threshold, 30
    /// degree extra rotation.
    static PolarConfig paper_instance();

    void validate() const;
    nlohmann::json to_json() const;
    static PolarConfig from_json(const nlohmann::json& j);
};

/// x mod m mapped into [0, m).
double positive_mod(double x, double m);

/// ((phi mod sector_period) mod inner_test_modulus) > prohibited_threshold
bool polar_prohibited(double phi, const PolarConfig& cfg);

/// Rotates each 2-D row by extra_rotation when its original angle is
/// prohibited; radius is preserved.
Tensor polar_transform(const Tensor& z, const PolarConfig& cfg);

enum class HeadKind { plain, vae, polar };

HeadKind parse_head_kind(const std::string& name);
std::string to_string(HeadKind head);

struct SaeConfig {
    std::size_t input_hw = 32;
    std::size_t input_channels = 1;
    double width_scale = 1.0;
    std::size_t n_classes = 5;
    std::size_t latent_dims = 2;
    HeadKind head = HeadKind::plain;
    std::optional<PolarConfig> polar;

    void validate() const;
    /// Encoder channel counts after width scaling (five stages).
    std::vector<std::size_t> stage_channels() const;
    nlohmann::json to_json() const;
    static SaeConfig from_json(const nlohmann::json& j);
};

struct Classification {
    Tensor logits;
    std::vector<std::size_t> labels;
};

/// argmax per row, lowest index on ties.
std::vector<std::size_t> argmax_rows(const NdArray& logits);

/// Supervised autoencoder: convolutional encoder into an n_d latent space and
/// a three-layer fully connected classifier.
///
/// Encoder: Double(->64s), Down(->128s), Down(->256s), Down(->512s),
/// Down(->512s), flatten, two parallel linear heads a and b. A Double is two
/// conv3x3-batchnorm-relu blocks; a Down is maxpool2 followed by a Double.
class SaeModel {
public:
    explicit SaeModel(SaeConfig config, std::uint64_t seed = 0);

    // Parameters are shared tensor handles, so copies must be explicit.
    SaeModel(const SaeModel&) = delete;
    SaeModel& operator=(const SaeModel&) = delete;
    SaeModel(SaeModel&&) = default;
    SaeModel& operator=(SaeModel&&) = default;
    SaeModel clone() const { return from_checkpoint(to_checkpoint()); }

    const SaeConfig& config() const noexcept { return config_; }

    struct Encoding {
        Tensor z;
        Tensor a;      // plain/polar: head a; vae: mu
        Tensor b;      // plain/polar: head b; vae: sigma (after softplus)
    };

    /// Full encoder pass. For the vae head, train mode samples eps ~ N(0,1)
    /// from the model's noise stream and eval mode uses eps = 0.
    Encoding encode_full(const Tensor& batch, Mode mode);
    Tensor encode(const Tensor& batch, Mode mode) { return encode_full(batch, mode).z; }

    /// Eval-mode encode that never touches mutable state.
    NdArray encode_eval(const NdArray& batch) const;

    Classification classify(const Tensor& z) const;

    /// (mu, sigma) of the vae head.
    std::pair<Tensor, Tensor> vae_kld_inputs(const Tensor& batch, Mode mode);

    /// Trainable parameters in a fixed order.
    std::vector<Tensor> parameters() const;

    Checkpoint to_checkpoint() const;
    static SaeModel from_checkpoint(const Checkpoint& ckpt);
    void save(const std::filesystem::path& path) const;
    static SaeModel load(const std::filesystem::path& path);

    struct ConvBlock {
        Tensor weight, bias, gamma, beta;
        RunningStats stats;
    };
    struct Dense {
        Tensor weight, bias;
    };

    // Direct access for tests and tooling.
    std::vector<ConvBlock>& conv_blocks() noexcept { return convs_; }
    Dense& head_a() noexcept { return head_a_; }
    Dense& head_b() noexcept { return head_b_; }
    std::vector<Dense>& classifier_layers() noexcept { return classifier_; }

private:
    template <class Bn>
    Encoding run_encoder(const Tensor& batch, Bn&& bn, std::mt19937_64* noise) const;
    void visit_named(const std::function<void(const std::string&, const NdArray&)>& fn) const;

    SaeConfig config_;
    std::vector<ConvBlock> convs_;  // two per stage
    Dense head_a_, head_b_;
    std::vector<Dense> classifier_;
    std::mt19937_64 noise_rng_;
};

/// Stacks [H,W] (or [C,H,W]) images into a [N,C,H,W] batch.
NdArray stack_images(std::span<const NdArray* const> images, std::size_t channels = 1);

}  // namespace lsconf
