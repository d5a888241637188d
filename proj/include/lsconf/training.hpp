#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsconf/losses.hpp"
#include "lsconf/optim.hpp"
#include "lsconf/sae_model.hpp"
#include "lsconf/texture_data.hpp"

namespace lsconf {

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
};

struct DataConfig {
    std::size_t per_class = 500;
    SplitSpec split;  // split.seed is the dataset seed
    std::size_t aug_per_image = 2;
};

/// Everything needed to reproduce one training run.
struct RunConfig {
    SaeConfig sae;
    ClusterConfig::Params clusters;
    LossWeights weights;
    KldForm kld_form = KldForm::as_printed;
    OptimizerConfig optimizer;
    DataConfig data;
    std::uint64_t seed = 0;  // initialization, shuffling and sampling noise
    std::filesystem::path output_dir = "runs/default";

    ClusterConfig cluster_config() const { return ClusterConfig(clusters); }
    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown top-level keys are rejected.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
};

struct LabeledImages {
    std::vector<std::string> ids;
    std::vector<NdArray> images;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return images.size(); }
};

LabeledImages render_records(std::span<const SampleRecord> records, const std::filesystem::path& cache_dir = {});

struct EpochMetrics {
    std::size_t epoch = 0;
    double l_ce = 0.0;              // mean over batches
    double l_g = 0.0;               // mean over batches of the batch sum
    double acc = 0.0;               // train-mode predictions
    double in_cluster_fraction = 0.0;  // train-mode encodings within r_c
    double seconds = 0.0;

    nlohmann::json to_json() const;
};

/// Latent statistics of a set of eval-mode encodings.
struct LatentSummary {
    std::size_t n = 0;
    double accuracy = 0.0;      // classifier argmax
    double ls_accuracy = 0.0;   // nearest cluster center
    double in_cluster_fraction = 0.0;  // within r_c of own center
    double within_1p5_fraction = 0.0;  // within 1.5 r_c of own center
    double max_norm = 0.0;
    std::vector<std::vector<double>> centroids;      // per class, empty when absent
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

    nlohmann::json to_json() const;
};

struct Encoded {
    NdArray z;       // [N, n_d]
    NdArray logits;  // [N, n_c]
};

/// Eval-mode forward pass in batches.
Encoded encode_all(const SaeModel& model, const std::vector<NdArray>& images, std::size_t batch_size = 64);

LatentSummary summarize(const NdArray& z, const NdArray& logits, std::span<const std::size_t> labels,
                        const ClusterConfig& cfg);

struct TrainResult {
    SaeModel model;
    std::vector<EpochMetrics> history;
    LatentSummary final_train;
    std::string fingerprint;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Mini-batch training with L = L_CE + k_g L_G (+ k_d KLD for the vae head).
/// Batches are shuffled per epoch from the run seed; a trailing partial batch
/// is dropped so every step sums L_G over exactly batch_size samples. Throws
/// NumericError naming the first op that produced a non-finite value.
TrainResult train(const RunConfig& cfg, const LabeledImages& data, const EpochCallback& on_epoch = {});

/// Full pipeline: dataset, training, checkpoint.lsf, metrics.jsonl and
/// config.json under cfg.output_dir.
TrainResult train_run(const RunConfig& cfg, const std::filesystem::path& manifest = {});

}  // namespace lsconf
