#include "lsconf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "lsconf/checkpoint.hpp"
#include "lsconf/errors.hpp"
#include "lsconf/retrieval_index.hpp"

namespace lsconf {

namespace {

ClusterConfig::Params params_of(const ClusterConfig& c)
{
    ClusterConfig::Params p;
    p.n_c = c.n_c();
    p.n_d = c.n_d();
    p.d_c = c.d_c();
    p.r_c = c.r_c();
    p.b_c = c.b_c();
    p.phase0 = c.phase0();
    if (c.has_explicit_centers()) p.explicit_centers = c.centers();
    return p;
}

std::string kld_form_name(KldForm f) { return f == KldForm::as_printed ? "as_printed" : "textbook"; }

KldForm parse_kld_form(const std::string& s)
{
    if (s == "as_printed") return KldForm::as_printed;
    if (s == "textbook") return KldForm::textbook;
    throw ConfigError("unknown kld_form '" + s + "' (expected as_printed or textbook)");
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

double row_distance(const double* z, std::span<const double> c)
{
    double s = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) s += (z[k] - c[k]) * (z[k] - c[k]);
    return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------- config

void RunConfig::validate() const
{
    sae.validate();
    const ClusterConfig clusters_cfg = cluster_config();
    if (clusters_cfg.n_d() != sae.latent_dims)
        throw ConfigError("run config: clusters.n_d (" + std::to_string(clusters_cfg.n_d()) +
                          ") must equal sae.latent_dims (" + std::to_string(sae.latent_dims) + ")");
    if (clusters_cfg.n_c() < sae.n_classes)
        throw ConfigError("run config: every class needs a cluster (n_c < n_classes)");
    if (sae.n_classes != kTextureClassCount)
        throw ConfigError("run config: the texture data has " + std::to_string(kTextureClassCount) + " classes");
    weights.validate();
    if (!(optimizer.lr > 0.0) || !std::isfinite(optimizer.lr)) throw ConfigError("run config: optimizer.lr must be > 0");
    if (optimizer.epochs == 0) throw ConfigError("run config: optimizer.epochs must be >= 1");
    if (optimizer.batch_size < 2) throw ConfigError("run config: optimizer.batch_size must be >= 2");
    if (data.per_class < 10) throw ConfigError("run config: data.per_class must be >= 10");
    if (data.aug_per_image == 0) throw ConfigError("run config: data.aug_per_image must be >= 1");
    data.split.validate();
}

nlohmann::json RunConfig::to_json() const
{
    const ClusterConfig c = cluster_config();
    nlohmann::json clusters_json{{"n_c", c.n_c()}, {"n_d", c.n_d()}, {"d_c", c.d_c()},
                                 {"r_c", c.r_c()}, {"b_c", c.b_c()}, {"phase0", c.phase0()}};
    if (c.has_explicit_centers()) clusters_json["explicit_centers"] = c.centers().storage();
    return {{"sae", sae.to_json()},
            {"clusters", clusters_json},
            {"weights", weights.to_json()},
            {"kld_form", kld_form_name(kld_form)},
            {"optimizer",
             {{"kind", to_string(optimizer.kind)},
              {"lr", optimizer.lr},
              {"epochs", optimizer.epochs},
              {"batch_size", optimizer.batch_size}}},
            {"data",
             {{"per_class", data.per_class},
              {"split", to_string(data.split.mode)},
              {"train_fraction", data.split.train_fraction},
              {"seed", data.split.seed},
              {"aug_per_image", data.aug_per_image}}},
            {"seed", seed},
            {"output_dir", output_dir.string()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j)
{
    RunConfig rc;
    try {
        check_keys(j, {"sae", "clusters", "weights", "kld_form", "optimizer", "data", "seed", "output_dir"}, "run config");
        if (j.contains("sae")) rc.sae = SaeConfig::from_json(j["sae"]);
        if (j.contains("clusters")) {
            nlohmann::json cj = j["clusters"];
            const ClusterConfig defaults(rc.clusters);
            if (!cj.contains("n_c")) cj["n_c"] = defaults.n_c();
            if (!cj.contains("d_c")) cj["d_c"] = defaults.d_c();
            if (!cj.contains("r_c")) cj["r_c"] = defaults.r_c();
            if (!cj.contains("b_c")) cj["b_c"] = defaults.b_c();
            rc.clusters = params_of(ClusterConfig::from_json(cj));
        }
        if (j.contains("weights")) rc.weights = LossWeights::from_json(j["weights"]);
        if (j.contains("kld_form")) rc.kld_form = parse_kld_form(j["kld_form"].get<std::string>());
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            check_keys(o, {"kind", "lr", "epochs", "batch_size"}, "run config optimizer");
            if (o.contains("kind")) rc.optimizer.kind = parse_optimizer_kind(o["kind"].get<std::string>());
            rc.optimizer.lr = o.value("lr", rc.optimizer.lr);
            rc.optimizer.epochs = o.value("epochs", rc.optimizer.epochs);
            rc.optimizer.batch_size = o.value("batch_size", rc.optimizer.batch_size);
        }
        if (j.contains("data")) {
            const auto& d = j["data"];
            check_keys(d, {"per_class", "split", "train_fraction", "seed", "aug_per_image"}, "run config data");
            rc.data.per_class = d.value("per_class", rc.data.per_class);
            if (d.contains("split")) rc.data.split.mode = parse_split_mode(d["split"].get<std::string>());
            rc.data.split.train_fraction = d.value("train_fraction", rc.data.split.train_fraction);
            rc.data.split.seed = d.value("seed", rc.data.split.seed);
            rc.data.aug_per_image = d.value("aug_per_image", rc.data.aug_per_image);
        }
        rc.seed = j.value("seed", rc.seed);
        if (j.contains("output_dir")) rc.output_dir = j["output_dir"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    rc.validate();
    return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path)
{
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("config '" + path.string() + "': " + e.what());
    }
    return from_json(j);
}

// ---------------------------------------------------------------- metrics

nlohmann::json EpochMetrics::to_json() const
{
    return {{"epoch", epoch}, {"L_CE", l_ce}, {"L_G", l_g}, {"acc", acc}, {"in_cluster_fraction", in_cluster_fraction},
            {"seconds", seconds}};
}

nlohmann::json LatentSummary::to_json() const
{
    nlohmann::json cents = nlohmann::json::array();
    for (const auto& c : centroids) cents.push_back(c.empty() ? nlohmann::json(nullptr) : nlohmann::json(c));
    return {{"n", n},
            {"accuracy", accuracy},
            {"ls_accuracy", ls_accuracy},
            {"in_cluster_fraction", in_cluster_fraction},
            {"within_1p5_rc_fraction", within_1p5_fraction},
            {"max_norm", max_norm},
            {"centroids", cents},
            {"confusion", confusion}};
}

LabeledImages render_records(std::span<const SampleRecord> records, const std::filesystem::path& cache_dir)
{
    LabeledImages out;
    out.ids.reserve(records.size());
    out.images.reserve(records.size());
    out.labels.reserve(records.size());
    for (const auto& r : records) {
        out.ids.push_back(r.id);
        out.images.push_back(load_image(r, cache_dir));
        out.labels.push_back(static_cast<std::size_t>(r.label));
    }
    return out;
}

Encoded encode_all(const SaeModel& model, const std::vector<NdArray>& images, std::size_t batch_size)
{
    const std::size_t nd = model.config().latent_dims, nc = model.config().n_classes;
    if (images.empty()) throw ContractError("encode_all: no images");
    Encoded out{NdArray({images.size(), nd}), NdArray({images.size(), nc})};
    std::vector<const NdArray*> ptrs;
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const std::size_t end = std::min(images.size(), start + batch_size);
        ptrs.clear();
        for (std::size_t i = start; i < end; ++i) ptrs.push_back(&images[i]);
        const NdArray z = model.encode_eval(stack_images(ptrs, model.config().input_channels));
        const NdArray logits = model.classify(Tensor(z)).logits.value();
        std::copy(z.storage().begin(), z.storage().end(), out.z.storage().begin() + static_cast<long>(start * nd));
        std::copy(logits.storage().begin(), logits.storage().end(),
                  out.logits.storage().begin() + static_cast<long>(start * nc));
    }
    return out;
}

LatentSummary summarize(const NdArray& z, const NdArray& logits, std::span<const std::size_t> labels,
                        const ClusterConfig& cfg)
{
    const std::size_t n = z.dim(0), nd = z.dim(1), nc = logits.dim(1);
    if (labels.size() != n || logits.dim(0) != n) throw DimensionError("summarize: inconsistent sample counts");
    LatentSummary s;
    s.n = n;
    s.confusion.assign(nc, std::vector<std::size_t>(nc, 0));
    std::vector<std::vector<double>> sums(nc, std::vector<double>(nd, 0.0));
    std::vector<std::size_t> counts(nc, 0);
    const auto pred = argmax_rows(logits);
    std::size_t correct = 0, ls_correct = 0, inside = 0, inside15 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* zi = z.data() + i * nd;
        const std::size_t y = labels[i];
        if (y >= nc || y >= cfg.n_c()) throw ContractError("summarize: label out of range");
        correct += pred[i] == y;
        ++s.confusion[y][pred[i]];
        ls_correct += nearest_center({zi, nd}, cfg) == y;
        const double d = row_distance(zi, cfg.center(y));
        inside += d <= cfg.r_c(y);
        inside15 += d <= 1.5 * cfg.r_c(y);
        double norm = 0.0;
        for (std::size_t k = 0; k < nd; ++k) {
            norm += zi[k] * zi[k];
            sums[y][k] += zi[k];
        }
        s.max_norm = std::max(s.max_norm, std::sqrt(norm));
        ++counts[y];
    }
    const double dn = static_cast<double>(n);
    s.accuracy = static_cast<double>(correct) / dn;
    s.ls_accuracy = static_cast<double>(ls_correct) / dn;
    s.in_cluster_fraction = static_cast<double>(inside) / dn;
    s.within_1p5_fraction = static_cast<double>(inside15) / dn;
    s.centroids.resize(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        if (counts[c] == 0) continue;
        s.centroids[c] = sums[c];
        for (auto& v : s.centroids[c]) v /= static_cast<double>(counts[c]);
    }
    return s;
}

// ---------------------------------------------------------------- training

TrainResult train(const RunConfig& cfg, const LabeledImages& data, const EpochCallback& on_epoch)
{
    cfg.validate();
    const std::size_t bs = cfg.optimizer.batch_size;
    if (data.size() < bs)
        throw ConfigError("train: " + std::to_string(data.size()) + " samples is fewer than one batch of " +
                          std::to_string(bs));
    const ClusterConfig clusters = cfg.cluster_config();
    SaeModel model(cfg.sae, derive_seed(cfg.seed, "model"));
    std::unique_ptr<Optimizer> opt;
    if (cfg.optimizer.kind == OptimizerKind::adam)
        opt = std::make_unique<Adam>(cfg.optimizer.lr);
    else
        opt = std::make_unique<Sgd>(cfg.optimizer.lr);
    auto params = model.parameters();
    const bool vae = cfg.sae.head == HeadKind::vae;

    std::vector<EpochMetrics> history;
    std::vector<std::size_t> order(data.size());
    std::vector<const NdArray*> batch_images(bs);
    std::vector<std::size_t> batch_labels(bs);
    const std::size_t steps = data.size() / bs;

    for (std::size_t epoch = 1; epoch <= cfg.optimizer.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        double ce_sum = 0.0, lg_sum = 0.0;
        std::size_t correct = 0, inside = 0, seen = 0;
        for (std::size_t step = 0; step < steps; ++step) {
            for (std::size_t k = 0; k < bs; ++k) {
                const std::size_t idx = order[step * bs + k];
                batch_images[k] = &data.images[idx];
                batch_labels[k] = data.labels[idx];
            }
            Tape tape;
            Tape::Scope scope(tape);
            const Tensor x(stack_images(batch_images, cfg.sae.input_channels));
            const auto enc = model.encode_full(x, Mode::train);
            const auto cls = model.classify(enc.z);
            const Tensor ce = cross_entropy(cls.logits, batch_labels);
            const Tensor lg = geometric_loss(enc.z, batch_labels, clusters);
            Tensor loss = cfg.weights.k_g == 0.0 ? ce : add(ce, scale(lg, cfg.weights.k_g));
            if (vae && cfg.weights.k_d != 0.0) loss = add(loss, scale(kld_loss(enc.a, enc.b, cfg.kld_form), cfg.weights.k_d));
            if (!std::isfinite(loss.item())) {
                const std::string op = tape.first_non_finite_op();
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(step) + "; first non-finite value produced by op '" +
                                   (op.empty() ? std::string("unknown") : op) + "'");
            }
            tape.backward(loss);
            opt->step(params);

            ce_sum += ce.item();
            lg_sum += lg.item();
            const NdArray& z = enc.z.value();
            const std::size_t nd = z.dim(1);
            for (std::size_t k = 0; k < bs; ++k) {
                correct += cls.labels[k] == batch_labels[k];
                inside += row_distance(z.data() + k * nd, clusters.center(batch_labels[k])) <= clusters.r_c(batch_labels[k]);
            }
            seen += bs;
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.l_ce = ce_sum / static_cast<double>(steps);
        m.l_g = lg_sum / static_cast<double>(steps);
        m.acc = static_cast<double>(correct) / static_cast<double>(seen);
        m.in_cluster_fraction = static_cast<double>(inside) / static_cast<double>(seen);
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.push_back(m);
        if (on_epoch) on_epoch(m);
    }

    const Encoded enc = encode_all(model, data.images, bs);
    LatentSummary final_train = summarize(enc.z, enc.logits, data.labels, clusters);
    std::string fp = model_fingerprint(model);
    return {std::move(model), std::move(history), std::move(final_train), std::move(fp)};
}

TrainResult train_run(const RunConfig& cfg, const std::filesystem::path& manifest)
{
    cfg.validate();
    std::vector<SampleRecord> records;
    if (!manifest.empty()) {
        records = read_manifest(manifest);
    } else {
        const Dataset ds = build_dataset(cfg.data.per_class, cfg.data.split, cfg.data.aug_per_image, cfg.sae.input_hw);
        records = ds.train;
    }
    std::vector<SampleRecord> train_records;
    for (auto& r : records)
        if (r.split == "train") train_records.push_back(std::move(r));
    if (train_records.empty()) throw ContractError("train: manifest has no train records");
    std::cerr << "train: " << train_records.size() << " train samples, " << cfg.optimizer.epochs << " epochs\n";
    const LabeledImages data = render_records(train_records);

    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.output_dir.string() + "': " + ec.message());
    write_file(cfg.output_dir / "config.json", cfg.to_json().dump(2) + "\n");

    std::string log;
    const auto metrics_path = cfg.output_dir / "metrics.jsonl";
    write_file(metrics_path, "");
    TrainResult result = train(cfg, data, [&](const EpochMetrics& m) {
        const std::string line = m.to_json().dump();
        log += line + "\n";
        write_file(metrics_path, log);
        std::cerr << "epoch " << line << "\n";
    });
    Checkpoint ckpt = result.model.to_checkpoint();
    ckpt.meta["clusters"] = cfg.to_json()["clusters"];
    write_checkpoint(cfg.output_dir / "checkpoint.lsf", ckpt);
    nlohmann::json fin{{"final_train", result.final_train.to_json()}, {"model_fingerprint", result.fingerprint}};
    log += fin.dump() + "\n";
    write_file(metrics_path, log);
    return result;
}

}  // namespace lsconf
