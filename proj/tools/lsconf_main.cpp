// lsconf: dataset, training, evaluation, index, search and plot commands.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lsconf/checkpoint.hpp"
#include "lsconf/errors.hpp"
#include "lsconf/retrieval_index.hpp"
#include "lsconf/svg_plot.hpp"
#include "lsconf/training.hpp"

namespace fs = std::filesystem;
using namespace lsconf;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> kg;
    std::optional<std::string> head;
    std::optional<std::string> split;
    std::optional<std::string> out;
};

void add_run_flags(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "run seed (initialization, shuffling)");
    cmd->add_option("--kg", o.kg, "geometric loss weight");
    cmd->add_option("--head", o.head, "encoder head")->check(CLI::IsMember({"plain", "vae", "polar"}));
    cmd->add_option("--split", o.split, "split mode")->check(CLI::IsMember({"pre", "post"}));
    cmd->add_option("--out", o.out, "output directory");
}

RunConfig resolve(const Overrides& o)
{
    nlohmann::json j = o.config.empty() ? RunConfig{}.to_json() : nlohmann::json::parse(read_file(o.config));
    if (o.seed) j["seed"] = *o.seed;
    if (o.kg) j["weights"]["k_g"] = *o.kg;
    if (o.head) j["sae"]["head"] = *o.head;
    if (o.split) j["data"]["split"] = *o.split;
    if (o.out) j["output_dir"] = *o.out;
    return RunConfig::from_json(j);
}

struct LoadedModel {
    SaeModel model;
    ClusterConfig clusters;
};

LoadedModel load_model(const std::string& checkpoint, const std::string& config)
{
    const Checkpoint ck = read_checkpoint(checkpoint);
    SaeModel model = SaeModel::from_checkpoint(ck);
    if (!config.empty()) return {std::move(model), RunConfig::load(config).cluster_config()};
    if (!ck.meta.contains("clusters")) throw IoError("checkpoint has no cluster config; pass --config");
    return {std::move(model), ClusterConfig::from_json(ck.meta["clusters"])};
}

std::vector<SampleRecord> partition(const std::vector<SampleRecord>& all, const std::string& which)
{
    std::vector<SampleRecord> out;
    for (const auto& r : all)
        if (which == "all" || r.split == which) out.push_back(r);
    return out;
}

std::vector<IndexSample> to_index_samples(const std::vector<SampleRecord>& recs, const std::string& cache)
{
    std::vector<IndexSample> out;
    out.reserve(recs.size());
    for (const auto& r : recs) out.push_back({r.id, load_image(r, cache), r.label});
    return out;
}

void print_hits(const std::vector<SearchHit>& hits, std::size_t k)
{
    const std::size_t n = std::min(k, hits.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::printf("%s\t%.6f", hits[i].id.c_str(), hits[i].score);
        if (hits[i].label) std::printf("\t%s", std::string(texture_class_name(*hits[i].label)).c_str());
        std::printf("\n");
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Latent-space configuration toolkit"};
    app.require_subcommand(1);

    // dataset
    Overrides ds_o;
    std::string ds_cache;
    auto* ds = app.add_subcommand("dataset", "build a dataset manifest");
    add_run_flags(ds, ds_o);
    ds->add_option("--cache", ds_cache, "also write raw float64 image blobs here");

    // train
    Overrides tr_o;
    std::string tr_manifest;
    auto* tr = app.add_subcommand("train", "train a model");
    add_run_flags(tr, tr_o);
    tr->add_option("--manifest", tr_manifest, "dataset manifest (default: rebuild from config)");

    // eval
    std::string ev_ckpt, ev_manifest, ev_config, ev_part = "test", ev_cache;
    auto* ev = app.add_subcommand("eval", "classifier and LS accuracy on a manifest partition");
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--manifest", ev_manifest)->required();
    ev->add_option("--partition", ev_part, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
    ev->add_option("--config", ev_config, "run config supplying the cluster geometry");
    ev->add_option("--cache", ev_cache);

    // index
    std::string ix_ckpt, ix_manifest, ix_config, ix_part = "test", ix_collection = "default", ix_out, ix_cache;
    auto* ix = app.add_subcommand("index", "encode a manifest partition into an index");
    ix->add_option("--checkpoint", ix_ckpt)->required();
    ix->add_option("--manifest", ix_manifest)->required();
    ix->add_option("--partition", ix_part)->check(CLI::IsMember({"train", "test", "all"}));
    ix->add_option("--collection", ix_collection);
    ix->add_option("--config", ix_config);
    ix->add_option("--out", ix_out)->required();
    ix->add_option("--cache", ix_cache);

    // search-image
    std::string si_index, si_ckpt, si_manifest, si_id, si_blob;
    std::size_t si_k = 10;
    auto* si = app.add_subcommand("search-image", "rank an index against a query image");
    si->add_option("--index", si_index)->required();
    si->add_option("--checkpoint", si_ckpt)->required();
    si->add_option("--manifest", si_manifest, "manifest holding the query record");
    si->add_option("--id", si_id, "query record id in --manifest");
    si->add_option("--image", si_blob, "raw float64 HxW query blob");
    si->add_option("--k", si_k);

    // search-cross
    std::string sc_a, sc_b, sc_id;
    std::size_t sc_k = 10;
    auto* sc = app.add_subcommand("search-cross", "rank one index against an entry of another");
    sc->add_option("--index-a", sc_a)->required();
    sc->add_option("--index-b", sc_b)->required();
    sc->add_option("--id", sc_id)->required();
    sc->add_option("--k", sc_k);

    // search-text
    std::string st_index, st_query, st_jitter = "center";
    std::uint64_t st_seed = 0;
    std::size_t st_k = 10;
    auto* st = app.add_subcommand("search-text", "rank an index against a class-name query");
    st->add_option("--index", st_index)->required();
    st->add_option("--query", st_query, "name or name:weight,name:weight")->required();
    st->add_option("--jitter", st_jitter)->check(CLI::IsMember({"center", "random"}));
    st->add_option("--seed", st_seed);
    st->add_option("--k", st_k);

    // plot
    std::string pl_index, pl_general, pl_ckpt, pl_manifest, pl_config, pl_out, pl_cache;
    auto* pl = app.add_subcommand("plot", "SVG scatter of LS encodings");
    pl->add_option("--index", pl_index, "index whose entries are drawn as small points");
    pl->add_option("--general", pl_general, "index drawn as large points");
    pl->add_option("--checkpoint", pl_ckpt, "encode --manifest with this model instead");
    pl->add_option("--manifest", pl_manifest);
    pl->add_option("--config", pl_config);
    pl->add_option("--cache", pl_cache);
    pl->add_option("--out", pl_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*ds) {
            const RunConfig cfg = resolve(ds_o);
            const Dataset d = build_dataset(cfg.data.per_class, cfg.data.split, cfg.data.aug_per_image, cfg.sae.input_hw);
            fs::create_directories(cfg.output_dir);
            const auto path = cfg.output_dir / "manifest.jsonl";
            write_manifest(path, d);
            if (!ds_cache.empty()) {
                fs::create_directories(ds_cache);
                for (const auto* part : {&d.train, &d.test})
                    for (const auto& r : *part) write_blob(fs::path(ds_cache) / (r.id + ".f64"), render(r));
            }
            std::cerr << "dataset: " << d.train.size() << " train, " << d.test.size() << " test records\n";
            std::printf("%s\n", path.string().c_str());
        } else if (*tr) {
            const RunConfig cfg = resolve(tr_o);
            const TrainResult r = train_run(cfg, tr_manifest);
            std::printf("%s\n", r.final_train.to_json().dump().c_str());
            std::printf("%s\n", (cfg.output_dir / "checkpoint.lsf").string().c_str());
        } else if (*ev) {
            const auto lm = load_model(ev_ckpt, ev_config);
            const LabeledImages data = render_records(partition(read_manifest(ev_manifest), ev_part), ev_cache);
            if (data.size() == 0) throw ContractError("eval: partition '" + ev_part + "' is empty");
            const Encoded enc = encode_all(lm.model, data.images);
            const LatentSummary s = summarize(enc.z, enc.logits, data.labels, lm.clusters);
            nlohmann::json report = s.to_json();
            report["partition"] = ev_part;
            report["class_names"] = texture_class_names();
            std::printf("%s\n", report.dump(2).c_str());
        } else if (*ix) {
            const auto lm = load_model(ix_ckpt, ix_config);
            const auto samples = to_index_samples(partition(read_manifest(ix_manifest), ix_part), ix_cache);
            const EncodingIndex index = build_index(lm.model, samples, lm.clusters, ix_collection);
            index.save(ix_out);
            std::cerr << "index: " << index.size() << " entries\n";
        } else if (*si) {
            const EncodingIndex index = EncodingIndex::load(si_index);
            const SaeModel model = SaeModel::load(si_ckpt);
            if (model_fingerprint(model) != index.fingerprint())
                throw IncompatibleIndexError("the checkpoint is not the encoder that built this index");
            NdArray query;
            if (!si_blob.empty()) {
                query = read_blob(si_blob, model.config().input_hw);
            } else {
                if (si_manifest.empty() || si_id.empty()) throw ContractError("search-image needs --image or --manifest with --id");
                bool found = false;
                for (const auto& r : read_manifest(si_manifest))
                    if (r.id == si_id) {
                        query = render(r);
                        found = true;
                        break;
                    }
                if (!found) throw ContractError("record '" + si_id + "' not in manifest");
            }
            print_hits(search_by_image(index, model, query), si_k);
        } else if (*sc) {
            print_hits(search_cross(EncodingIndex::load(sc_a), EncodingIndex::load(sc_b), sc_id), sc_k);
        } else if (*st) {
            const EncodingIndex index = EncodingIndex::load(st_index);
            const TextQuery q =
                parse_text_query(st_query, st_jitter == "center" ? Jitter::center : Jitter::random_in_cluster, st_seed);
            print_hits(search_by_text(index, q), st_k);
        } else if (*pl) {
            std::vector<PlotPoint> small, large;
            std::optional<ClusterConfig> clusters;
            auto points_of = [](const EncodingIndex& index, std::vector<PlotPoint>& out) {
                if (index.cfg().n_d() != 2) throw UnsupportedPlotError("plot needs a 2-D latent space");
                for (const auto& e : index.entries()) out.push_back({e.id, e.z[0], e.z[1], e.label});
            };
            if (!pl_index.empty()) {
                const EncodingIndex index = EncodingIndex::load(pl_index);
                clusters = index.cfg();
                points_of(index, small);
            }
            if (!pl_general.empty()) {
                const EncodingIndex g = EncodingIndex::load(pl_general);
                if (!clusters) clusters = g.cfg();
                points_of(g, large);
            }
            if (!pl_ckpt.empty()) {
                if (pl_manifest.empty()) throw ContractError("plot with --checkpoint needs --manifest");
                const auto lm = load_model(pl_ckpt, pl_config);
                if (lm.model.config().latent_dims != 2) throw UnsupportedPlotError("plot needs a 2-D latent space");
                clusters = lm.clusters;
                const auto recs = read_manifest(pl_manifest);
                for (const auto& [which, dst] : {std::pair{"train", &small}, std::pair{"test", &large}}) {
                    const LabeledImages data = render_records(partition(recs, which), pl_cache);
                    if (data.size() == 0) continue;
                    const Encoded enc = encode_all(lm.model, data.images);
                    for (std::size_t i = 0; i < data.size(); ++i)
                        dst->push_back({data.ids[i], enc.z[2 * i], enc.z[2 * i + 1],
                                        static_cast<TextureClass>(data.labels[i])});
                }
            }
            if (!clusters) throw ContractError("plot needs --index, --general or --checkpoint");
            write_file(pl_out, render_ls_svg(*clusters, small, large));
            std::cerr << "plot: " << small.size() << " small and " << large.size() << " large points\n";
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
