/**
 * @file uvstyle.cpp
 * @brief Command-line front end: gen | embed | query | fewshot | probe | precision | ablate | grad | serve
 *
 * Exit codes: 0 success, 1 runtime error, 2 usage error.
 */
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uvstyle/encoder.hpp"
#include "uvstyle/eval.hpp"
#include "uvstyle/fewshot.hpp"
#include "uvstyle/geom.hpp"
#include "uvstyle/grad.hpp"
#include "uvstyle/http_server.hpp"
#include "uvstyle/index.hpp"
#include "uvstyle/pca.hpp"
#include "uvstyle/service.hpp"
#include "uvstyle/style.hpp"
#include "uvstyle/synth.hpp"

namespace fs = std::filesystem;
using namespace uvstyle;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

/// Parses "a,b,c" as numbers; malformed entries are a usage error.
template <class T>
std::vector<T> parse_numbers(const std::string& s, const std::string& flag) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) {
        std::size_t used = 0;
        T v{};
        try {
            if constexpr (std::is_floating_point_v<T>) v = static_cast<T>(std::stod(item, &used));
            else v = static_cast<T>(std::stoll(item, &used));
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw CLI::ValidationError(flag, "not a number: " + item);
        out.push_back(v);
    }
    return out;
}

std::optional<LayerWeights> parse_weights(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return LayerWeights{parse_numbers<double>(s, "--weights")};
}

std::vector<std::string> style_labels(const Dataset& d, const EmbeddingStore& store, const std::string& kind) {
    std::vector<std::string> labels;
    for (const auto& id : store.ids()) {
        const auto* s = d.find(id);
        if (!s) throw Error("store id \"" + id + "\" is missing from the dataset");
        if (!s->labels) throw Error("solid \"" + id + "\" has no labels");
        labels.push_back(kind == "content" ? s->labels->content : s->labels->style);
    }
    return labels;
}

NormalizationPolicy policy_by_name(const std::string& name, const EncoderSpec& spec) {
    if (name == "default") return NormalizationPolicy::defaults(spec);
    const auto kind = norm_from_name(name);
    NormalizationPolicy p = NormalizationPolicy::uniform(spec.num_layers(), kind);
    if (kind == NormKind::FaceRecenter)
        throw ConfigError("face_recenter applies to per-sample layers only; use the default policy");
    return p;
}

json results_to_json(const RankedResults& r) {
    json arr = json::array();
    for (const auto& n : r) arr.push_back({{"id", n.id}, {"distance", n.distance}});
    return arr;
}

void print_results(const RankedResults& r) {
    for (std::size_t i = 0; i < r.size(); ++i) std::printf("%3zu  %-12s %.9f\n", i + 1, r[i].id.c_str(), r[i].distance);
}

void print_weights(const LayerWeights& w) {
    std::printf("weights:");
    for (double x : w.w) std::printf(" %.6f", x);
    std::printf("\n");
}

json probe_to_json(const ProbeReport& r) {
    json per = json::array();
    for (const auto& s : r.per_l2)
        per.push_back({{"l2", s.l2}, {"accuracy_mean", s.acc_mean}, {"weighted_f1_mean", s.f1_mean}});
    return {{"layer", r.layer},
            {"classes", r.classes},
            {"folds", r.folds},
            {"fold_seed", r.fold_seed},
            {"l2", r.best.l2},
            {"accuracy_mean", r.best.acc_mean},
            {"accuracy_std", r.best.acc_std},
            {"weighted_f1_mean", r.best.f1_mean},
            {"weighted_f1_std", r.best.f1_std},
            {"fold_accuracy", r.best.fold_acc},
            {"per_l2", per}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Style similarity for UV-grid B-Rep solids"};
    app.require_subcommand(1);
    app.fallthrough();
    bool as_json = false;
    app.add_flag("--json", as_json, "Machine-readable JSON output");

    const std::string default_store = env_or("UVSTYLE_STORE", "store");
    const std::string default_data = env_or("UVSTYLE_DATA", "data");

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a labeled synthetic dataset");
    std::string gen_config, gen_out;
    std::optional<int> gen_per_cell;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--config", gen_config, "Dataset config JSON (default: built-in 6 contents x 4 styles)");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--per-cell", gen_per_cell, "Examples per (content, style) cell")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Generator seed");

    // embed
    auto* embed = app.add_subcommand("embed", "Embed a dataset into a store directory");
    std::string embed_data = default_data, embed_out, embed_weights, embed_policy = "default";
    int embed_pca = 0;
    std::uint64_t embed_encoder_seed = 0;
    embed->add_option("--data", embed_data, "Dataset directory")->capture_default_str();
    embed->add_option("--out", embed_out, "Store directory to write")->required();
    embed->add_option("--pca", embed_pca, "PCA target dimension per layer (0 = raw Grams)")
        ->check(CLI::NonNegativeNumber);
    embed->add_option("--encoder-seed", embed_encoder_seed, "Seed for encoder weight initialization");
    embed->add_option("--weights", embed_weights, "Load encoder weights from a file instead of seeding");
    embed->add_option("--policy", embed_policy, "Normalization: default | none | instance_norm")
        ->check(CLI::IsMember({"default", "none", "instance_norm", "face_recenter"}));

    // query
    auto* query = app.add_subcommand("query", "Top-k style neighbours of a stored solid");
    std::string query_store = default_store, query_id, query_weights;
    int query_k = 10;
    bool query_exclude_self = false;
    query->add_option("--store", query_store, "Store directory")->capture_default_str();
    query->add_option("--id", query_id, "Query solid id")->required();
    query->add_option("--k", query_k, "Number of neighbours")->check(CLI::PositiveNumber);
    query->add_option("--weights", query_weights, "Comma-separated layer weights (default uniform)");
    query->add_flag("--exclude-self", query_exclude_self, "Drop the query from its own results");

    // fewshot
    auto* fewshot = app.add_subcommand("fewshot", "Optimize layer weights from examples and query");
    std::string fs_store = default_store, fs_pos, fs_neg, fs_target;
    int fs_autoneg = 0, fs_k = 10;
    std::uint64_t fs_seed = 0;
    fewshot->add_option("--store", fs_store, "Store directory")->capture_default_str();
    fewshot->add_option("--pos", fs_pos, "Comma-separated positive ids")->required();
    fewshot->add_option("--neg", fs_neg, "Comma-separated negative ids");
    fewshot->add_option("--autoneg", fs_autoneg, "Random negatives drawn from the rest of the store")
        ->check(CLI::NonNegativeNumber);
    fewshot->add_option("--seed", fs_seed, "Seed for auto-negative sampling");
    fewshot->add_option("--k", fs_k, "Number of neighbours")->check(CLI::PositiveNumber);
    fewshot->add_option("--target", fs_target, "Query id (default: first positive)");

    // probe
    auto* probe = app.add_subcommand("probe", "Per-layer linear probe on stored embeddings");
    std::string probe_store = default_store, probe_data = default_data, probe_label = "style", probe_layers, probe_out;
    int probe_folds = 5;
    std::uint64_t probe_seed = 0;
    probe->add_option("--store", probe_store, "Store directory")->capture_default_str();
    probe->add_option("--data", probe_data, "Dataset directory (labels)")->capture_default_str();
    probe->add_option("--label", probe_label, "Label to predict")->check(CLI::IsMember({"style", "content"}));
    probe->add_option("--layers", probe_layers, "Comma-separated layer indices (default all)");
    probe->add_option("--folds", probe_folds, "Cross-validation folds")->check(CLI::Range(2, 100));
    probe->add_option("--seed", probe_seed, "Fold assignment seed");
    probe->add_option("--out", probe_out, "Write a CSV report here");

    // precision
    auto* precision = app.add_subcommand("precision", "Few-shot Precision@10 grid for one style");
    std::string prec_store = default_store, prec_data = default_data, prec_style, prec_pos = "1,2,3,4",
                prec_neg = "0,4,8", prec_out;
    int prec_trials = 20;
    std::uint64_t prec_seed = 0;
    precision->add_option("--store", prec_store, "Store directory")->capture_default_str();
    precision->add_option("--data", prec_data, "Dataset directory (labels)")->capture_default_str();
    precision->add_option("--style", prec_style, "Style label")->required();
    precision->add_option("--pos", prec_pos, "Positive counts")->capture_default_str();
    precision->add_option("--neg", prec_neg, "Negative counts")->capture_default_str();
    precision->add_option("--trials", prec_trials, "Trials per cell")->check(CLI::PositiveNumber);
    precision->add_option("--seed", prec_seed, "Trial seed");
    precision->add_option("--out", prec_out, "Write a CSV report here");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Probe sweep over normalization policies and PCA sizes");
    std::string abl_data = default_data, abl_reductions = "0", abl_layers, abl_out;
    std::uint64_t abl_encoder_seed = 0, abl_seed = 0;
    int abl_folds = 5;
    ablate->add_option("--data", abl_data, "Dataset directory")->capture_default_str();
    ablate->add_option("--encoder-seed", abl_encoder_seed, "Seed for encoder weight initialization");
    ablate->add_option("--reductions", abl_reductions, "PCA targets, 0 = raw")->capture_default_str();
    ablate->add_option("--layers", abl_layers, "Comma-separated layer indices (default all)");
    ablate->add_option("--folds", abl_folds, "Cross-validation folds")->check(CLI::Range(2, 100));
    ablate->add_option("--seed", abl_seed, "Fold assignment seed");
    ablate->add_option("--out", abl_out, "Write the long-format CSV here");

    // grad
    auto* grad = app.add_subcommand("grad", "Style gradient of a subject towards a reference");
    std::string grad_store = default_store, grad_data = default_data, grad_subject, grad_reference, grad_weights,
                grad_mode = "analytic", grad_obj, grad_out;
    std::optional<double> grad_k;
    grad->add_option("--store", grad_store, "Store directory (encoder weights and policy)")->capture_default_str();
    grad->add_option("--data", grad_data, "Dataset directory")->capture_default_str();
    grad->add_option("--subject", grad_subject, "Subject solid id")->required();
    grad->add_option("--reference", grad_reference, "Reference solid id")->required();
    grad->add_option("--weights", grad_weights, "Comma-separated layer weights (default uniform)");
    grad->add_option("--k-scale", grad_k, "Glyph scale (default: longest glyph 5% of bbox diagonal)")
        ->check(CLI::PositiveNumber);
    grad->add_option("--mode", grad_mode, "analytic | fd")->check(CLI::IsMember({"analytic", "fd"}));
    grad->add_option("--obj", grad_obj, "Write glyph segments as OBJ");
    grad->add_option("--out", grad_out, "Write glyph JSON");

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
    ServiceConfig serve_cfg;
    try {
        serve_cfg = ServiceConfig::from_env();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::string serve_store = serve_cfg.store_dir.string(), serve_data = serve_cfg.data_dir.string(), serve_static;
    serve_cmd->add_option("--store", serve_store, "Store directory")->capture_default_str();
    serve_cmd->add_option("--data", serve_data, "Dataset directory")->capture_default_str();
    serve_cmd->add_option("--port", serve_cfg.port, "Port")->check(CLI::Range(0, 65535))->capture_default_str();
    serve_cmd->add_option("--host", serve_cfg.host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--static", serve_static, "Directory of static files served at /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    auto emit = [&](const json& j, const std::function<void()>& text) {
        if (as_json) std::cout << j.dump(2) << "\n";
        else text();
    };

    try {
        if (*gen) {
            DatasetConfig cfg = default_config();
            if (!gen_config.empty()) {
                try {
                    cfg = config_from_json(json::parse(read_text(gen_config)));
                } catch (const json::exception& e) {
                    throw ParseError(gen_config + ": " + e.what());
                }
            }
            if (gen_per_cell) cfg.per_cell = *gen_per_cell;
            if (gen_seed) cfg.seed = *gen_seed;
            const auto d = generate_dataset(cfg);
            write_dataset(gen_out, d);
            emit(manifest_to_json(d.manifest)["counts"], [&] {
                std::printf("wrote %zu solids to %s\n", d.solids.size(), gen_out.c_str());
            });
        } else if (*embed) {
            const auto d = read_dataset(embed_data);
            WeightBundle w;
            if (embed_weights.empty()) {
                EncoderSpec spec;
                spec.seed = embed_encoder_seed;
                w = init_weights(spec);
            } else {
                w = load_weights(read_file(embed_weights));
            }
            const auto policy = policy_by_name(embed_policy, w.spec);
            std::optional<PcaModel> pca;
            if (embed_pca > 0) pca = fit_pca(embed_solids(d.solids, w, policy), embed_pca);
            const auto store = build_store(d, w, policy, pca ? &*pca : nullptr);
            write_store_dir(embed_out, store, w, pca ? &*pca : nullptr);
            json lengths = json::array();
            for (int l = 0; l < store.num_layers(); ++l) lengths.push_back(store.at(0).layers[l].size());
            emit({{"out", embed_out},
                  {"count", store.size()},
                  {"encoder", store.fingerprint()},
                  {"policy", store.policy()},
                  {"reduction", store.reduction()},
                  {"layer_lengths", lengths}},
                 [&] {
                     std::printf("embedded %zu solids into %s (%s, %s)\n", store.size(), embed_out.c_str(),
                                 store.policy().c_str(), store.reduction().c_str());
                 });
        } else if (*query) {
            const auto custom = parse_weights(query_weights);
            const auto store = read_store_dir(query_store);
            const auto w = custom.value_or(LayerWeights::uniform(store.num_layers()));
            const auto r = topk(store, query_id, w, query_k, query_exclude_self);
            emit({{"query_id", query_id}, {"k", query_k}, {"weights", w.w}, {"results", results_to_json(r)}},
                 [&] { print_results(r); });
        } else if (*fewshot) {
            const auto store = read_store_dir(fs_store);
            ExampleSelection sel{split_list(fs_pos), split_list(fs_neg), fs_autoneg, fs_seed};
            std::optional<std::string> target;
            if (!fs_target.empty()) target = fs_target;
            const auto r = fewshot_query(sel, target, fs_k, store);
            json out = {{"weights", r.weights.w},
                        {"energies", r.energies.E},
                        {"c1", r.energies.c1},
                        {"c2", r.energies.c2},
                        {"negatives_used", r.energies.negatives_used},
                        {"query_id", r.query_id},
                        {"k", fs_k},
                        {"results", results_to_json(r.results)}};
            if (fs_autoneg > 0) out["seed"] = fs_seed;
            emit(out, [&] {
                print_weights(r.weights);
                std::printf("query: %s\n", r.query_id.c_str());
                print_results(r.results);
            });
        } else if (*probe) {
            const auto store = read_store_dir(probe_store);
            const auto d = read_dataset(probe_data);
            const auto labels = style_labels(d, store, probe_label);
            std::vector<GramEmbedding> emb;
            for (std::size_t i = 0; i < store.size(); ++i) emb.push_back(store.at(i));
            std::vector<int> layers = parse_numbers<int>(probe_layers, "--layers");
            if (layers.empty())
                for (int l = 0; l < store.num_layers(); ++l) layers.push_back(l);
            json arr = json::array();
            std::ostringstream csv;
            csv << "layer,dims,metric,value\n";
            for (int l : layers) {
                if (l < 0 || l >= store.num_layers()) throw ContractError("layer " + std::to_string(l) + " out of range");
                const auto rep = linear_probe(emb, store.ids(), labels, l, kDefaultL2Grid, probe_folds, probe_seed);
                arr.push_back(probe_to_json(rep));
                const auto dims = emb.front().layers[l].size();
                csv << l << ',' << dims << ",accuracy_mean," << rep.best.acc_mean << "\n"
                    << l << ',' << dims << ",accuracy_std," << rep.best.acc_std << "\n"
                    << l << ',' << dims << ",weighted_f1_mean," << rep.best.f1_mean << "\n"
                    << l << ',' << dims << ",weighted_f1_std," << rep.best.f1_std << "\n";
                if (!as_json)
                    std::printf("layer %d  acc %.4f +- %.4f  f1 %.4f  l2 %g\n", l, rep.best.acc_mean, rep.best.acc_std,
                                rep.best.f1_mean, rep.best.l2);
            }
            if (!probe_out.empty()) write_text(probe_out, csv.str());
            if (as_json) std::cout << json{{"label", probe_label}, {"layers", arr}}.dump(2) << "\n";
        } else if (*precision) {
            const auto store = read_store_dir(prec_store);
            const auto d = read_dataset(prec_data);
            const auto labels = style_labels(d, store, "style");
            const auto rep = precision_grid(store, labels, prec_style, parse_numbers<int>(prec_pos, "--pos"),
                                            parse_numbers<int>(prec_neg, "--neg"), prec_trials, prec_seed);
            if (!prec_out.empty()) write_text(prec_out, rep.to_csv());
            emit(rep.to_json(), [&] {
                std::printf("style %s (sign test is a stand-in for significance)\n", prec_style.c_str());
                for (const auto& c : rep.cells)
                    std::printf("pos %d neg %d  P@10 %.4f  baseline %.4f  gain %.4f  p %.4f\n", c.num_positives,
                                c.num_negatives, c.mean_precision, c.baseline_precision, c.gain_ratio,
                                sign_test_p(c.trial_gain));
            });
        } else if (*ablate) {
            const auto d = read_dataset(abl_data);
            EncoderSpec spec;
            spec.seed = abl_encoder_seed;
            AblationOptions opt;
            opt.reductions = parse_numbers<int>(abl_reductions, "--reductions");
            opt.layers = parse_numbers<int>(abl_layers, "--layers");
            opt.folds = abl_folds;
            opt.seed = abl_seed;
            const auto rep = ablation_sweep(d, init_weights(spec), opt);
            if (!abl_out.empty()) write_text(abl_out, rep.to_csv());
            emit(rep.to_json(), [&] {
                std::cout << rep.to_csv();
                for (const auto& n : rep.notes) std::cout << "note: " << n << "\n";
            });
        } else if (*grad) {
            const auto custom = parse_weights(grad_weights);
            const auto snap = load_snapshot(grad_store, grad_data);
            const auto w = custom.value_or(LayerWeights::uniform(snap->weights.spec.num_layers()));
            const StylePipeline pipe{&snap->weights, snap->policy};
            const auto& subject = snap->solid(grad_subject);
            const auto& reference = snap->solid(grad_reference);
            auto g = style_gradient(subject, reference, w, pipe,
                                    grad_mode == "fd" ? GradMode::FiniteDifference : GradMode::Analytic);
            g.k_scale = grad_k.value_or(default_glyph_scale(g, subject.bbox_diagonal()));
            const auto glyphs = export_glyphs(g, g.k_scale);
            if (!grad_obj.empty()) write_text(grad_obj, glyphs.obj);
            if (!grad_out.empty()) write_text(grad_out, glyphs.glyphs.dump() + "\n");
            const double dist = solid_style_distance(subject, reference, w, pipe);
            emit({{"subject_id", g.subject_id},
                  {"reference_id", g.reference_id},
                  {"weights", w.w},
                  {"mode", grad_mode},
                  {"distance", dist},
                  {"k_scale", g.k_scale},
                  {"max_gradient_norm", g.max_norm()},
                  {"samples", g.samples.size()},
                  {"glyphs", glyphs.glyphs}},
                 [&] {
                     std::printf("distance %.9f  samples %zu  max |grad| %.6g  k %.6g\n", dist, g.samples.size(),
                                 g.max_norm(), g.k_scale);
                 });
        } else if (*serve_cmd) {
            serve_cfg.store_dir = serve_store;
            serve_cfg.data_dir = serve_data;
            serve_cfg.static_dir = serve_static;
            httplib::Server server;
            std::cerr << "serving " << serve_cfg.store_dir << " on " << serve_cfg.host << ":" << serve_cfg.port << "\n";
            serve(serve_cfg, server);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        if (as_json) std::cout << json{{"error", e.what()}}.dump() << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
