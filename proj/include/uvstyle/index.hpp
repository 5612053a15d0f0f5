/**
 * @file index.hpp
 * @brief Immutable embedding store, exact weighted top-k retrieval and the store file format
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "uvstyle/encoder.hpp"
#include "uvstyle/errors.hpp"
#include "uvstyle/geom.hpp"
#include "uvstyle/io.hpp"
#include "uvstyle/pca.hpp"
#include "uvstyle/style.hpp"

namespace uvstyle {

struct Neighbor {
    std::string id;
    double distance = 0;
    bool operator==(const Neighbor&) const = default;
};

using RankedResults = std::vector<Neighbor>;

/// Snapshot of one embedding per solid, all produced by the same pipeline.
class EmbeddingStore {
public:
    EmbeddingStore() = default;

    /// `meta` records how the embeddings were produced (encoder spec, policy, PCA id).
    EmbeddingStore(std::vector<std::string> ids, std::vector<GramEmbedding> entries, json meta = json::object())
        : ids_(std::move(ids)), entries_(std::move(entries)), meta_(std::move(meta)) {
        if (ids_.size() != entries_.size()) throw ContractError("store ids and embeddings differ in count");
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (!index_.emplace(ids_[i], i).second) throw ContractError("duplicate solid id " + ids_[i]);
            if (i > 0) check_compatible(entries_[0], entries_[i]);
        }
        sqnorms_.resize(entries_.size());
        for (std::size_t i = 0; i < entries_.size(); ++i)
            for (const auto& layer : entries_[i].layers) sqnorms_[i].push_back(dot(layer, layer));
    }

    std::size_t size() const { return ids_.size(); }
    int num_layers() const { return entries_.empty() ? 0 : entries_.front().num_layers(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const GramEmbedding& at(std::size_t i) const { return entries_[i]; }
    const json& meta() const { return meta_; }

    std::string fingerprint() const { return entries_.empty() ? "" : entries_.front().fingerprint; }
    std::string policy() const { return entries_.empty() ? "" : entries_.front().policy; }
    std::string reduction() const { return entries_.empty() ? "raw" : entries_.front().reduction; }

    std::optional<std::size_t> find(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t require(const std::string& id) const {
        auto i = find(id);
        if (!i) throw ContractError("unknown solid id \"" + id + "\"");
        return *i;
    }
    const GramEmbedding& get(const std::string& id) const { return entries_[require(id)]; }

    double layer_distance(std::size_t i, std::size_t j, int l) const {
        return cosine_distance(dot(entries_[i].layers[l], entries_[j].layers[l]), sqnorms_[i][l], sqnorms_[j][l]);
    }

    double distance(std::size_t i, std::size_t j, const LayerWeights& w) const {
        double d = 0;
        for (int l = 0; l < num_layers(); ++l)
            if (w.w[l] != 0.0) d += w.w[l] * layer_distance(i, j, l);
        return d;
    }

    /// Style distance between an external embedding and entry j.
    double distance(const GramEmbedding& q, std::size_t j, const LayerWeights& w) const {
        check_compatible(q, entries_[j]);
        double d = 0;
        for (int l = 0; l < num_layers(); ++l)
            if (w.w[l] != 0.0)
                d += w.w[l] * cosine_distance(dot(q.layers[l], entries_[j].layers[l]), dot(q.layers[l], q.layers[l]),
                                              sqnorms_[j][l]);
        return d;
    }

private:
    std::vector<std::string> ids_;
    std::vector<GramEmbedding> entries_;
    json meta_;
    std::vector<std::vector<double>> sqnorms_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Ascending by distance, ties by id.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
}

namespace detail {

inline RankedResults rank(std::vector<Neighbor> all, int k) {
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end(), neighbor_less);
    all.resize(kk);
    return all;
}

inline void check_query_weights(const EmbeddingStore& store, const LayerWeights& w, int k) {
    if (k < 1) throw ContractError("k must be >= 1");
    w.check_simplex();
    if (w.size() != store.num_layers())
        throw ContractError("weight vector has " + std::to_string(w.size()) + " entries, store has " +
                            std::to_string(store.num_layers()) + " layers");
}

}  // namespace detail

/// Exact k nearest entries of the store to `query_id` under weighted style distance.
inline RankedResults topk(const EmbeddingStore& store, const std::string& query_id, const LayerWeights& w, int k,
                          bool exclude_self) {
    const std::size_t q = store.require(query_id);
    detail::check_query_weights(store, w, k);
    std::vector<Neighbor> all;
    all.reserve(store.size());
    for (std::size_t j = 0; j < store.size(); ++j) {
        if (exclude_self && j == q) continue;
        all.push_back({store.ids()[j], j == q ? 0.0 : store.distance(q, j, w)});
    }
    return detail::rank(std::move(all), k);
}

/// Same ranking for an embedding that is not in the store.
inline RankedResults topk(const EmbeddingStore& store, const GramEmbedding& query, const LayerWeights& w, int k) {
    detail::check_query_weights(store, w, k);
    std::vector<Neighbor> all;
    all.reserve(store.size());
    for (std::size_t j = 0; j < store.size(); ++j) all.push_back({store.ids()[j], store.distance(query, j, w)});
    return detail::rank(std::move(all), k);
}

/// Per-layer pairwise distance cache: table[l][i * n + j].
class LayerDistanceTable {
public:
    explicit LayerDistanceTable(const EmbeddingStore& s) : n_(s.size()), L_(s.num_layers()) {
        table_.assign(L_, std::vector<double>(n_ * n_, 0.0));
        for (int l = 0; l < L_; ++l)
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t j = i + 1; j < n_; ++j) {
                    const double d = s.layer_distance(i, j, l);
                    table_[l][i * n_ + j] = d;
                    table_[l][j * n_ + i] = d;
                }
    }
    double operator()(int l, std::size_t i, std::size_t j) const { return table_[l][i * n_ + j]; }
    double weighted(std::size_t i, std::size_t j, const LayerWeights& w) const {
        double d = 0;
        for (int l = 0; l < L_; ++l)
            if (w.w[l] != 0.0) d += w.w[l] * table_[l][i * n_ + j];
        return d;
    }
    std::size_t size() const { return n_; }
    int num_layers() const { return L_; }

private:
    std::size_t n_;
    int L_;
    std::vector<std::vector<double>> table_;
};

// ---------------------------------------------------------------------------
// Building

/// Raw (unreduced) embeddings of every solid, in dataset order.
inline std::vector<GramEmbedding> embed_solids(const std::vector<UVSolid>& solids, const WeightBundle& w,
                                               const NormalizationPolicy& p) {
    const auto fp = w.fingerprint();
    std::vector<GramEmbedding> out;
    out.reserve(solids.size());
    for (const auto& s : solids) {
        try {
            out.push_back(extract_grams(forward(s, w), p, fp));
        } catch (const DegenerateLayerError& e) {
            throw DegenerateLayerError(e.layer(), "solid " + s.solid_id + ": " + e.what());
        }
    }
    return out;
}

inline void quantize_to_f32(GramEmbedding& g) {
    for (auto& layer : g.layers)
        for (double& v : layer) v = static_cast<double>(static_cast<float>(v));
}

inline json store_meta(const WeightBundle& w, const NormalizationPolicy& p, const PcaModel* pca) {
    json policy = json::array();
    for (auto k : p.per_layer) policy.push_back(norm_name(k));
    return {{"encoder", w.fingerprint()},
            {"encoder_spec", w.spec.to_json()},
            {"encoder_provenance", w.provenance == Provenance::Seeded ? "seeded" : "loaded"},
            {"policy", policy},
            {"policy_epsilon", p.epsilon},
            {"layer0_positions_only", p.layer0_positions_only},
            {"reduction", pca ? pca->reduction_tag() : "raw"}};
}

/// Embeds a dataset, optionally projecting through a PCA model. Stored vectors
/// are rounded to float32 so an in-memory store ranks exactly like its file.
inline EmbeddingStore build_store(const Dataset& d, const WeightBundle& w, const NormalizationPolicy& p,
                                  const PcaModel* pca = nullptr) {
    auto raw = embed_solids(d.solids, w, p);
    std::vector<std::string> ids;
    std::vector<GramEmbedding> entries;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        ids.push_back(d.solids[i].solid_id);
        auto g = pca ? reduce(raw[i], *pca) : std::move(raw[i]);
        quantize_to_f32(g);
        entries.push_back(std::move(g));
    }
    return EmbeddingStore(std::move(ids), std::move(entries), store_meta(w, p, pca));
}

/// Rebuilds the normalization policy recorded in a store's metadata.
inline NormalizationPolicy policy_from_meta(const json& meta) {
    NormalizationPolicy p;
    for (const auto& n : meta.at("policy")) p.per_layer.push_back(norm_from_name(n.get<std::string>()));
    p.epsilon = meta.value("policy_epsilon", 1e-5);
    p.layer0_positions_only = meta.value("layer0_positions_only", false);
    return p;
}

// ---------------------------------------------------------------------------
// Store file:
//   "UVES" | u32 version | str meta-json | str encoder | str policy | str reduction |
//   u32 L | L x u32 length | u32 count | count x str id | count x L x u32 n_used |
//   per layer: count x length float32 (contiguous block per layer)

inline Bytes save_store(const EmbeddingStore& s) {
    ByteWriter w;
    w.magic("UVES");
    w.u32(1);
    w.str(s.meta().dump());
    w.str(s.fingerprint());
    w.str(s.policy());
    w.str(s.reduction());
    const int L = s.num_layers();
    w.u32(static_cast<std::uint32_t>(L));
    for (int l = 0; l < L; ++l) w.u32(static_cast<std::uint32_t>(s.size() ? s.at(0).layers[l].size() : 0));
    w.u32(static_cast<std::uint32_t>(s.size()));
    for (const auto& id : s.ids()) w.str(id);
    for (std::size_t i = 0; i < s.size(); ++i)
        for (int l = 0; l < L; ++l)
            w.u32(static_cast<std::uint32_t>(l < static_cast<int>(s.at(i).n_used.size()) ? s.at(i).n_used[l] : 0));
    for (int l = 0; l < L; ++l)
        for (std::size_t i = 0; i < s.size(); ++i)
            for (double v : s.at(i).layers[l]) w.f32(static_cast<float>(v));
    return std::move(w).bytes();
}

inline EmbeddingStore load_store(const Bytes& b) {
    ByteReader r(b);
    r.expect_magic("UVES");
    if (const auto v = r.u32("version"); v != 1) throw ParseError("unknown store version " + std::to_string(v));
    json meta;
    try {
        meta = json::parse(r.str("meta"));
    } catch (const json::exception& e) {
        throw ParseError(std::string("store meta: ") + e.what());
    }
    const auto encoder = r.str("encoder");
    const auto policy = r.str("policy");
    const auto reduction = r.str("reduction");
    const auto L = r.u32("layer count");
    if (L > 1024) throw ParseError("implausible layer count " + std::to_string(L));
    std::vector<std::uint32_t> len(L);
    for (auto& x : len) x = r.u32("layer length");
    const auto count = r.u32("entry count");
    std::vector<std::string> ids(count);
    for (auto& id : ids) id = r.str("id");
    std::vector<GramEmbedding> entries(count);
    for (auto& e : entries) {
        e.fingerprint = encoder;
        e.policy = policy;
        e.reduction = reduction;
        e.layers.resize(L);
        e.n_used.resize(L);
        for (auto& n : e.n_used) n = static_cast<int>(r.u32("n_used"));
    }
    std::vector<float> buf;
    for (std::uint32_t l = 0; l < L; ++l)
        for (auto& e : entries) {
            buf.resize(len[l]);
            r.read_f32(buf.data(), len[l], "embedding block");
            e.layers[l].assign(buf.begin(), buf.end());
        }
    r.expect_end();
    return EmbeddingStore(std::move(ids), std::move(entries), std::move(meta));
}

inline constexpr const char* kStoreFile = "embeddings.uves";
inline constexpr const char* kPcaFile = "pca.uvpc";
inline constexpr const char* kWeightsFile = "encoder.uvwb";

/// A store directory holds the store, the encoder weights it was built with and,
/// when reduced, the PCA model.
inline void write_store_dir(const std::filesystem::path& dir, const EmbeddingStore& s, const WeightBundle& w,
                            const PcaModel* pca) {
    std::filesystem::create_directories(dir);
    write_file(dir / kStoreFile, save_store(s));
    write_file(dir / kWeightsFile, save_weights(w));
    if (pca) write_file(dir / kPcaFile, save_pca(*pca));
    else std::filesystem::remove(dir / kPcaFile);
}

inline EmbeddingStore read_store_dir(const std::filesystem::path& dir) {
    const auto p = dir / kStoreFile;
    if (!std::filesystem::exists(p)) throw Error("no store at " + p.string());
    return load_store(read_file(p));
}

}  // namespace uvstyle
