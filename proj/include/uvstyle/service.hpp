/**
 * @file service.hpp
 * @brief Request handlers for the HTTP API over an immutable store snapshot
 *
 * Handlers are plain functions from (snapshot, request) to a status code and a
 * JSON body, so they can be exercised without a socket. The HTTP wiring lives
 * in http_server.hpp.
 */
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "uvstyle/encoder.hpp"
#include "uvstyle/errors.hpp"
#include "uvstyle/fewshot.hpp"
#include "uvstyle/geom.hpp"
#include "uvstyle/grad.hpp"
#include "uvstyle/index.hpp"
#include "uvstyle/style.hpp"

namespace uvstyle {

// ---------------------------------------------------------------------------
// Mesh preview

struct MeshPreview {
    std::string solid_id;
    std::vector<double> positions;  ///< xyz per vertex
    std::vector<double> normals;    ///< unit normal per vertex
    std::vector<int> triangles;     ///< three vertex indices per triangle
    std::vector<int> face_of_vertex;
    std::vector<SampleRef> sample_of_vertex;

    int num_vertices() const { return static_cast<int>(face_of_vertex.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size() / 3); }
};

/// Two triangles per grid cell, each emitted only when all three corners are
/// visible. Vertices are the visible samples only.
inline MeshPreview mesh_preview(const UVSolid& s) {
    MeshPreview m;
    m.solid_id = s.solid_id;
    for (int f = 0; f < s.num_faces(); ++f) {
        const auto& face = s.faces[f];
        std::vector<int> vid(kSamplesPerFace, -1);
        for (int k = 0; k < kSamplesPerFace; ++k) {
            if (!face.visible(k)) continue;
            vid[k] = m.num_vertices();
            const auto p = face.xyz(k), n = face.normal(k);
            m.positions.insert(m.positions.end(), p.begin(), p.end());
            m.normals.insert(m.normals.end(), n.begin(), n.end());
            m.face_of_vertex.push_back(f);
            m.sample_of_vertex.push_back({f, k});
        }
        for (int u = 0; u + 1 < kGrid; ++u)
            for (int v = 0; v + 1 < kGrid; ++v) {
                const int a = vid[UVFace::sample_index(u, v)], b = vid[UVFace::sample_index(u + 1, v)];
                const int c = vid[UVFace::sample_index(u + 1, v + 1)], d = vid[UVFace::sample_index(u, v + 1)];
                if (a >= 0 && b >= 0 && c >= 0) m.triangles.insert(m.triangles.end(), {a, b, c});
                if (a >= 0 && c >= 0 && d >= 0) m.triangles.insert(m.triangles.end(), {a, c, d});
            }
    }
    return m;
}

inline json mesh_to_json(const MeshPreview& m) {
    return {{"solid_id", m.solid_id},
            {"num_vertices", m.num_vertices()},
            {"num_triangles", m.num_triangles()},
            {"positions", m.positions},
            {"normals", m.normals},
            {"face_of_vertex", m.face_of_vertex},
            {"triangles", m.triangles}};
}

// ---------------------------------------------------------------------------
// Snapshot

inline const std::vector<std::string>& layer_names() {
    static const std::vector<std::string> names{"input", "conv1", "conv2", "conv3", "face_embed", "gnn1", "gnn2"};
    return names;
}

inline std::string layer_name(int l) {
    return l < static_cast<int>(layer_names().size()) ? layer_names()[l] : "layer" + std::to_string(l);
}

/// Everything a request can read. Never modified after construction apart
/// from the mesh cache, which memoizes a pure function of the solid.
struct Snapshot {
    EmbeddingStore store;
    Dataset dataset;
    WeightBundle weights;
    NormalizationPolicy policy;
    std::filesystem::path store_dir, data_dir;
    std::map<std::string, std::size_t> solid_index;

    const UVSolid& solid(const std::string& id) const {
        auto it = solid_index.find(id);
        if (it == solid_index.end()) throw ContractError("unknown solid id \"" + id + "\"");
        return dataset.solids[it->second];
    }

    std::shared_ptr<const json> mesh(const std::string& id) const {
        std::lock_guard lock(mesh_mutex_);
        if (auto it = mesh_cache_.find(id); it != mesh_cache_.end()) return it->second;
        auto j = std::make_shared<const json>(mesh_to_json(mesh_preview(solid(id))));
        mesh_cache_.emplace(id, j);
        return j;
    }

private:
    mutable std::mutex mesh_mutex_;
    mutable std::map<std::string, std::shared_ptr<const json>> mesh_cache_;
};

/// Loads a store directory and its dataset. Every stored id must be present in
/// the dataset, and the encoder weights must match the store fingerprint.
inline std::shared_ptr<const Snapshot> load_snapshot(const std::filesystem::path& store_dir,
                                                     const std::filesystem::path& data_dir) {
    if (!std::filesystem::is_directory(store_dir)) throw Error("store directory not found: " + store_dir.string());
    if (!std::filesystem::is_directory(data_dir)) throw Error("dataset directory not found: " + data_dir.string());
    auto s = std::make_shared<Snapshot>();
    s->store_dir = store_dir;
    s->data_dir = data_dir;
    s->store = read_store_dir(store_dir);
    const auto wpath = store_dir / kWeightsFile;
    if (!std::filesystem::exists(wpath)) throw Error("no encoder weights at " + wpath.string());
    s->weights = load_weights(read_file(wpath));
    if (s->store.size() && s->weights.fingerprint() != s->store.fingerprint())
        throw IncompatibleError("encoder weights in " + wpath.string() + " do not match the store fingerprint");
    s->policy = policy_from_meta(s->store.meta());
    s->dataset = read_dataset(data_dir);
    for (std::size_t i = 0; i < s->dataset.solids.size(); ++i) s->solid_index[s->dataset.solids[i].solid_id] = i;
    for (const auto& id : s->store.ids())
        if (!s->solid_index.count(id)) throw Error("store id \"" + id + "\" is missing from " + data_dir.string());
    return s;
}

/// The one mutable cell of the service: readers take a shared pointer and keep
/// the old snapshot alive for as long as their request runs.
class SnapshotCell {
public:
    explicit SnapshotCell(std::shared_ptr<const Snapshot> s) : snap_(std::move(s)) {}
    std::shared_ptr<const Snapshot> get() const {
        std::lock_guard lock(m_);
        return snap_;
    }
    void set(std::shared_ptr<const Snapshot> s) {
        std::lock_guard lock(m_);
        snap_ = std::move(s);
    }

private:
    mutable std::mutex m_;
    std::shared_ptr<const Snapshot> snap_;
};

// ---------------------------------------------------------------------------
// Requests

struct Response {
    int status = 200;
    json body;
};

/// A request that fails validation; reported as 422 with the offending field.
class RequestError : public Error {
public:
    RequestError(std::string field, const std::string& msg, int status = 422)
        : Error(msg), field_(std::move(field)), status_(status) {}
    const std::string& field() const { return field_; }
    int status() const { return status_; }

private:
    std::string field_;
    int status_;
};

struct QueryRequest {
    std::string query_id;
    std::optional<std::vector<double>> weights;
    int k = 10;
    bool exclude_self = false;
};

struct FewshotRequest {
    std::vector<std::string> positives, negatives;
    int auto_negative_count = 0;
    std::uint64_t seed = 0;
    std::optional<std::string> target_id;
    int k = 10;
};

struct GradientRequest {
    std::string subject_id, reference_id;
    std::optional<std::vector<double>> weights;
    std::optional<double> k_scale;
};

namespace detail {

template <class T>
T field(const json& j, const char* name, T fallback) {
    if (!j.contains(name) || j.at(name).is_null()) return fallback;
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw RequestError(name, std::string("field \"") + name + "\" has the wrong type");
    }
}

template <class T>
T required(const json& j, const char* name) {
    if (!j.contains(name) || j.at(name).is_null())
        throw RequestError(name, std::string("field \"") + name + "\" is required");
    return field<T>(j, name, T{});
}

inline void require_object(const json& j) {
    if (!j.is_object()) throw RequestError("", "request body must be a JSON object", 400);
}

inline std::string nonempty_id(const json& j, const char* name) {
    auto id = required<std::string>(j, name);
    if (id.empty()) throw RequestError(name, std::string("field \"") + name + "\" must not be empty");
    return id;
}

inline int positive_k(const json& j) {
    const int k = field<int>(j, "k", 10);
    if (k < 1) throw RequestError("k", "k must be >= 1");
    return k;
}

inline std::optional<std::vector<double>> optional_weights(const json& j) {
    if (!j.contains("weights") || j.at("weights").is_null()) return std::nullopt;
    return field<std::vector<double>>(j, "weights", {});
}

}  // namespace detail

inline QueryRequest parse_query_request(const json& j) {
    detail::require_object(j);
    QueryRequest r;
    r.query_id = detail::nonempty_id(j, "query_id");
    r.weights = detail::optional_weights(j);
    r.k = detail::positive_k(j);
    r.exclude_self = detail::field<bool>(j, "exclude_self", false);
    return r;
}

inline FewshotRequest parse_fewshot_request(const json& j) {
    detail::require_object(j);
    FewshotRequest r;
    r.positives = detail::required<std::vector<std::string>>(j, "positives");
    if (r.positives.empty()) throw RequestError("positives", "at least one positive example is required");
    r.negatives = detail::field<std::vector<std::string>>(j, "negatives", {});
    for (const auto& id : r.positives)
        if (id.empty()) throw RequestError("positives", "ids must not be empty");
    for (const auto& id : r.negatives)
        if (id.empty()) throw RequestError("negatives", "ids must not be empty");
    r.auto_negative_count = detail::field<int>(j, "auto_negative_count", 0);
    if (r.auto_negative_count < 0) throw RequestError("auto_negative_count", "auto_negative_count must be >= 0");
    r.seed = detail::field<std::uint64_t>(j, "seed", 0);
    if (j.contains("target_id") && !j.at("target_id").is_null()) r.target_id = detail::nonempty_id(j, "target_id");
    r.k = detail::positive_k(j);
    return r;
}

inline GradientRequest parse_gradient_request(const json& j) {
    detail::require_object(j);
    GradientRequest r;
    r.subject_id = detail::nonempty_id(j, "subject_id");
    r.reference_id = detail::nonempty_id(j, "reference_id");
    r.weights = detail::optional_weights(j);
    if (j.contains("k_scale") && !j.at("k_scale").is_null()) {
        r.k_scale = detail::field<double>(j, "k_scale", 0.0);
        if (!(*r.k_scale > 0) || !std::isfinite(*r.k_scale)) throw RequestError("k_scale", "k_scale must be > 0");
    }
    return r;
}

/// Validates a weight vector against the store's layer count and the simplex.
inline LayerWeights checked_weights(const std::optional<std::vector<double>>& w, int L) {
    if (!w) return LayerWeights::uniform(L);
    if (static_cast<int>(w->size()) != L)
        throw RequestError("weights", "weights must have " + std::to_string(L) + " entries, got " +
                                          std::to_string(w->size()));
    LayerWeights lw{*w};
    try {
        lw.check_simplex();
    } catch (const ContractError& e) {
        throw RequestError("weights", e.what());
    }
    return lw;
}

// ---------------------------------------------------------------------------
// Handlers

inline json labels_json(const UVSolid& s) {
    if (!s.labels) return nullptr;
    return {{"content", s.labels->content}, {"style", s.labels->style}};
}

inline json results_json(const Snapshot& snap, const RankedResults& r) {
    json arr = json::array();
    for (const auto& n : r) {
        json e = {{"id", n.id}, {"distance", n.distance}};
        if (auto it = snap.solid_index.find(n.id); it != snap.solid_index.end())
            e["labels"] = labels_json(snap.dataset.solids[it->second]);
        arr.push_back(std::move(e));
    }
    return arr;
}

inline constexpr int kPageSize = 50;

inline Response handle_list_solids(const Snapshot& snap, int page, int page_size = kPageSize) {
    if (page < 0) throw RequestError("page", "page must be >= 0", 400);
    const auto& ids = snap.store.ids();
    const int total = static_cast<int>(ids.size());
    json items = json::array();
    for (int i = page * page_size; i < std::min(total, (page + 1) * page_size); ++i)
        items.push_back({{"id", ids[i]}, {"labels", labels_json(snap.solid(ids[i]))}});
    return {200,
            {{"page", page},
             {"page_size", page_size},
             {"total", total},
             {"pages", (total + page_size - 1) / page_size},
             {"items", items}}};
}

inline Response handle_solid(const Snapshot& snap, const std::string& id) {
    if (!snap.store.find(id)) throw RequestError("id", "unknown solid id \"" + id + "\"", 404);
    const auto& s = snap.solid(id);
    return {200,
            {{"id", id},
             {"labels", labels_json(s)},
             {"num_faces", s.num_faces()},
             {"visible_samples", s.visible_count()},
             {"num_adjacency_pairs", s.adjacency.size()},
             {"bbox_diagonal", s.bbox_diagonal()}}};
}

inline Response handle_mesh(const Snapshot& snap, const std::string& id) {
    if (!snap.store.find(id)) throw RequestError("id", "unknown solid id \"" + id + "\"", 404);
    return {200, *snap.mesh(id)};
}

inline Response handle_layers(const Snapshot& snap) {
    const auto dims = snap.weights.spec.layer_dims();
    json layers = json::array();
    for (int l = 0; l < static_cast<int>(dims.size()); ++l) {
        json e = {{"index", l},
                  {"name", layer_name(l)},
                  {"channels", dims[l]},
                  {"gram_length", triu_length(dims[l])},
                  {"normalization", norm_name(snap.policy.per_layer.at(l))}};
        if (snap.store.size()) e["stored_length"] = snap.store.at(0).layers[l].size();
        layers.push_back(std::move(e));
    }
    return {200,
            {{"layers", layers},
             {"policy", snap.policy.tag()},
             {"reduction", snap.store.reduction()},
             {"encoder", snap.store.fingerprint()},
             {"count", snap.store.size()}}};
}

inline Response handle_query(const Snapshot& snap, const json& body) {
    const auto req = parse_query_request(body);
    if (!snap.store.find(req.query_id)) throw RequestError("query_id", "unknown solid id \"" + req.query_id + "\"", 404);
    const auto w = checked_weights(req.weights, snap.store.num_layers());
    const auto r = topk(snap.store, req.query_id, w, req.k, req.exclude_self);
    return {200,
            {{"query_id", req.query_id},
             {"weights", w.w},
             {"k", req.k},
             {"exclude_self", req.exclude_self},
             {"results", results_json(snap, r)}}};
}

inline Response handle_fewshot(const Snapshot& snap, const json& body) {
    const auto req = parse_fewshot_request(body);
    auto check_ids = [&](const std::vector<std::string>& ids, const char* field) {
        for (const auto& id : ids)
            if (!snap.store.find(id)) throw RequestError(field, "unknown solid id \"" + id + "\"", 404);
    };
    check_ids(req.positives, "positives");
    check_ids(req.negatives, "negatives");
    if (req.target_id) check_ids({*req.target_id}, "target_id");

    ExampleSelection sel{req.positives, req.negatives, req.auto_negative_count, req.seed};
    FewshotResult r;
    try {
        r = fewshot_query(sel, req.target_id, req.k, snap.store);
    } catch (const ContractError& e) {
        throw RequestError("positives", e.what());
    }
    json out = {{"weights", r.weights.w},
                {"energies", r.energies.E},
                {"c1", r.energies.c1},
                {"c2", r.energies.c2},
                {"num_positives", r.energies.num_positives},
                {"num_negatives", r.energies.num_negatives},
                {"negatives_used", r.energies.negatives_used},
                {"query_id", r.query_id},
                {"k", req.k},
                {"results", results_json(snap, r.results)}};
    if (req.auto_negative_count > 0) out["seed"] = req.seed;
    return {200, out};
}

inline Response handle_gradient(const Snapshot& snap, const json& body) {
    const auto req = parse_gradient_request(body);
    for (const auto& [field, id] : {std::pair{"subject_id", req.subject_id}, std::pair{"reference_id", req.reference_id}})
        if (!snap.solid_index.count(id)) throw RequestError(field, "unknown solid id \"" + id + "\"", 404);
    const auto w = checked_weights(req.weights, snap.weights.spec.num_layers());
    const auto& subject = snap.solid(req.subject_id);
    const auto& reference = snap.solid(req.reference_id);
    const StylePipeline pipe{&snap.weights, snap.policy};
    const auto g = style_gradient_analytic(subject, reference, w, pipe);
    const double diag = subject.bbox_diagonal();
    const double k = req.k_scale.value_or(default_glyph_scale(g, diag));
    return {200,
            {{"subject_id", g.subject_id},
             {"reference_id", g.reference_id},
             {"weights", w.w},
             {"k_scale", k},
             {"distance", solid_style_distance(subject, reference, w, pipe)},
             {"max_gradient_norm", g.max_norm()},
             {"glyphs", glyphs_json(g, k)}}};
}

/// Runs a handler and maps errors onto status codes: request validation 4xx,
/// unknown ids 404, everything else 500.
template <class F>
Response guarded(F&& f) {
    try {
        return f();
    } catch (const RequestError& e) {
        json body = {{"error", e.what()}};
        if (!e.field().empty()) body["field"] = e.field();
        return {e.status(), body};
    } catch (const json::exception& e) {
        return {400, {{"error", std::string("malformed JSON: ") + e.what()}}};
    } catch (const std::exception& e) {
        return {500, {{"error", e.what()}}};
    }
}

}  // namespace uvstyle
