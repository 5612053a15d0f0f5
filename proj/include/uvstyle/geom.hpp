/**
 * @file geom.hpp
 * @brief UV-grid B-Rep data model: faces, solids, datasets, validation and file formats
 *
 * A solid is a list of faces, each sampled on a fixed 10x10 UV grid with seven
 * channels per sample (xyz, normal, visibility mask), plus an undirected
 * face-adjacency graph.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "uvstyle/errors.hpp"
#include "uvstyle/io.hpp"

namespace uvstyle {

using json = nlohmann::json;

inline constexpr int kGrid = 10;
inline constexpr int kSamplesPerFace = kGrid * kGrid;
inline constexpr int kChannels = 7;
inline constexpr int kFaceFloats = kSamplesPerFace * kChannels;
inline constexpr std::uint32_t kSolidFormatVersion = 1;

using Vec3 = std::array<double, 3>;

/// One face sampled on the UV grid. Storage is row-major over u, then v,
/// channels ordered x, y, z, nx, ny, nz, mask.
struct UVFace {
    int face_id = 0;
    std::array<double, kFaceFloats> data{};

    static constexpr int sample_index(int u, int v) { return u * kGrid + v; }

    double& at(int sample, int channel) { return data[sample * kChannels + channel]; }
    double at(int sample, int channel) const { return data[sample * kChannels + channel]; }

    Vec3 xyz(int s) const { return {at(s, 0), at(s, 1), at(s, 2)}; }
    Vec3 normal(int s) const { return {at(s, 3), at(s, 4), at(s, 5)}; }
    double mask(int s) const { return at(s, 6); }
    bool visible(int s) const { return at(s, 6) == 1.0; }

    void set(int s, const Vec3& p, const Vec3& n, double m) {
        for (int c = 0; c < 3; ++c) {
            at(s, c) = p[c];
            at(s, 3 + c) = n[c];
        }
        at(s, 6) = m;
    }

    int visible_count() const {
        int n = 0;
        for (int s = 0; s < kSamplesPerFace; ++s) n += visible(s) ? 1 : 0;
        return n;
    }

    bool operator==(const UVFace&) const = default;
};

struct Labels {
    std::string content;
    std::string style;
    bool operator==(const Labels&) const = default;
};

using FacePair = std::pair<std::uint32_t, std::uint32_t>;

struct UVSolid {
    std::string solid_id;
    std::vector<UVFace> faces;
    std::vector<FacePair> adjacency;  ///< sorted, unique, each pair (lo, hi)
    std::optional<Labels> labels;

    int num_faces() const { return static_cast<int>(faces.size()); }

    int visible_count() const {
        int n = 0;
        for (const auto& f : faces) n += f.visible_count();
        return n;
    }

    /// Neighbour lists derived from the adjacency pairs.
    std::vector<std::vector<int>> neighbours() const {
        std::vector<std::vector<int>> nb(faces.size());
        for (auto [a, b] : adjacency) {
            if (a < faces.size() && b < faces.size() && a != b) {
                nb[a].push_back(static_cast<int>(b));
                nb[b].push_back(static_cast<int>(a));
            }
        }
        return nb;
    }

    /// Axis-aligned bounding-box diagonal over every sample position.
    double bbox_diagonal() const {
        Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
        for (const auto& f : faces)
            for (int s = 0; s < kSamplesPerFace; ++s)
                for (int c = 0; c < 3; ++c) {
                    lo[c] = std::min(lo[c], f.at(s, c));
                    hi[c] = std::max(hi[c], f.at(s, c));
                }
        double d2 = 0;
        for (int c = 0; c < 3; ++c) d2 += (hi[c] - lo[c]) * (hi[c] - lo[c]);
        return std::sqrt(d2);
    }

    bool operator==(const UVSolid&) const = default;
};

/// Sorts and de-duplicates pairs after orienting each as (lo, hi).
inline std::vector<FacePair> canonical_adjacency(std::vector<FacePair> pairs) {
    for (auto& p : pairs)
        if (p.first > p.second) std::swap(p.first, p.second);
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    int face_id = -1;     ///< -1 for solid-level violations
    std::string channel;  ///< "xyz", "normal", "mask", "adjacency", "face_id" ...
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> entries;
    bool ok() const { return entries.empty(); }
    bool mentions(const std::string& needle) const {
        return std::any_of(entries.begin(), entries.end(), [&](const Violation& v) {
            return v.message.find(needle) != std::string::npos;
        });
    }
};

inline ValidationReport validate_solid(const UVSolid& s) {
    ValidationReport r;
    auto add = [&](int face, std::string channel, std::string msg) {
        r.entries.push_back({face, std::move(channel), std::move(msg)});
    };

    const int F = s.num_faces();
    if (F == 0) add(-1, "faces", "solid has no faces");

    for (int i = 0; i < F; ++i) {
        const auto& f = s.faces[i];
        if (f.face_id != i)
            add(f.face_id, "face_id",
                "face_id " + std::to_string(f.face_id) + " at position " + std::to_string(i) +
                    " breaks the dense 0..F-1 numbering");
        bool any_visible = false;
        bool bad_mask = false, bad_normal = false, non_finite = false;
        for (int k = 0; k < kSamplesPerFace; ++k) {
            for (int c = 0; c < kChannels; ++c)
                if (!std::isfinite(f.at(k, c))) non_finite = true;
            const double m = f.mask(k);
            if (m != 0.0 && m != 1.0) bad_mask = true;
            if (m == 1.0) {
                any_visible = true;
                const auto n = f.normal(k);
                const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
                if (!(std::abs(len - 1.0) <= 1e-6)) bad_normal = true;
            }
        }
        if (non_finite) add(f.face_id, "xyz/normal", "non-finite sample value");
        if (bad_mask) add(f.face_id, "mask", "mask value not 0 or 1");
        if (bad_normal) add(f.face_id, "normal", "normal not unit at a visible sample");
        if (!any_visible) add(f.face_id, "mask", "face has no visible sample");
    }

    std::vector<FacePair> seen;
    for (auto [a, b] : s.adjacency) {
        const std::string tag = "(" + std::to_string(a) + "," + std::to_string(b) + ")";
        if (a == b) add(static_cast<int>(a), "adjacency", "self-loop " + tag);
        if (static_cast<int>(a) >= F || static_cast<int>(b) >= F)
            add(-1, "adjacency", "pair " + tag + " references a missing face");
        FacePair key = a < b ? FacePair{a, b} : FacePair{b, a};
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            add(-1, "adjacency", "duplicate pair " + tag);
        else
            seen.push_back(key);
    }

    if (F > 0) {
        const auto nb = s.neighbours();
        std::vector<char> reached(F, 0);
        std::vector<int> stack{0};
        reached[0] = 1;
        while (!stack.empty()) {
            int f = stack.back();
            stack.pop_back();
            for (int g : nb[f])
                if (!reached[g]) {
                    reached[g] = 1;
                    stack.push_back(g);
                }
        }
        const int count = static_cast<int>(std::count(reached.begin(), reached.end(), 1));
        if (count != F)
            add(-1, "adjacency",
                "face-adjacency graph is disconnected (" + std::to_string(count) + " of " +
                    std::to_string(F) + " faces reachable from face 0)");
    }
    return r;
}

// ---------------------------------------------------------------------------
// .uvsolid binary format
//
//   "UVSB" | u32 version | u32 F | u32 E | E x (u32, u32) | F x 700 float32

inline Bytes write_solid(const UVSolid& s) {
    ByteWriter w;
    w.magic("UVSB");
    w.u32(kSolidFormatVersion);
    w.u32(static_cast<std::uint32_t>(s.faces.size()));
    w.u32(static_cast<std::uint32_t>(s.adjacency.size()));
    for (auto [a, b] : s.adjacency) {
        w.u32(a);
        w.u32(b);
    }
    for (const auto& f : s.faces)
        for (double v : f.data) w.f32(static_cast<float>(v));
    return std::move(w).bytes();
}

inline UVSolid read_solid(const Bytes& bytes, std::string solid_id = {}) {
    ByteReader r(bytes);
    r.expect_magic("UVSB");
    const auto version = r.u32("version");
    if (version != kSolidFormatVersion)
        throw ParseError("unknown version " + std::to_string(version) + " at byte offset 4");
    const auto F = r.u32("face_count");
    const auto E = r.u32("adjacency_count");
    if (F == 0) throw ParseError("face_count is zero at byte offset 8");

    UVSolid s;
    s.solid_id = std::move(solid_id);
    s.adjacency.reserve(E);
    for (std::uint32_t i = 0; i < E; ++i) {
        const auto a = r.u32("adjacency pair");
        const auto b = r.u32("adjacency pair");
        s.adjacency.emplace_back(a, b);
    }

    // A payload made of whole samples that divides evenly across faces but is
    // not 100 samples per face is reported as a grid-shape error; anything
    // else short of the expected size is a truncation.
    const std::size_t expected = std::size_t(F) * kFaceFloats * sizeof(float);
    const std::size_t have = r.remaining();
    const std::size_t sample_bytes = std::size_t(F) * kChannels * sizeof(float);
    if (have != expected && have > 0 && have % sample_bytes == 0) {
        const std::size_t per_face = have / sample_bytes;
        throw ParseError("grid shape: payload at byte offset " + std::to_string(r.offset()) +
                         " holds " + std::to_string(per_face) +
                         " samples per face, expected 100 (10x10)");
    }

    s.faces.resize(F);
    std::array<float, kFaceFloats> buf{};
    for (std::uint32_t i = 0; i < F; ++i) {
        r.read_f32(buf.data(), buf.size(), "face grid");
        s.faces[i].face_id = static_cast<int>(i);
        std::copy(buf.begin(), buf.end(), s.faces[i].data.begin());
    }
    r.expect_end();
    return s;
}

/// Rounds every stored value to float32 so that a write/read cycle is exact.
inline void quantize_to_f32(UVSolid& s) {
    for (auto& f : s.faces)
        for (double& v : f.data) v = static_cast<double>(static_cast<float>(v));
}

// ---------------------------------------------------------------------------
// Datasets on disk: <dir>/manifest.json and <dir>/<solid_id>.uvsolid

struct Manifest {
    int version = 1;
    std::vector<std::string> solids;
    std::map<std::string, Labels> labels;
    json generator = json::object();
    std::map<std::string, int> content_counts;
    std::map<std::string, int> style_counts;
};

struct Dataset {
    std::vector<UVSolid> solids;
    Manifest manifest;

    const UVSolid* find(const std::string& id) const {
        for (const auto& s : solids)
            if (s.solid_id == id) return &s;
        return nullptr;
    }
};

/// Recomputes ids and label counts from the solids.
inline Manifest make_manifest(const std::vector<UVSolid>& solids, json generator) {
    Manifest m;
    m.generator = std::move(generator);
    for (const auto& s : solids) {
        m.solids.push_back(s.solid_id);
        if (s.labels) {
            m.labels[s.solid_id] = *s.labels;
            ++m.content_counts[s.labels->content];
            ++m.style_counts[s.labels->style];
        }
    }
    return m;
}

inline json manifest_to_json(const Manifest& m) {
    json labels = json::object();
    for (const auto& [id, l] : m.labels) labels[id] = {{"content", l.content}, {"style", l.style}};
    return {{"version", m.version},
            {"solids", m.solids},
            {"labels", labels},
            {"generator", m.generator},
            {"counts", {{"total", m.solids.size()},
                        {"content", m.content_counts},
                        {"style", m.style_counts}}}};
}

inline Manifest manifest_from_json(const json& j) {
    Manifest m;
    try {
        m.version = j.at("version").get<int>();
        if (m.version != 1) throw ParseError("unknown manifest version " + std::to_string(m.version));
        m.solids = j.at("solids").get<std::vector<std::string>>();
        std::set<std::string> seen;
        for (const auto& id : m.solids) {
            if (id.empty() || id.find_first_of("/\\") != std::string::npos)
                throw ParseError("manifest: invalid solid id \"" + id + "\"");
            if (!seen.insert(id).second) throw ParseError("manifest: duplicate solid id \"" + id + "\"");
        }
        if (j.contains("labels"))
            for (const auto& [id, l] : j.at("labels").items())
                m.labels[id] = {l.at("content").get<std::string>(), l.at("style").get<std::string>()};
        if (j.contains("generator")) m.generator = j.at("generator");
        if (j.contains("counts")) {
            const auto& c = j.at("counts");
            if (c.contains("content")) m.content_counts = c.at("content").get<std::map<std::string, int>>();
            if (c.contains("style")) m.style_counts = c.at("style").get<std::map<std::string, int>>();
            if (c.contains("total") && c.at("total").get<std::size_t>() != m.solids.size())
                throw ParseError("manifest total count disagrees with the solid list");
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    return m;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
    std::filesystem::create_directories(dir);
    for (const auto& s : d.solids) write_file(dir / (s.solid_id + ".uvsolid"), write_solid(s));
    write_text(dir / "manifest.json", manifest_to_json(d.manifest).dump(2) + "\n");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
    const auto mpath = dir / "manifest.json";
    if (!std::filesystem::exists(mpath)) throw Error("no manifest.json in " + dir.string());
    json j;
    try {
        j = json::parse(read_text(mpath));
    } catch (const json::exception& e) {
        throw ParseError(mpath.string() + ": " + e.what());
    }
    Dataset d;
    d.manifest = manifest_from_json(j);
    std::map<std::string, int> content, style;
    for (const auto& id : d.manifest.solids) {
        auto s = read_solid(read_file(dir / (id + ".uvsolid")), id);
        if (auto it = d.manifest.labels.find(id); it != d.manifest.labels.end()) {
            s.labels = it->second;
            ++content[it->second.content];
            ++style[it->second.style];
        }
        d.solids.push_back(std::move(s));
    }
    if (!d.manifest.content_counts.empty() && content != d.manifest.content_counts)
        throw ParseError("manifest content counts disagree with labels");
    if (!d.manifest.style_counts.empty() && style != d.manifest.style_counts)
        throw ParseError("manifest style counts disagree with labels");
    return d;
}

}  // namespace uvstyle
