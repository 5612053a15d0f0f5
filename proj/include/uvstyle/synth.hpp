/**
 * @file synth.hpp
 * @brief Parametric extruded-profile solids with controlled content and style factors
 *
 * Content is the 2D profile (L, T, U, cross, star, rectangle); style is a fixed
 * set of finishing factors (corner rounding or chamfer, sinusoidal surface bumps,
 * extrusion depth). Geometry is evaluated analytically and sampled straight onto
 * the UV grids consumed by the encoder.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "uvstyle/errors.hpp"
#include "uvstyle/geom.hpp"
#include "uvstyle/io.hpp"

namespace uvstyle {

enum class ContentClass { LShape, TShape, UShape, Cross, Star, Rectangle };

inline constexpr std::array<ContentClass, 6> kAllContents{
    ContentClass::LShape, ContentClass::TShape, ContentClass::UShape,
    ContentClass::Cross,  ContentClass::Star,   ContentClass::Rectangle};

inline std::string content_name(ContentClass c) {
    switch (c) {
        case ContentClass::LShape: return "L";
        case ContentClass::TShape: return "T";
        case ContentClass::UShape: return "U";
        case ContentClass::Cross: return "cross";
        case ContentClass::Star: return "star";
        case ContentClass::Rectangle: return "rect";
    }
    return "?";
}

inline ContentClass content_from_name(const std::string& n) {
    for (auto c : kAllContents)
        if (content_name(c) == n) return c;
    throw ConfigError("unknown content class \"" + n + "\"");
}

using Vec2 = std::array<double, 2>;

struct ProfileSpec {
    ContentClass content_class = ContentClass::Rectangle;
    std::vector<Vec2> vertices;  ///< simple, counterclockwise
};

struct StyleSpec {
    std::string style_id;
    double corner_rounding_radius = 0.0;
    double surface_bump_amplitude = 0.0;
    double surface_bump_frequency = 0.0;  ///< cycles per model unit
    double extrusion_depth = 1.0;
    bool chamfer = false;

    bool operator==(const StyleSpec&) const = default;
};

inline json style_to_json(const StyleSpec& s) {
    return {{"style_id", s.style_id},
            {"corner_rounding_radius", s.corner_rounding_radius},
            {"surface_bump_amplitude", s.surface_bump_amplitude},
            {"surface_bump_frequency", s.surface_bump_frequency},
            {"extrusion_depth", s.extrusion_depth},
            {"chamfer_flag", s.chamfer}};
}

inline StyleSpec style_from_json(const json& j) {
    StyleSpec s;
    try {
        s.style_id = j.at("style_id").get<std::string>();
        s.corner_rounding_radius = j.value("corner_rounding_radius", 0.0);
        s.surface_bump_amplitude = j.value("surface_bump_amplitude", 0.0);
        s.surface_bump_frequency = j.value("surface_bump_frequency", 0.0);
        s.extrusion_depth = j.value("extrusion_depth", 1.0);
        s.chamfer = j.value("chamfer_flag", false);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("style spec: ") + e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------
// 2D polygon helpers

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) { return a[0] * b[1] - a[1] * b[0]; }
inline Vec2 sub2(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline double norm2(const Vec2& a) { return std::hypot(a[0], a[1]); }

inline bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
        const double v = cross2(sub2(b, a), sub2(c, a));
        return (v > 1e-12) - (v < -1e-12);
    };
    auto on_seg = [](const Vec2& a, const Vec2& b, const Vec2& c) {
        return std::min(a[0], b[0]) - 1e-12 <= c[0] && c[0] <= std::max(a[0], b[0]) + 1e-12 &&
               std::min(a[1], b[1]) - 1e-12 <= c[1] && c[1] <= std::max(a[1], b[1]) + 1e-12;
    };
    const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
    const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
    if (o1 != o2 && o3 != o4 && o1 * o2 <= 0 && o3 * o4 <= 0 && (o1 || o2) && (o3 || o4)) return true;
    if (o1 == 0 && on_seg(p1, p2, q1)) return true;
    if (o2 == 0 && on_seg(p1, p2, q2)) return true;
    if (o3 == 0 && on_seg(q1, q2, p1)) return true;
    if (o4 == 0 && on_seg(q1, q2, p2)) return true;
    return false;
}

/// Point-in-polygon by crossing number; points within `tol` of the boundary count as inside.
inline bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p, double tol = 1e-9) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % n];
        const Vec2 ab = sub2(b, a), ap = sub2(p, a);
        const double len2 = ab[0] * ab[0] + ab[1] * ab[1];
        const double t = std::clamp((ap[0] * ab[0] + ap[1] * ab[1]) / len2, 0.0, 1.0);
        const Vec2 closest{a[0] + t * ab[0], a[1] + t * ab[1]};
        if (norm2(sub2(p, closest)) <= tol) return true;
    }
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a[1] > p[1]) != (b[1] > p[1])) {
            const double x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if (p[0] < x) inside = !inside;
        }
    }
    return inside;
}

}  // namespace detail

inline double signed_area(const std::vector<Vec2>& poly) {
    double a = 0;
    for (std::size_t i = 0; i < poly.size(); ++i)
        a += detail::cross2(poly[i], poly[(i + 1) % poly.size()]);
    return 0.5 * a;
}

inline bool is_simple(const std::vector<Vec2>& poly) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (detail::segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
                return false;
        }
    return true;
}

inline void validate_profile(const ProfileSpec& p) {
    if (p.vertices.size() < 3) throw GenerationError("profile needs at least 3 vertices");
    if (!is_simple(p.vertices)) throw GenerationError("profile polygon is self-intersecting");
    if (signed_area(p.vertices) <= 0) throw GenerationError("profile polygon is not counterclockwise");
}

inline void validate_style(const StyleSpec& s) {
    if (!(s.corner_rounding_radius >= 0)) throw GenerationError("rounding radius must be >= 0");
    if (!(s.surface_bump_amplitude >= 0)) throw GenerationError("bump amplitude must be >= 0");
    if (!(s.surface_bump_frequency >= 0)) throw GenerationError("bump frequency must be >= 0");
    if (!(s.extrusion_depth > 0)) throw GenerationError("extrusion depth must be > 0");
}

/// Builds the profile polygon for a content class; the seed jitters proportions
/// (never the style).
inline ProfileSpec make_profile(ContentClass c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(0.85, 1.15);
    auto j = [&](double v) { return v * jitter(rng); };
    ProfileSpec p;
    p.content_class = c;
    auto& v = p.vertices;
    switch (c) {
        case ContentClass::Rectangle: {
            const double w = j(1.8), h = j(1.2);
            v = {{0, 0}, {w, 0}, {w, h}, {0, h}};
            break;
        }
        case ContentClass::LShape: {
            const double W = j(1.6), H = j(2.0), t = j(0.6);
            v = {{0, 0}, {W, 0}, {W, t}, {t, t}, {t, H}, {0, H}};
            break;
        }
        case ContentClass::TShape: {
            const double W = j(2.0), H = j(2.0), t = j(0.6), s = j(0.6);
            v = {{-s / 2, 0},     {s / 2, 0},  {s / 2, H - t},  {W / 2, H - t},
                 {W / 2, H},      {-W / 2, H}, {-W / 2, H - t}, {-s / 2, H - t}};
            break;
        }
        case ContentClass::UShape: {
            const double W = j(1.8), H = j(2.0), t = j(0.55);
            v = {{0, 0}, {W, 0}, {W, H}, {W - t, H}, {W - t, t}, {t, t}, {t, H}, {0, H}};
            break;
        }
        case ContentClass::Cross: {
            const double a = j(0.35), b = j(1.0), b2 = j(1.0);
            v = {{a, -b},  {a, -a},  {b2, -a}, {b2, a},  {a, a},   {a, b},
                 {-a, b},  {-a, a},  {-b2, a}, {-b2, -a}, {-a, -a}, {-a, -b}};
            break;
        }
        case ContentClass::Star: {
            const double R = j(1.2), r = R * j(0.55);
            const double phase = std::numbers::pi / 2;
            for (int k = 0; k < 10; ++k) {
                const double ang = phase + k * std::numbers::pi / 5;
                const double rad = (k % 2 == 0) ? R : r;
                v.push_back({rad * std::cos(ang), rad * std::sin(ang)});
            }
            break;
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Side-wall curve segments

/// A piece of the (possibly rounded) profile outline, parametrized by arc length.
struct CurveSegment {
    enum class Kind { Line, Arc } kind = Kind::Line;
    Vec2 a{}, b{};           ///< line endpoints
    Vec2 center{};           ///< arc center
    double radius = 0;       ///< arc radius
    double theta0 = 0;       ///< arc start angle
    double sense = 1;        ///< +1 counterclockwise around center (convex corner), -1 otherwise
    double length = 0;
    int source_edge = -1;    ///< original profile edge (lines) or -1 for corners
    int source_vertex = -1;  ///< original profile vertex for corner pieces

    struct Frame {
        Vec2 point, tangent, normal;  ///< normal points out of the solid
        double curvature;             ///< d(normal)/ds = curvature * tangent
    };

    Frame eval(double s) const {
        if (kind == Kind::Line) {
            const Vec2 d = detail::sub2(b, a);
            const double L = detail::norm2(d);
            const Vec2 t{d[0] / L, d[1] / L};
            return {{a[0] + t[0] * s, a[1] + t[1] * s}, t, {t[1], -t[0]}, 0.0};
        }
        const double th = theta0 + sense * s / radius;
        const Vec2 radial{std::cos(th), std::sin(th)};
        const Vec2 p{center[0] + radius * radial[0], center[1] + radius * radial[1]};
        const Vec2 t{sense * -radial[1], sense * radial[0]};
        return {p, t, {t[1], -t[0]}, sense / radius};
    }
};

/// Replaces every corner by a tangent circular arc (or a flat bevel when
/// chamfering) of the given radius. Radius zero keeps the sharp polygon.
inline std::vector<CurveSegment> build_outline(const ProfileSpec& p, const StyleSpec& s) {
    using detail::norm2;
    using detail::sub2;
    const auto& v = p.vertices;
    const int n = static_cast<int>(v.size());
    const double r = s.corner_rounding_radius;

    std::vector<double> edge_len(n);
    for (int i = 0; i < n; ++i) edge_len[i] = norm2(sub2(v[(i + 1) % n], v[i]));

    if (r > 0) {
        const double shortest = *std::min_element(edge_len.begin(), edge_len.end());
        if (!(r < 0.5 * shortest)) {
            const int e = static_cast<int>(std::min_element(edge_len.begin(), edge_len.end()) - edge_len.begin());
            throw GenerationError("rounding radius " + std::to_string(r) +
                                  " is not below half the length of edge " + std::to_string(e));
        }
    }

    std::vector<CurveSegment> out;
    if (r == 0) {
        for (int i = 0; i < n; ++i) {
            CurveSegment c;
            c.a = v[i];
            c.b = v[(i + 1) % n];
            c.length = edge_len[i];
            c.source_edge = i;
            out.push_back(c);
        }
        return out;
    }

    // Tangent points around each vertex.
    std::vector<Vec2> enter(n), leave(n);
    std::vector<double> tangent_len(n), turn(n);
    for (int i = 0; i < n; ++i) {
        const Vec2 din = sub2(v[i], v[(i + n - 1) % n]);
        const Vec2 dout = sub2(v[(i + 1) % n], v[i]);
        const double li = norm2(din), lo = norm2(dout);
        const Vec2 ui{din[0] / li, din[1] / li}, uo{dout[0] / lo, dout[1] / lo};
        turn[i] = std::atan2(detail::cross2(ui, uo), ui[0] * uo[0] + ui[1] * uo[1]);
        tangent_len[i] = r * std::tan(std::abs(turn[i]) / 2);
        enter[i] = {v[i][0] - tangent_len[i] * ui[0], v[i][1] - tangent_len[i] * ui[1]};
        leave[i] = {v[i][0] + tangent_len[i] * uo[0], v[i][1] + tangent_len[i] * uo[1]};
    }
    for (int i = 0; i < n; ++i) {
        const double used = tangent_len[i] + tangent_len[(i + 1) % n];
        if (!(used < edge_len[i]))
            throw GenerationError("rounding radius " + std::to_string(r) + " too large for edge " +
                                  std::to_string(i) + " (needs " + std::to_string(used) +
                                  ", edge length " + std::to_string(edge_len[i]) + ")");
    }

    for (int i = 0; i < n; ++i) {
        CurveSegment corner;
        corner.source_vertex = i;
        if (s.chamfer) {
            corner.kind = CurveSegment::Kind::Line;
            corner.a = enter[i];
            corner.b = leave[i];
            corner.length = norm2(sub2(leave[i], enter[i]));
        } else {
            const Vec2 din = sub2(v[i], v[(i + n - 1) % n]);
            const double li = norm2(din);
            const Vec2 left{-din[1] / li, din[0] / li};
            const double side = turn[i] > 0 ? 1.0 : -1.0;
            corner.kind = CurveSegment::Kind::Arc;
            corner.radius = r;
            corner.sense = side;
            corner.center = {enter[i][0] + side * r * left[0], enter[i][1] + side * r * left[1]};
            corner.theta0 = std::atan2(enter[i][1] - corner.center[1], enter[i][0] - corner.center[0]);
            corner.length = r * std::abs(turn[i]);
        }
        out.push_back(corner);

        CurveSegment edge;
        edge.a = leave[i];
        edge.b = enter[(i + 1) % n];
        edge.length = norm2(sub2(edge.b, edge.a));
        edge.source_edge = i;
        out.push_back(edge);
    }
    return out;
}

/// Dense polygonal approximation of the outline, for cap masking.
inline std::vector<Vec2> outline_polygon(const std::vector<CurveSegment>& segs, int arc_steps = 24) {
    std::vector<Vec2> poly;
    for (const auto& c : segs) {
        const int steps = c.kind == CurveSegment::Kind::Arc ? arc_steps : 1;
        for (int k = 0; k < steps; ++k) poly.push_back(c.eval(c.length * k / steps).point);
    }
    return poly;
}

// ---------------------------------------------------------------------------
// Solid generation

namespace detail {

struct Bump {
    double amp, freq;
    double d(double a, double b) const {
        const double w = 2 * std::numbers::pi * freq;
        return amp * std::sin(w * a) * std::sin(w * b);
    }
    double da(double a, double b) const {
        const double w = 2 * std::numbers::pi * freq;
        return amp * w * std::cos(w * a) * std::sin(w * b);
    }
    double db(double a, double b) const { return da(b, a); }
};

inline Vec3 cross3(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline Vec3 unit3(const Vec3& a) {
    const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    return {a[0] / n, a[1] / n, a[2] / n};
}

}  // namespace detail

/// Face order: side faces following the outline counterclockwise, then the top
/// cap (z = depth) and the bottom cap (z = 0). The seed is only used to build a
/// profile when `p.vertices` is empty.
inline UVSolid generate_solid(ProfileSpec p, const StyleSpec& s, std::uint64_t seed) {
    if (p.vertices.empty()) p = make_profile(p.content_class, seed);
    validate_profile(p);
    validate_style(s);

    const auto segs = build_outline(p, s);
    const int n = static_cast<int>(segs.size());
    const double depth = s.extrusion_depth;
    const detail::Bump bump{s.surface_bump_amplitude, s.surface_bump_frequency};

    UVSolid solid;
    solid.faces.resize(n + 2);

    for (int f = 0; f < n; ++f) {
        const auto& seg = segs[f];
        UVFace& face = solid.faces[f];
        face.face_id = f;
        for (int iu = 0; iu < kGrid; ++iu) {
            const double sarc = seg.length * iu / (kGrid - 1);
            const auto fr = seg.eval(sarc);
            const Vec3 T{fr.tangent[0], fr.tangent[1], 0}, N{fr.normal[0], fr.normal[1], 0};
            for (int iv = 0; iv < kGrid; ++iv) {
                const double z = depth * iv / (kGrid - 1);
                const double d = bump.d(sarc, z);
                const Vec3 pos{fr.point[0] + d * N[0], fr.point[1] + d * N[1], z};
                // S_s = (1 + d k) T + d_s N ,  S_z = e_z + d_z N
                const double ds = bump.da(sarc, z), dz = bump.db(sarc, z);
                const Vec3 Ss{(1 + d * fr.curvature) * T[0] + ds * N[0],
                              (1 + d * fr.curvature) * T[1] + ds * N[1], 0};
                const Vec3 Sz{dz * N[0], dz * N[1], 1};
                face.set(UVFace::sample_index(iu, iv), pos, detail::unit3(detail::cross3(Ss, Sz)), 1.0);
            }
        }
    }

    const auto outline = outline_polygon(segs);
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& q : outline) {
        xmin = std::min(xmin, q[0]);
        xmax = std::max(xmax, q[0]);
        ymin = std::min(ymin, q[1]);
        ymax = std::max(ymax, q[1]);
    }
    for (int cap = 0; cap < 2; ++cap) {
        const bool top = cap == 0;
        UVFace& face = solid.faces[n + cap];
        face.face_id = n + cap;
        for (int iu = 0; iu < kGrid; ++iu)
            for (int iv = 0; iv < kGrid; ++iv) {
                const double x = xmin + (xmax - xmin) * iu / (kGrid - 1);
                const double y = ymin + (ymax - ymin) * iv / (kGrid - 1);
                const double lx = x - xmin, ly = y - ymin;
                const double d = bump.d(lx, ly);
                const double dx = bump.da(lx, ly), dy = bump.db(lx, ly);
                const Vec3 pos{x, y, top ? depth + d : -d};
                const Vec3 nrm = detail::unit3(top ? Vec3{-dx, -dy, 1} : Vec3{-dx, -dy, -1});
                const double m = detail::point_in_polygon(outline, {x, y}) ? 1.0 : 0.0;
                face.set(UVFace::sample_index(iu, iv), pos, nrm, m);
            }
    }

    std::vector<FacePair> adj;
    for (int f = 0; f < n; ++f) {
        adj.emplace_back(f, (f + 1) % n);
        adj.emplace_back(f, n);
        adj.emplace_back(f, n + 1);
    }
    solid.adjacency = canonical_adjacency(std::move(adj));

    // Center on the bounding box and scale to unit diagonal.
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (const auto& f : solid.faces)
        for (int k = 0; k < kSamplesPerFace; ++k)
            for (int c = 0; c < 3; ++c) {
                lo[c] = std::min(lo[c], f.at(k, c));
                hi[c] = std::max(hi[c], f.at(k, c));
            }
    double diag = 0;
    for (int c = 0; c < 3; ++c) diag += (hi[c] - lo[c]) * (hi[c] - lo[c]);
    diag = std::sqrt(diag);
    for (auto& f : solid.faces)
        for (int k = 0; k < kSamplesPerFace; ++k)
            for (int c = 0; c < 3; ++c) f.at(k, c) = (f.at(k, c) - 0.5 * (lo[c] + hi[c])) / diag;

    for (auto& f : solid.faces)
        for (int k = 0; k < kSamplesPerFace; ++k) {
            const auto u = detail::unit3(f.normal(k));
            for (int c = 0; c < 3; ++c) f.at(k, 3 + c) = u[c];
        }
    quantize_to_f32(solid);
    return solid;
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetConfig {
    std::vector<ContentClass> contents;
    std::vector<StyleSpec> styles;
    int per_cell = 1;
    std::uint64_t seed = 0;
    std::string out_dir;
};

inline json config_to_json(const DatasetConfig& c) {
    json contents = json::array(), styles = json::array();
    for (auto cc : c.contents) contents.push_back(content_name(cc));
    for (const auto& s : c.styles) styles.push_back(style_to_json(s));
    return {{"contents", contents}, {"styles", styles}, {"per_cell", c.per_cell},
            {"seed", c.seed},       {"out_dir", c.out_dir}};
}

inline DatasetConfig config_from_json(const json& j) {
    DatasetConfig c;
    try {
        for (const auto& n : j.at("contents")) c.contents.push_back(content_from_name(n.get<std::string>()));
        for (const auto& s : j.at("styles")) c.styles.push_back(style_from_json(s));
        c.per_cell = j.value("per_cell", 1);
        c.seed = j.value("seed", std::uint64_t{0});
        c.out_dir = j.value("out_dir", std::string{});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("dataset config: ") + e.what());
    }
    return c;
}

/// Solids are ordered content-major, then style, then example, and named s0, s1, ...
/// Every solid's profile seed depends only on (seed, content, example index), so a
/// given (content, example) cell shares its profile across all styles.
inline Dataset generate_dataset(const DatasetConfig& cfg) {
    if (cfg.contents.empty()) throw ConfigError("config lists no content classes");
    if (cfg.styles.empty()) throw ConfigError("config lists no style classes");
    if (cfg.per_cell < 1) throw ConfigError("per_cell must be >= 1");
    for (std::size_t i = 0; i < cfg.styles.size(); ++i)
        for (std::size_t k = i + 1; k < cfg.styles.size(); ++k)
            if (cfg.styles[i].style_id == cfg.styles[k].style_id)
                throw ConfigError("duplicate style_id \"" + cfg.styles[i].style_id + "\"");

    Dataset d;
    int index = 0;
    for (auto content : cfg.contents)
        for (const auto& style : cfg.styles)
            for (int e = 0; e < cfg.per_cell; ++e) {
                const auto seed = derive_seed(cfg.seed, content_name(content) + "#" + std::to_string(e));
                UVSolid s;
                try {
                    s = generate_solid(make_profile(content, seed), style, seed);
                } catch (const GenerationError& err) {
                    throw GenerationError("content " + content_name(content) + ", style " +
                                          style.style_id + ": " + err.what());
                }
                s.solid_id = "s" + std::to_string(index++);
                s.labels = Labels{content_name(content), style.style_id};
                d.solids.push_back(std::move(s));
            }
    d.manifest = make_manifest(d.solids, config_to_json(cfg));
    return d;
}

/// Four visually distinct finishing styles used by the default corpus.
inline std::vector<StyleSpec> default_styles() {
    return {
        {"sharp", 0.0, 0.0, 0.0, 0.6, false},
        {"fillet", 0.12, 0.0, 0.0, 0.6, false},
        {"chamfer", 0.12, 0.0, 0.0, 0.6, true},
        {"bumpy", 0.0, 0.04, 2.5, 0.6, false},
    };
}

inline DatasetConfig default_config(int per_cell = 5, std::uint64_t seed = 7) {
    DatasetConfig c;
    c.contents.assign(kAllContents.begin(), kAllContents.end());
    c.styles = default_styles();
    c.per_cell = per_cell;
    c.seed = seed;
    return c;
}

}  // namespace uvstyle
