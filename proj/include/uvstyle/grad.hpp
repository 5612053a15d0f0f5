/**
 * @file grad.hpp
 * @brief Gradient of the pairwise style distance with respect to sample positions
 *
 * The analytic path runs the encoder once, back-propagates the weighted cosine
 * Gram distance through normalization, the Gram products and every encoder
 * layer, and reads off the xyz channels of the input grid. Normals and the
 * mask are held fixed.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uvstyle/encoder.hpp"
#include "uvstyle/errors.hpp"
#include "uvstyle/geom.hpp"
#include "uvstyle/style.hpp"

namespace uvstyle {

enum class GradMode { Analytic, FiniteDifference };

struct SampleRef {
    int face = 0;
    int sample = 0;
    bool operator==(const SampleRef&) const = default;
};

struct GradientField {
    std::string subject_id, reference_id;
    LayerWeights weights;
    std::vector<SampleRef> samples;  ///< visible samples of the subject, face-major
    std::vector<Vec3> positions;
    std::vector<Vec3> gradients;
    double k_scale = 1.0;

    double max_norm() const {
        double m = 0;
        for (const auto& g : gradients) m = std::max(m, std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]));
        return m;
    }
};

/// Fixed pieces of the style pipeline: encoder weights and normalization.
struct StylePipeline {
    const WeightBundle* weights = nullptr;
    NormalizationPolicy policy;

    GramEmbedding embed(const UVSolid& s) const {
        return extract_grams(forward(s, *weights), policy, weights->fingerprint());
    }
};

/// D_style between two solids, recomputed from scratch.
inline double solid_style_distance(const UVSolid& a, const UVSolid& b, const LayerWeights& w, const StylePipeline& p) {
    return style_distance(p.embed(a), p.embed(b), w);
}

namespace detail {

inline std::vector<SampleRef> visible_samples(const UVSolid& s) {
    std::vector<SampleRef> out;
    for (int f = 0; f < s.num_faces(); ++f)
        for (int k = 0; k < kSamplesPerFace; ++k)
            if (s.faces[f].visible(k)) out.push_back({f, k});
    return out;
}

/// Distance from precomputed reference Grams, skipping zero-weight layers.
inline double distance_to_reference(const UVSolid& subject, const std::vector<std::vector<double>>& ref,
                                    const LayerWeights& w, const StylePipeline& p, ForwardTrace* trace_out = nullptr) {
    auto t = forward_traced(subject, *p.weights);
    check_policy(t.acts, p.policy);
    double d = 0;
    for (int l = 0; l < t.acts.num_layers(); ++l) {
        if (w.w[l] == 0.0) continue;
        auto G = gram_triu(t.acts, l, normalize_layer(t.acts, l, p.policy));
        if (!(l2norm(G) > kDegenerateNorm))
            throw DegenerateLayerError(l, "degenerate layer " + std::to_string(l) + " in subject");
        d += w.w[l] * cosine_distance(G, ref[l]);
    }
    if (trace_out) *trace_out = std::move(t);
    return d;
}

/// One flag per ReLU unit: is its pre-activation strictly positive?
inline std::vector<bool> relu_pattern(const ForwardTrace& t) {
    std::vector<bool> p;
    auto add = [&](const std::vector<double>& v) {
        for (double x : v) p.push_back(x > 0);
    };
    for (const auto& c : t.conv_pre) add(c);
    add(t.embed_pre);
    for (const auto& h : t.gin_hidden_pre) add(h);
    for (const auto& o : t.gin_out_pre) add(o);
    return p;
}

}  // namespace detail

/// Analytic gradient of D_style(subject, reference) with respect to the
/// subject's visible sample positions.
inline GradientField style_gradient_analytic(const UVSolid& subject, const UVSolid& reference, const LayerWeights& w,
                                             const StylePipeline& p) {
    w.check_simplex();
    const auto ref = p.embed(reference);
    if (w.size() != ref.num_layers()) throw ContractError("weight vector length differs from layer count");

    const auto t = forward_traced(subject, *p.weights);
    check_policy(t.acts, p.policy);
    std::vector<std::vector<double>> layer_grads(t.acts.num_layers());
    for (int l = 0; l < t.acts.num_layers(); ++l) {
        if (w.w[l] == 0.0) continue;
        const auto phi = normalize_layer(t.acts, l, p.policy);
        const auto G = gram_triu(t.acts, l, phi);
        if (!(l2norm(G) > kDegenerateNorm))
            throw DegenerateLayerError(l, "degenerate layer " + std::to_string(l) + " in subject");
        auto dG = cosine_distance_grad(G, ref.layers[l]);
        for (auto& v : dG) v *= w.w[l];
        const auto dphi = gram_triu_backward(t.acts, l, phi, dG);
        layer_grads[l] = normalize_layer_backward(t.acts, l, p.policy, dphi);
    }
    const auto din = backward(t, *p.weights, std::move(layer_grads));

    GradientField g;
    g.subject_id = subject.solid_id;
    g.reference_id = reference.solid_id;
    g.weights = w;
    g.samples = detail::visible_samples(subject);
    for (const auto& s : g.samples) {
        g.positions.push_back(subject.faces[s.face].xyz(s.sample));
        const std::size_t r = std::size_t(s.face) * kSamplesPerFace + s.sample;
        g.gradients.push_back({din[r * kChannels + 0], din[r * kChannels + 1], din[r * kChannels + 2]});
    }
    return g;
}

/// Central difference for one coordinate. `crosses_kink` reports whether either
/// probe changed the sign of any ReLU pre-activation relative to the base point,
/// in which case the difference quotient straddles a non-differentiable point.
struct FiniteDifferenceProbe {
    double derivative = 0;
    bool crosses_kink = false;
};

class FiniteDifferenceOracle {
public:
    FiniteDifferenceOracle(const UVSolid& subject, const UVSolid& reference, const LayerWeights& w,
                           const StylePipeline& p, double step)
        : subject_(subject), w_(w), p_(p), h_(step) {
        w_.check_simplex();
        ref_ = p.embed(reference).layers;
        ForwardTrace base;
        detail::distance_to_reference(subject_, ref_, w_, p_, &base);
        base_pattern_ = detail::relu_pattern(base);
    }

    /// Default step: 1e-3 of the subject's bounding-box diagonal.
    static double default_step(const UVSolid& s) { return 1e-3 * s.bbox_diagonal(); }

    FiniteDifferenceProbe probe(SampleRef s, int coord) {
        double& x = subject_.faces[s.face].at(s.sample, coord);
        const double x0 = x;
        ForwardTrace tp, tm;
        x = x0 + h_;
        const double fp = detail::distance_to_reference(subject_, ref_, w_, p_, &tp);
        x = x0 - h_;
        const double fm = detail::distance_to_reference(subject_, ref_, w_, p_, &tm);
        x = x0;
        return {(fp - fm) / (2 * h_),
                detail::relu_pattern(tp) != base_pattern_ || detail::relu_pattern(tm) != base_pattern_};
    }

    double step() const { return h_; }

private:
    UVSolid subject_;
    LayerWeights w_;
    StylePipeline p_;
    double h_;
    std::vector<std::vector<double>> ref_;
    std::vector<bool> base_pattern_;
};

inline GradientField style_gradient_fd(const UVSolid& subject, const UVSolid& reference, const LayerWeights& w,
                                       const StylePipeline& p, double step = 0) {
    FiniteDifferenceOracle fd(subject, reference, w, p, step > 0 ? step : FiniteDifferenceOracle::default_step(subject));
    GradientField g;
    g.subject_id = subject.solid_id;
    g.reference_id = reference.solid_id;
    g.weights = w;
    g.samples = detail::visible_samples(subject);
    for (const auto& s : g.samples) {
        g.positions.push_back(subject.faces[s.face].xyz(s.sample));
        g.gradients.push_back({fd.probe(s, 0).derivative, fd.probe(s, 1).derivative, fd.probe(s, 2).derivative});
    }
    return g;
}

inline GradientField style_gradient(const UVSolid& subject, const UVSolid& reference, const LayerWeights& w,
                                    const StylePipeline& p, GradMode mode = GradMode::Analytic) {
    return mode == GradMode::Analytic ? style_gradient_analytic(subject, reference, w, p)
                                      : style_gradient_fd(subject, reference, w, p);
}

// ---------------------------------------------------------------------------
// Glyphs: segments from p to p - k * grad

/// Scale at which the longest glyph is 5% of the bounding-box diagonal.
inline double default_glyph_scale(const GradientField& g, double bbox_diagonal) {
    const double m = g.max_norm();
    return m > 0 ? 0.05 * bbox_diagonal / m : 1.0;
}

inline json glyphs_json(const GradientField& g, double k) {
    json arr = json::array();
    for (std::size_t i = 0; i < g.positions.size(); ++i) {
        const auto& p = g.positions[i];
        const auto& d = g.gradients[i];
        arr.push_back({{"p", {p[0], p[1], p[2]}}, {"d", {-k * d[0], -k * d[1], -k * d[2]}}});
    }
    return arr;
}

inline std::string glyphs_obj(const GradientField& g, double k) {
    std::ostringstream os;
    os.precision(9);
    os << "# style gradient glyphs: " << g.subject_id << " -> " << g.reference_id << ", k = " << k << "\n";
    for (std::size_t i = 0; i < g.positions.size(); ++i) {
        const auto& p = g.positions[i];
        const auto& d = g.gradients[i];
        os << "v " << p[0] << ' ' << p[1] << ' ' << p[2] << "\n";
        os << "v " << p[0] - k * d[0] << ' ' << p[1] - k * d[1] << ' ' << p[2] - k * d[2] << "\n";
    }
    for (std::size_t i = 0; i < g.positions.size(); ++i) os << "l " << 2 * i + 1 << ' ' << 2 * i + 2 << "\n";
    return os.str();
}

struct GlyphExport {
    std::string obj;  ///< "v" / "l" elements
    json glyphs;      ///< [{ "p": [x,y,z], "d": [dx,dy,dz] }], d = -k * grad
};

inline GlyphExport export_glyphs(const GradientField& g, double k) { return {glyphs_obj(g, k), glyphs_json(g, k)}; }

}  // namespace uvstyle
