/**
 * @file style.hpp
 * @brief Activation normalization, layer-wise Gram embeddings and cosine style distances
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "uvstyle/encoder.hpp"
#include "uvstyle/errors.hpp"

namespace uvstyle {

enum class NormKind { None, InstanceNorm, FaceRecenter };

inline std::string norm_name(NormKind k) {
    switch (k) {
        case NormKind::None: return "none";
        case NormKind::InstanceNorm: return "instance_norm";
        case NormKind::FaceRecenter: return "face_recenter";
    }
    return "?";
}

inline NormKind norm_from_name(const std::string& n) {
    if (n == "none") return NormKind::None;
    if (n == "instance_norm") return NormKind::InstanceNorm;
    if (n == "face_recenter") return NormKind::FaceRecenter;
    throw ConfigError("unknown normalization \"" + n + "\"");
}

struct NormalizationPolicy {
    std::vector<NormKind> per_layer;
    double epsilon = 1e-5;
    /// Restrict layer-0 face re-centering to the xyz channels (normals untouched).
    bool layer0_positions_only = false;

    /// Face re-centering on per-sample layers, instance normalization on per-face layers.
    static NormalizationPolicy defaults(const EncoderSpec& spec) {
        NormalizationPolicy p;
        for (int l = 0; l < spec.num_layers(); ++l)
            p.per_layer.push_back(spec.spatial(l) ? NormKind::FaceRecenter : NormKind::InstanceNorm);
        return p;
    }
    static NormalizationPolicy uniform(int layers, NormKind k) {
        NormalizationPolicy p;
        p.per_layer.assign(layers, k);
        return p;
    }

    std::string tag() const {
        std::string t;
        for (auto k : per_layer) t += (t.empty() ? "" : ",") + norm_name(k);
        if (layer0_positions_only) t += ";l0xyz";
        return t;
    }
};

/// Throws ContractError if face re-centering is requested on a per-face layer.
inline void check_policy(const ActivationSet& a, const NormalizationPolicy& p) {
    if (static_cast<int>(p.per_layer.size()) != a.num_layers())
        throw ContractError("normalization policy covers " + std::to_string(p.per_layer.size()) +
                            " layers, activations have " + std::to_string(a.num_layers()));
    for (int l = 0; l < a.num_layers(); ++l)
        if (p.per_layer[l] == NormKind::FaceRecenter && !a.layers[l].spatial)
            throw ContractError("face_recenter is not available for per-face layer " + std::to_string(l));
}

namespace detail {

/// Which channels of `layer` a policy touches.
inline int normalized_channels(const NormalizationPolicy& p, int layer, int channels) {
    return (layer == 0 && p.layer0_positions_only && p.per_layer[0] == NormKind::FaceRecenter) ? 3 : channels;
}

}  // namespace detail

/// Normalized copy of one layer. Hidden (mask-0) rows never enter any
/// statistic and are zeroed in the output.
inline LayerMap normalize_layer(const ActivationSet& a, int l, const NormalizationPolicy& p) {
    const auto& in = a.layers[l];
    LayerMap out = in;
    const int C = in.channels;
    const int rows = in.rows();
    for (int r = 0; r < rows; ++r)
        if (!a.row_visible(l, r))
            std::fill(out.row(r), out.row(r) + C, 0.0);

    const NormKind kind = p.per_layer[l];
    if (kind == NormKind::FaceRecenter) {
        const int Cn = detail::normalized_channels(p, l, C);
        for (int f = 0; f < a.num_faces; ++f) {
            std::vector<double> mean(Cn, 0.0);
            int m = 0;
            for (int k = 0; k < kSamplesPerFace; ++k) {
                const int r = f * kSamplesPerFace + k;
                if (!a.mask[r]) continue;
                ++m;
                for (int c = 0; c < Cn; ++c) mean[c] += in.row(r)[c];
            }
            if (m == 0) continue;
            for (auto& v : mean) v /= m;
            for (int k = 0; k < kSamplesPerFace; ++k) {
                const int r = f * kSamplesPerFace + k;
                if (!a.mask[r]) continue;
                for (int c = 0; c < Cn; ++c) out.row(r)[c] = in.row(r)[c] - mean[c];
            }
        }
    } else if (kind == NormKind::InstanceNorm) {
        const int N = a.count(l);
        for (int c = 0; c < C; ++c) {
            double mean = 0;
            for (int r = 0; r < rows; ++r)
                if (a.row_visible(l, r)) mean += in.row(r)[c];
            mean /= N;
            double var = 0;
            for (int r = 0; r < rows; ++r)
                if (a.row_visible(l, r)) var += (in.row(r)[c] - mean) * (in.row(r)[c] - mean);
            const double sd = std::sqrt(var / N);
            for (int r = 0; r < rows; ++r)
                if (a.row_visible(l, r)) out.row(r)[c] = (in.row(r)[c] - mean) / (sd + p.epsilon);
        }
    }
    return out;
}

inline ActivationSet normalize(const ActivationSet& a, const NormalizationPolicy& p) {
    check_policy(a, p);
    ActivationSet out;
    out.num_faces = a.num_faces;
    out.mask = a.mask;
    for (int l = 0; l < a.num_layers(); ++l) out.layers.push_back(normalize_layer(a, l, p));
    return out;
}

/// Backward of `normalize_layer`: maps d(normalized) to d(raw) for one layer.
inline std::vector<double> normalize_layer_backward(const ActivationSet& a, int l, const NormalizationPolicy& p,
                                                    const std::vector<double>& dy) {
    const auto& in = a.layers[l];
    const int C = in.channels;
    const int rows = in.rows();
    std::vector<double> dx(dy.size(), 0.0);
    const NormKind kind = p.per_layer[l];

    if (kind == NormKind::None) {
        for (int r = 0; r < rows; ++r)
            if (a.row_visible(l, r))
                for (int c = 0; c < C; ++c) dx[std::size_t(r) * C + c] = dy[std::size_t(r) * C + c];
    } else if (kind == NormKind::FaceRecenter) {
        const int Cn = detail::normalized_channels(p, l, C);
        for (int f = 0; f < a.num_faces; ++f) {
            std::vector<double> mean(Cn, 0.0);
            int m = 0;
            for (int k = 0; k < kSamplesPerFace; ++k) {
                const int r = f * kSamplesPerFace + k;
                if (!a.mask[r]) continue;
                ++m;
                for (int c = 0; c < Cn; ++c) mean[c] += dy[std::size_t(r) * C + c];
            }
            if (m == 0) continue;
            for (auto& v : mean) v /= m;
            for (int k = 0; k < kSamplesPerFace; ++k) {
                const int r = f * kSamplesPerFace + k;
                if (!a.mask[r]) continue;
                for (int c = 0; c < C; ++c)
                    dx[std::size_t(r) * C + c] = dy[std::size_t(r) * C + c] - (c < Cn ? mean[c] : 0.0);
            }
        }
    } else {
        // y = (x - mu) / (sd + eps), sd = sqrt(mean((x - mu)^2))
        const int N = a.count(l);
        for (int c = 0; c < C; ++c) {
            double mean = 0;
            for (int r = 0; r < rows; ++r)
                if (a.row_visible(l, r)) mean += in.row(r)[c];
            mean /= N;
            double var = 0, sum_dy = 0, sum_dy_xc = 0;
            for (int r = 0; r < rows; ++r)
                if (a.row_visible(l, r)) {
                    const double xc = in.row(r)[c] - mean;
                    var += xc * xc;
                    sum_dy += dy[std::size_t(r) * C + c];
                    sum_dy_xc += dy[std::size_t(r) * C + c] * xc;
                }
            const double sd = std::sqrt(var / N);
            const double s = sd + p.epsilon;
            const double dsd = sd > 0 ? -sum_dy_xc / (s * s) : 0.0;
            for (int r = 0; r < rows; ++r)
                if (a.row_visible(l, r)) {
                    const double xc = in.row(r)[c] - mean;
                    double g = (dy[std::size_t(r) * C + c] - sum_dy / N) / s;
                    if (sd > 0) g += dsd * xc / (N * sd);
                    dx[std::size_t(r) * C + c] = g;
                }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Gram embeddings

inline constexpr int triu_length(int d) { return d * (d + 1) / 2; }

/// (1/N) * sum over visible rows of phi phi^T, flattened upper triangle
/// (diagonal included, row-major over i <= j).
inline std::vector<double> gram_triu(const ActivationSet& a, int l, const LayerMap& phi) {
    const int C = phi.channels;
    const int N = a.count(l);
    std::vector<double> full(std::size_t(C) * C, 0.0);
    for (int r = 0; r < phi.rows(); ++r) {
        if (!a.row_visible(l, r)) continue;
        const double* x = phi.row(r);
        for (int i = 0; i < C; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            double* gi = full.data() + std::size_t(i) * C;
            for (int j = i; j < C; ++j) gi[j] += xi * x[j];
        }
    }
    std::vector<double> g;
    g.reserve(triu_length(C));
    for (int i = 0; i < C; ++i)
        for (int j = i; j < C; ++j) g.push_back(full[std::size_t(i) * C + j] / N);
    return g;
}

/// Backward of `gram_triu`: d(phi) = (1/N) (M + M^T) phi, M upper-triangular from dG.
inline std::vector<double> gram_triu_backward(const ActivationSet& a, int l, const LayerMap& phi,
                                              const std::vector<double>& dg) {
    const int C = phi.channels;
    const int N = a.count(l);
    std::vector<double> sym(std::size_t(C) * C, 0.0);
    std::size_t k = 0;
    for (int i = 0; i < C; ++i)
        for (int j = i; j < C; ++j, ++k) {
            sym[std::size_t(i) * C + j] += dg[k];
            sym[std::size_t(j) * C + i] += dg[k];
        }
    std::vector<double> dphi(phi.values.size(), 0.0);
    for (int r = 0; r < phi.rows(); ++r) {
        if (!a.row_visible(l, r)) continue;
        const double* x = phi.row(r);
        double* d = dphi.data() + std::size_t(r) * C;
        for (int i = 0; i < C; ++i) {
            const double* si = sym.data() + std::size_t(i) * C;
            double acc = 0;
            for (int j = 0; j < C; ++j) acc += si[j] * x[j];
            d[i] = acc / N;
        }
    }
    return dphi;
}

struct GramEmbedding {
    std::vector<std::vector<double>> layers;
    std::vector<int> n_used;
    std::string fingerprint;  ///< encoder fingerprint
    std::string policy;       ///< normalization policy tag
    std::string reduction = "raw";

    int num_layers() const { return static_cast<int>(layers.size()); }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline constexpr double kDegenerateNorm = 1e-24;

inline GramEmbedding extract_grams(const ActivationSet& a, const NormalizationPolicy& p,
                                   const std::string& fingerprint = {}) {
    check_policy(a, p);
    GramEmbedding g;
    g.fingerprint = fingerprint;
    g.policy = p.tag();
    for (int l = 0; l < a.num_layers(); ++l) {
        const int N = a.count(l);
        if (N <= 0) throw DegenerateLayerError(l, "degenerate layer " + std::to_string(l) + ": no samples");
        auto G = gram_triu(a, l, normalize_layer(a, l, p));
        const double n = l2norm(G);
        if (!(n > kDegenerateNorm) || !std::isfinite(n))
            throw DegenerateLayerError(l, "degenerate layer " + std::to_string(l) +
                                              ": normalized activations vanish (Gram norm " + std::to_string(n) + ")");
        g.layers.push_back(std::move(G));
        g.n_used.push_back(N);
    }
    return g;
}

/// Raw Gram lengths d(d+1)/2 per layer.
inline std::vector<int> gram_lengths(const EncoderSpec& spec) {
    std::vector<int> out;
    for (int d : spec.layer_dims()) out.push_back(triu_length(d));
    return out;
}

// ---------------------------------------------------------------------------
// Distances

inline void check_compatible(const GramEmbedding& a, const GramEmbedding& b) {
    if (a.fingerprint != b.fingerprint)
        throw IncompatibleError("embeddings come from different encoders (" + a.fingerprint + " vs " +
                                b.fingerprint + ")");
    if (a.policy != b.policy)
        throw IncompatibleError("embeddings use different normalization policies (" + a.policy + " vs " +
                                b.policy + ")");
    if (a.reduction != b.reduction)
        throw IncompatibleError("embeddings have different reduction state (" + a.reduction + " vs " +
                                b.reduction + ")");
    if (a.layers.size() != b.layers.size())
        throw IncompatibleError("embeddings have different layer counts");
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (a.layers[l].size() != b.layers[l].size())
            throw IncompatibleError("layer " + std::to_string(l) + " lengths differ");
}

/// 1 - cosine similarity, from precomputed squared norms; in [0, 2].
inline double cosine_distance(double ab, double aa, double bb) {
    const double denom = std::sqrt(aa * bb);
    if (!(denom > 0)) throw DegenerateLayerError(-1, "cosine distance of a zero vector");
    return std::clamp(1.0 - ab / denom, 0.0, 2.0);
}

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    return cosine_distance(dot(a, b), dot(a, a), dot(b, b));
}

inline double layer_distance(const GramEmbedding& a, const GramEmbedding& b, int l) {
    check_compatible(a, b);
    if (l < 0 || l >= a.num_layers()) throw ContractError("layer index " + std::to_string(l) + " out of range");
    return cosine_distance(a.layers[l], b.layers[l]);
}

/// d/d(a) of cosine distance 1 - a.b / (|a||b|).
inline std::vector<double> cosine_distance_grad(const std::vector<double>& a, const std::vector<double>& b) {
    const double aa = dot(a, a), bb = dot(b, b), ab = dot(a, b);
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    std::vector<double> g(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) g[i] = -(b[i] / (na * nb) - ab * a[i] / (aa * na * nb));
    return g;
}

struct LayerWeights {
    std::vector<double> w;

    static LayerWeights uniform(int L) { return {std::vector<double>(L, 1.0 / L)}; }
    static LayerWeights one_hot(int L, int l) {
        LayerWeights x{std::vector<double>(L, 0.0)};
        x.w[l] = 1.0;
        return x;
    }
    /// Uniform over the first `k` layers, zero elsewhere.
    static LayerWeights first_k(int L, int k) {
        LayerWeights x{std::vector<double>(L, 0.0)};
        for (int l = 0; l < k; ++l) x.w[l] = 1.0 / k;
        return x;
    }
    int size() const { return static_cast<int>(w.size()); }

    /// Throws ContractError unless sum = 1 and every entry >= 0 (tolerance 1e-9).
    void check_simplex(double tol = 1e-9) const {
        double s = 0;
        for (std::size_t l = 0; l < w.size(); ++l) {
            if (!std::isfinite(w[l])) throw ContractError("weight " + std::to_string(l) + " is not finite");
            if (w[l] < -tol) throw ContractError("weight " + std::to_string(l) + " is negative");
            s += w[l];
        }
        if (std::abs(s - 1.0) > tol) throw ContractError("weights sum to " + std::to_string(s) + ", not 1");
    }
};

inline double style_distance(const GramEmbedding& a, const GramEmbedding& b, const LayerWeights& w) {
    check_compatible(a, b);
    w.check_simplex();
    if (w.size() != a.num_layers())
        throw ContractError("weight vector has " + std::to_string(w.size()) + " entries, embeddings have " +
                            std::to_string(a.num_layers()) + " layers");
    double d = 0;
    for (int l = 0; l < a.num_layers(); ++l)
        if (w.w[l] != 0.0) d += w.w[l] * cosine_distance(a.layers[l], b.layers[l]);
    return d;
}

}  // namespace uvstyle
