/**
 * @file pca.hpp
 * @brief Per-layer PCA reduction of Gram embeddings
 *
 * Explained variances are eigenvalues of the population covariance (1/n), so the
 * mean squared reconstruction error over the fitting corpus equals the sum of
 * the discarded eigenvalues.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uvstyle/errors.hpp"
#include "uvstyle/io.hpp"
#include "uvstyle/style.hpp"

namespace uvstyle {

inline constexpr int kDefaultPcaTarget = 70;

struct PcaLayer {
    int input_dim = 0;
    std::vector<double> mean;
    std::vector<double> components;  ///< k x input_dim, row-major, orthonormal rows
    std::vector<double> explained_variance;
    int k() const { return input_dim ? static_cast<int>(components.size()) / input_dim : 0; }
};

struct PcaModel {
    std::vector<PcaLayer> layers;
    std::string fingerprint;  ///< encoder fingerprint of the corpus
    std::string policy;
    std::string id;           ///< content hash, recorded in reduced embeddings

    std::string reduction_tag() const { return "pca:" + id; }
};

namespace detail {

inline std::string pca_hash(const PcaModel& m) {
    ByteWriter w;
    w.str(m.fingerprint);
    w.str(m.policy);
    for (const auto& l : m.layers) {
        w.u32(static_cast<std::uint32_t>(l.input_dim));
        for (double v : l.mean) w.f64(v);
        for (double v : l.components) w.f64(v);
    }
    return hex64(fnv1a(w.bytes().data(), w.bytes().size()));
}

/// Extends `rows` (orthonormal, each of length dim) to `k` orthonormal rows by
/// Gram-Schmidt against the standard basis.
inline void complete_basis(std::vector<Eigen::VectorXd>& rows, int dim, int k) {
    for (int e = 0; e < dim && static_cast<int>(rows.size()) < k; ++e) {
        Eigen::VectorXd v = Eigen::VectorXd::Unit(dim, e);
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& r : rows) v -= r.dot(v) * r;
        const double n = v.norm();
        if (n > 1e-6) rows.push_back(v / n);
    }
}

inline PcaLayer fit_layer(const std::vector<const std::vector<double>*>& xs, int target) {
    const int n = static_cast<int>(xs.size());
    const int dim = static_cast<int>(xs[0]->size());
    const int k = std::min(dim, target);

    Eigen::MatrixXd X(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) X(i, j) = (*xs[i])[j];
    const Eigen::RowVectorXd mu = X.colwise().mean();
    X.rowwise() -= mu;

    std::vector<std::pair<double, Eigen::VectorXd>> eig;  // (variance, direction)
    if (n <= dim) {
        // Dual form: eigenvectors of X X^T / n map to X^T u / sqrt(n lambda).
        const Eigen::MatrixXd K = (X * X.transpose()) / n;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
        const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
        for (int i = n - 1; i >= 0; --i) {
            const double lam = es.eigenvalues()(i);
            if (!(lam > 1e-12 * top) || top == 0) continue;
            Eigen::VectorXd v = X.transpose() * es.eigenvectors().col(i);
            v /= v.norm();
            eig.emplace_back(lam, std::move(v));
        }
    } else {
        const Eigen::MatrixXd C = (X.transpose() * X) / n;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
        const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
        for (int i = dim - 1; i >= 0; --i) {
            const double lam = es.eigenvalues()(i);
            if (!(lam > 1e-12 * top) || top == 0) continue;
            eig.emplace_back(lam, es.eigenvectors().col(i));
        }
    }
    std::stable_sort(eig.begin(), eig.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<Eigen::VectorXd> rows;
    std::vector<double> var;
    for (auto& [lam, v] : eig) {
        if (static_cast<int>(rows.size()) == k) break;
        // Re-orthogonalize against earlier rows to keep the basis exact.
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& r : rows) v -= r.dot(v) * r;
        const double nv = v.norm();
        if (nv < 1e-6) continue;
        rows.push_back(v / nv);
        var.push_back(lam);
    }
    complete_basis(rows, dim, k);
    var.resize(rows.size(), 0.0);

    PcaLayer out;
    out.input_dim = dim;
    out.mean.assign(mu.data(), mu.data() + dim);
    out.components.reserve(std::size_t(k) * dim);
    for (const auto& r : rows) out.components.insert(out.components.end(), r.data(), r.data() + dim);
    out.explained_variance = std::move(var);
    return out;
}

}  // namespace detail

/// Fits one PCA per layer keeping k_l = min(raw Gram length, target) components.
inline PcaModel fit_pca(const std::vector<GramEmbedding>& corpus, int target = kDefaultPcaTarget) {
    if (corpus.size() < 2) throw ContractError("PCA needs at least 2 embeddings");
    if (target < 1) throw ContractError("PCA target dimension must be >= 1");
    for (const auto& g : corpus) {
        if (g.reduction != "raw") throw IncompatibleError("PCA must be fitted on raw (unreduced) embeddings");
        check_compatible(corpus.front(), g);
    }
    PcaModel m;
    m.fingerprint = corpus.front().fingerprint;
    m.policy = corpus.front().policy;
    for (int l = 0; l < corpus.front().num_layers(); ++l) {
        std::vector<const std::vector<double>*> xs;
        for (const auto& g : corpus) xs.push_back(&g.layers[l]);
        m.layers.push_back(detail::fit_layer(xs, target));
    }
    m.id = detail::pca_hash(m);
    return m;
}

inline GramEmbedding reduce(const GramEmbedding& g, const PcaModel& m) {
    if (g.reduction != "raw") throw IncompatibleError("embedding is already reduced (" + g.reduction + ")");
    if (g.fingerprint != m.fingerprint || g.policy != m.policy)
        throw IncompatibleError("PCA model was fitted on a different encoder or policy");
    if (g.num_layers() != static_cast<int>(m.layers.size()))
        throw IncompatibleError("PCA model layer count differs from embedding");
    GramEmbedding out;
    out.fingerprint = g.fingerprint;
    out.policy = g.policy;
    out.n_used = g.n_used;
    out.reduction = m.reduction_tag();
    for (int l = 0; l < g.num_layers(); ++l) {
        const auto& P = m.layers[l];
        if (static_cast<int>(g.layers[l].size()) != P.input_dim)
            throw IncompatibleError("layer " + std::to_string(l) + " length differs from PCA input");
        std::vector<double> centered(P.input_dim);
        for (int j = 0; j < P.input_dim; ++j) centered[j] = g.layers[l][j] - P.mean[j];
        std::vector<double> y(P.k(), 0.0);
        for (int c = 0; c < P.k(); ++c) {
            const double* row = P.components.data() + std::size_t(c) * P.input_dim;
            double s = 0;
            for (int j = 0; j < P.input_dim; ++j) s += row[j] * centered[j];
            y[c] = s;
        }
        out.layers.push_back(std::move(y));
    }
    return out;
}

/// Maps a reduced layer vector back to the raw Gram space.
inline std::vector<double> expand_layer(const std::vector<double>& y, const PcaLayer& P) {
    std::vector<double> x = P.mean;
    for (int c = 0; c < P.k(); ++c) {
        const double* row = P.components.data() + std::size_t(c) * P.input_dim;
        for (int j = 0; j < P.input_dim; ++j) x[j] += y[c] * row[j];
    }
    return x;
}

// ---------------------------------------------------------------------------
// PCA model file: "UVPC" | u32 version | str fingerprint | str policy | u32 L |
//   per layer: u32 dim | u32 k | f64 mean[dim] | f64 comps[k*dim] | f64 var[k]

inline Bytes save_pca(const PcaModel& m) {
    ByteWriter w;
    w.magic("UVPC");
    w.u32(1);
    w.str(m.fingerprint);
    w.str(m.policy);
    w.u32(static_cast<std::uint32_t>(m.layers.size()));
    for (const auto& l : m.layers) {
        w.u32(static_cast<std::uint32_t>(l.input_dim));
        w.u32(static_cast<std::uint32_t>(l.k()));
        for (double v : l.mean) w.f64(v);
        for (double v : l.components) w.f64(v);
        for (double v : l.explained_variance) w.f64(v);
    }
    return std::move(w).bytes();
}

inline PcaModel load_pca(const Bytes& b) {
    ByteReader r(b);
    r.expect_magic("UVPC");
    if (const auto v = r.u32("version"); v != 1) throw ParseError("unknown PCA file version " + std::to_string(v));
    PcaModel m;
    m.fingerprint = r.str("fingerprint");
    m.policy = r.str("policy");
    const auto L = r.u32("layer count");
    for (std::uint32_t l = 0; l < L; ++l) {
        PcaLayer P;
        P.input_dim = static_cast<int>(r.u32("input dim"));
        const auto k = r.u32("component count");
        if (std::size_t(k) * P.input_dim * 8 > r.remaining())
            throw ParseError("unexpected end of input at byte offset " + std::to_string(r.offset()));
        P.mean.resize(P.input_dim);
        for (auto& v : P.mean) v = r.f64("mean");
        P.components.resize(std::size_t(k) * P.input_dim);
        for (auto& v : P.components) v = r.f64("components");
        P.explained_variance.resize(k);
        for (auto& v : P.explained_variance) v = r.f64("explained variance");
        m.layers.push_back(std::move(P));
    }
    r.expect_end();
    m.id = detail::pca_hash(m);
    return m;
}

}  // namespace uvstyle
