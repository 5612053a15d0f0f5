/**
 * @file test_pca.cpp
 * @brief Per-layer PCA: orthonormality, isometry, rank and reconstruction error
 */
#include <gtest/gtest.h>

#include "support.hpp"
#include "uvstyle/index.hpp"
#include "uvstyle/pca.hpp"

using namespace uvstyle;
using namespace testing_support;

namespace {

/// Cyclic Jacobi eigenvalue iteration on a dense symmetric matrix.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> A) {
    const int n = static_cast<int>(A.size());
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += A[p][q] * A[p][q];
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(A[p][q]) < 1e-300) continue;
                const double theta = (A[q][q] - A[p][p]) / (2 * A[p][q]);
                const double t = (theta >= 0 ? 1 : -1) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1), s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = A[k][p], akq = A[k][q];
                    A[k][p] = c * akp - s * akq;
                    A[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = A[p][k], aqk = A[q][k];
                    A[p][k] = c * apk - s * aqk;
                    A[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (int i = 0; i < n; ++i) ev[i] = A[i][i];
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

std::vector<std::vector<double>> population_covariance(const std::vector<GramEmbedding>& corpus, int l) {
    const int d = static_cast<int>(corpus[0].layers[l].size());
    const double n = static_cast<double>(corpus.size());
    std::vector<double> mu(d, 0.0);
    for (const auto& g : corpus)
        for (int j = 0; j < d; ++j) mu[j] += g.layers[l][j] / n;
    std::vector<std::vector<double>> C(d, std::vector<double>(d, 0.0));
    for (const auto& g : corpus)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) C[i][j] += (g.layers[l][i] - mu[i]) * (g.layers[l][j] - mu[j]) / n;
    return C;
}

std::vector<GramEmbedding> random_corpus(std::uint64_t seed, int n, const std::vector<int>& lengths) {
    std::mt19937_64 rng(seed);
    std::vector<GramEmbedding> out;
    for (int i = 0; i < n; ++i) out.push_back(random_embedding(rng, lengths));
    return out;
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST(Pca, ComponentsOrthonormalAndVarianceNonIncreasing) {
    const auto corpus = random_corpus(1, 40, {12, 90});
    const auto m = fit_pca(corpus, 70);
    ASSERT_EQ(m.layers.size(), 2u);
    EXPECT_EQ(m.layers[0].k(), 12);
    EXPECT_EQ(m.layers[1].k(), 70);
    for (const auto& P : m.layers) {
        for (int a = 0; a < P.k(); ++a)
            for (int b = 0; b < P.k(); ++b) {
                double s = 0;
                for (int j = 0; j < P.input_dim; ++j)
                    s += P.components[std::size_t(a) * P.input_dim + j] * P.components[std::size_t(b) * P.input_dim + j];
                EXPECT_NEAR(s, a == b ? 1.0 : 0.0, 1e-6);
            }
        for (std::size_t i = 1; i < P.explained_variance.size(); ++i)
            EXPECT_LE(P.explained_variance[i], P.explained_variance[i - 1] + 1e-15);
    }
}

TEST(Pca, FullRankLayerZeroIsAnIsometry) {
    const auto d = small_dataset(2);
    const auto corpus = embed_solids(d.solids, default_weights(), NormalizationPolicy::defaults(EncoderSpec{}));
    const auto m = fit_pca(corpus, 70);
    ASSERT_EQ(m.layers[0].k(), 21);
    std::vector<GramEmbedding> red;
    for (const auto& g : corpus) red.push_back(reduce(g, m));
    for (std::size_t i = 0; i < corpus.size(); ++i)
        for (std::size_t j = i + 1; j < corpus.size(); ++j)
            EXPECT_NEAR(euclid(red[i].layers[0], red[j].layers[0]), euclid(corpus[i].layers[0], corpus[j].layers[0]),
                        1e-6);
}

TEST(Pca, AffineSubspaceRankFive) {
    std::mt19937_64 rng(2);
    const int dim = 40;
    const auto origin = random_vector(rng, dim);
    std::vector<std::vector<double>> basis;
    for (int b = 0; b < 5; ++b) basis.push_back(random_vector(rng, dim));
    std::vector<GramEmbedding> corpus;
    for (int i = 0; i < 30; ++i) {
        GramEmbedding g;
        g.policy = "none";
        std::vector<double> x = origin;
        for (const auto& b : basis) {
            const double c = std::uniform_real_distribution<double>(-2, 2)(rng);
            for (int j = 0; j < dim; ++j) x[j] += c * b[j];
        }
        g.layers.push_back(x);
        g.n_used.push_back(1);
        corpus.push_back(g);
    }
    const auto m = fit_pca(corpus, 70);
    const auto& ev = m.layers[0].explained_variance;
    ASSERT_EQ(m.layers[0].k(), dim);
    for (int i = 0; i < 5; ++i) EXPECT_GT(ev[i], 1e-3);
    for (int i = 5; i < dim; ++i) EXPECT_NEAR(ev[i], 0.0, 1e-9);
}

TEST(Pca, EigenvaluesAndReconstructionErrorMatchJacobiOracle) {
    for (int n : {50, 8}) {  // primal and dual (n <= dim) code paths
        const auto corpus = random_corpus(3 + n, n, {15});
        const int target = 4;
        const auto m = fit_pca(corpus, target);
        const auto ev = jacobi_eigenvalues(population_covariance(corpus, 0));
        for (int i = 0; i < target; ++i) EXPECT_NEAR(m.layers[0].explained_variance[i], ev[i], 1e-9 * ev[0]);
        double discarded = 0;
        for (std::size_t i = target; i < ev.size(); ++i) discarded += std::max(ev[i], 0.0);
        double err = 0;
        for (const auto& g : corpus) {
            const auto back = expand_layer(reduce(g, m).layers[0], m.layers[0]);
            for (std::size_t j = 0; j < back.size(); ++j) err += (back[j] - g.layers[0][j]) * (back[j] - g.layers[0][j]);
        }
        err /= n;
        EXPECT_NEAR(err, discarded, 1e-6 * discarded) << "n = " << n;
    }
}

TEST(Pca, ReducedAndRawDoNotMix) {
    const auto corpus = random_corpus(4, 10, {6, 10});
    const auto m = fit_pca(corpus, 3);
    const auto r = reduce(corpus[0], m);
    EXPECT_EQ(r.reduction, m.reduction_tag());
    EXPECT_THROW(layer_distance(r, corpus[1], 0), IncompatibleError);
    EXPECT_THROW(reduce(r, m), IncompatibleError);
    EXPECT_THROW(fit_pca({corpus[0]}, 3), ContractError);
    auto other = corpus[1];
    other.fingerprint = "enc-x";
    EXPECT_THROW(reduce(other, m), IncompatibleError);
    EXPECT_NO_THROW(layer_distance(r, reduce(corpus[1], m), 1));
}

TEST(Pca, FileRoundTrip) {
    const auto m = fit_pca(random_corpus(5, 12, {6, 20}), 5);
    const auto back = load_pca(save_pca(m));
    EXPECT_EQ(back.id, m.id);
    EXPECT_EQ(back.layers[1].components, m.layers[1].components);
    auto bytes = save_pca(m);
    bytes.pop_back();
    EXPECT_THROW(load_pca(bytes), ParseError);
}
