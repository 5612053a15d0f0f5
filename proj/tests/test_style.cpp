/**
 * @file test_style.cpp
 * @brief Normalization, Gram embeddings and style distances
 */
#include <gtest/gtest.h>

#include <numeric>

#include "support.hpp"
#include "uvstyle/style.hpp"

using namespace uvstyle;
using namespace testing_support;

namespace {

/// Per-face activation set with the given rows (one row per face).
ActivationSet face_layer(const std::vector<std::vector<double>>& rows) {
    ActivationSet a;
    a.num_faces = static_cast<int>(rows.size());
    a.mask.assign(rows.size() * kSamplesPerFace, 1);
    LayerMap m{static_cast<int>(rows.front().size()), false, {}};
    for (const auto& r : rows) m.values.insert(m.values.end(), r.begin(), r.end());
    a.layers.push_back(std::move(m));
    return a;
}

/// Brute force: accumulate the full outer product of every visible row, divide by N, read the upper triangle.
std::vector<double> brute_gram(const ActivationSet& a, int l, const LayerMap& phi) {
    const int C = phi.channels;
    std::vector<std::vector<double>> G(C, std::vector<double>(C, 0.0));
    int N = 0;
    for (int r = 0; r < phi.rows(); ++r) {
        if (!a.row_visible(l, r)) continue;
        ++N;
        for (int i = 0; i < C; ++i)
            for (int j = 0; j < C; ++j) G[i][j] += phi.row(r)[i] * phi.row(r)[j];
    }
    std::vector<double> out;
    for (int i = 0; i < C; ++i)
        for (int j = i; j < C; ++j) out.push_back(G[i][j] / N);
    return out;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / std::max(den, 1e-300);
}

const auto kDefaultPolicy = NormalizationPolicy::defaults(EncoderSpec{});

GramEmbedding embed(const UVSolid& s, const NormalizationPolicy& p = kDefaultPolicy) {
    return extract_grams(forward(s, default_weights()), p, default_weights().fingerprint());
}

}  // namespace

TEST(Normalize, ConstantChannelUnderInstanceNormIsZero) {
    auto a = face_layer({{3.0, 1.0}, {3.0, 2.0}, {3.0, 4.0}});
    const auto out = normalize(a, NormalizationPolicy::uniform(1, NormKind::InstanceNorm));
    for (int r = 0; r < 3; ++r) EXPECT_EQ(out.layers[0].row(r)[0], 0.0);
    // Second channel: mean 7/3, population sd sqrt(14/9).
    const double mu = 7.0 / 3.0, sd = std::sqrt(((1 - mu) * (1 - mu) + (2 - mu) * (2 - mu) + (4 - mu) * (4 - mu)) / 3);
    EXPECT_NEAR(out.layers[0].row(2)[1], (4 - mu) / (sd + 1e-5), 1e-12);
}

TEST(Normalize, FaceRecenterOfTwoSamplesIsMinusOnePlusOne) {
    ActivationSet a;
    a.num_faces = 1;
    a.mask.assign(kSamplesPerFace, 0);
    a.mask[0] = a.mask[1] = 1;
    LayerMap m{1, true, std::vector<double>(kSamplesPerFace, 7.0)};
    m.values[0] = 1;
    m.values[1] = 3;
    a.layers.push_back(m);
    const auto out = normalize(a, NormalizationPolicy::uniform(1, NormKind::FaceRecenter));
    EXPECT_EQ(out.layers[0].values[0], -1.0);
    EXPECT_EQ(out.layers[0].values[1], 1.0);
    for (int k = 2; k < kSamplesPerFace; ++k) EXPECT_EQ(out.layers[0].values[k], 0.0) << "hidden row " << k;
}

TEST(Normalize, FaceRecenterLeavesZeroFaceMeans) {
    const auto s = random_solid(21);
    const auto A = forward(s, default_weights());
    const auto N = normalize(A, kDefaultPolicy);
    for (int l = 0; l <= 3; ++l)
        for (int f = 0; f < s.num_faces(); ++f)
            for (int c = 0; c < N.layers[l].channels; ++c) {
                double sum = 0;
                int m = 0;
                for (int k = 0; k < kSamplesPerFace; ++k)
                    if (s.faces[f].visible(k)) {
                        sum += N.layers[l].row(f * kSamplesPerFace + k)[c];
                        ++m;
                    }
                EXPECT_NEAR(sum / m, 0.0, 1e-9);
            }
}

TEST(Normalize, RawActivationsAreUntouched) {
    const auto A = forward(random_solid(22), default_weights());
    const auto copy = A.layers[2].values;
    normalize(A, kDefaultPolicy);
    EXPECT_EQ(A.layers[2].values, copy);
}

TEST(Normalize, FaceRecenterOnPerFaceLayerIsAContractError) {
    const auto A = forward(small_box(1), default_weights());
    EXPECT_THROW(normalize(A, NormalizationPolicy::uniform(7, NormKind::FaceRecenter)), ContractError);
    EXPECT_THROW(normalize(A, NormalizationPolicy::uniform(6, NormKind::None)), ContractError);
}

TEST(Normalize, BackwardMatchesFiniteDifferences) {
    // Well-conditioned random values in the encoder's layout keep central differences accurate.
    auto A = forward(small_box(4, true), default_weights());
    std::mt19937_64 rng(4);
    for (auto& L : A.layers) L.values = random_vector(rng, L.values.size());
    for (auto kind : {NormKind::None, NormKind::InstanceNorm, NormKind::FaceRecenter}) {
        for (int l : {1, 4}) {
            if (kind == NormKind::FaceRecenter && l == 4) continue;
            auto p = NormalizationPolicy::uniform(7, NormKind::None);
            p.per_layer[l] = kind;
            const auto R = random_vector(rng, A.layers[l].values.size());
            auto loss = [&](const ActivationSet& x) { return dot(R, normalize_layer(x, l, p).values); };
            const auto g = normalize_layer_backward(A, l, p, R);
            std::uniform_int_distribution<std::size_t> pick(0, A.layers[l].values.size() - 1);
            for (int t = 0; t < 10; ++t) {
                const auto i = pick(rng);
                auto plus = A, minus = A;
                plus.layers[l].values[i] += 1e-6;
                minus.layers[l].values[i] -= 1e-6;
                const double fd = (loss(plus) - loss(minus)) / 2e-6;
                EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << norm_name(kind) << " layer " << l;
            }
        }
    }
}

TEST(Gram, TwoByTwoIdentity) {
    const auto a = face_layer({{1, 0}, {0, 1}});
    const auto g = extract_grams(a, NormalizationPolicy::uniform(1, NormKind::None));
    EXPECT_EQ(g.layers[0], (std::vector<double>{0.5, 0.0, 0.5}));
    EXPECT_EQ(g.n_used[0], 2);
}

TEST(Gram, MatchesBruteForceOuterProducts) {
    for (std::uint64_t seed : {31, 32, 33}) {
        const auto s = random_solid(seed);
        const auto A = forward(s, default_weights());
        const auto g = extract_grams(A, kDefaultPolicy);
        for (int l = 0; l < 7; ++l) {
            const auto ref = brute_gram(A, l, normalize_layer(A, l, kDefaultPolicy));
            EXPECT_LE(rel_err(g.layers[l], ref), 1e-6) << "layer " << l;
        }
    }
}

TEST(Gram, DefaultLengths) {
    EXPECT_EQ(gram_lengths(EncoderSpec{}), (std::vector<int>{21, 136, 528, 2080, 2080, 2080, 2080}));
    const auto g = embed(small_box(2));
    for (int l = 0; l < 7; ++l) EXPECT_EQ(static_cast<int>(g.layers[l].size()), gram_lengths(EncoderSpec{})[l]);
}

TEST(Gram, AllZeroLayerIsDegenerateAndNamed) {
    const auto a = face_layer({{2, 5}, {2, 5}});
    try {
        extract_grams(a, NormalizationPolicy::uniform(1, NormKind::InstanceNorm));
        FAIL();
    } catch (const DegenerateLayerError& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate layer 0"), std::string::npos) << e.what();
    }
}

TEST(Gram, SampleOrderInvarianceIsExactOnIntegerActivations) {
    // Integer-valued rows make every partial sum exact, so reordering cannot change a single bit.
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> v(-8, 8);
    std::vector<std::vector<double>> rows(40, std::vector<double>(5));
    for (auto& r : rows)
        for (auto& x : r) x = v(rng);
    auto shuffled = rows;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto p = NormalizationPolicy::uniform(1, NormKind::None);
    EXPECT_EQ(extract_grams(face_layer(rows), p).layers[0], extract_grams(face_layer(shuffled), p).layers[0]);
}

TEST(Gram, HiddenSampleValuesDoNotReachLayerZero) {
    const auto s = generate_solid(make_profile(ContentClass::LShape, 3), default_styles()[0], 3);
    auto t = s;
    const int cap = s.num_faces() - 2;
    int changed = 0;
    for (int k = 0; k < kSamplesPerFace; ++k)
        if (!t.faces[cap].visible(k)) {
            for (int c = 0; c < 6; ++c) t.faces[cap].at(k, c) += 0.3 * (c + 1);
            ++changed;
        }
    ASSERT_GT(changed, 0);
    EXPECT_EQ(embed(s).layers[0], embed(t).layers[0]);
}

TEST(Gram, TranslationLeavesLayerZeroUnchanged) {
    const auto s = random_solid(41);
    auto t = s;
    for (auto& f : t.faces)
        for (int k = 0; k < kSamplesPerFace; ++k) {
            f.at(k, 0) += 0.25;
            f.at(k, 1) -= 0.5;
            f.at(k, 2) += 1.0;
        }
    const auto a = embed(s).layers[0], b = embed(t).layers[0];
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
}

TEST(Gram, BackwardMatchesFiniteDifferences) {
    const auto A = forward(small_box(6), default_weights());
    std::mt19937_64 rng(6);
    const int l = 2;
    const auto phi = normalize_layer(A, l, kDefaultPolicy);
    const auto R = random_vector(rng, triu_length(phi.channels));
    const auto g = gram_triu_backward(A, l, phi, R);
    std::uniform_int_distribution<std::size_t> pick(0, phi.values.size() - 1);
    for (int t = 0; t < 20; ++t) {
        const auto i = pick(rng);
        auto plus = phi, minus = phi;
        plus.values[i] += 1e-6;
        minus.values[i] -= 1e-6;
        const double fd = (dot(R, gram_triu(A, l, plus)) - dot(R, gram_triu(A, l, minus))) / 2e-6;
        EXPECT_NEAR(g[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Distance, IdentityOrthogonalAntiparallel) {
    const std::vector<double> a{1, 2, 3}, b{-1, -2, -3}, c{3, 0, -1};
    EXPECT_EQ(cosine_distance(a, a), 0.0);
    EXPECT_NEAR(cosine_distance(a, c), 1.0, 1e-15);
    EXPECT_NEAR(cosine_distance(a, b), 2.0, 1e-15);
    EXPECT_THROW(cosine_distance(a, std::vector<double>{0, 0, 0}), DegenerateLayerError);
}

TEST(Distance, SymmetricBoundedAndScaleInvariant) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100; ++t) {
        const auto a = random_vector(rng, 30), b = random_vector(rng, 30);
        const double d = cosine_distance(a, b);
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 2.0);
        EXPECT_EQ(d, cosine_distance(b, a));
        auto scaled = a;
        const double c = std::uniform_real_distribution<double>(0.01, 100)(rng);
        for (auto& x : scaled) x *= c;
        EXPECT_NEAR(cosine_distance(scaled, b), d, 1e-9);
    }
}

TEST(Distance, ScalingNormalizedActivationsLeavesLayerDistanceUnchanged) {
    const auto A = forward(small_box(7, true), default_weights());
    const auto B = forward(small_box(8), default_weights());
    const auto p = NormalizationPolicy::uniform(7, NormKind::None);
    auto scaled = A;
    for (auto& v : scaled.layers[5].values) v *= 3.7;
    const auto ga = extract_grams(A, p), gs = extract_grams(scaled, p), gb = extract_grams(B, p);
    EXPECT_NEAR(layer_distance(ga, gb, 5), layer_distance(gs, gb, 5), 1e-9);
}

TEST(Distance, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    const auto a = random_vector(rng, 12), b = random_vector(rng, 12);
    const auto g = cosine_distance_grad(a, b);
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto p = a, m = a;
        p[i] += 1e-6;
        m[i] -= 1e-6;
        EXPECT_NEAR(g[i], (cosine_distance(p, b) - cosine_distance(m, b)) / 2e-6, 1e-7);
    }
}

TEST(StyleDistance, OneHotSelectsTheLayer) {
    const auto a = embed(small_box(9)), b = embed(small_box(10, true));
    EXPECT_DOUBLE_EQ(style_distance(a, b, LayerWeights::one_hot(7, 3)), layer_distance(a, b, 3));
    EXPECT_EQ(style_distance(a, a, LayerWeights::uniform(7)), 0.0);
}

TEST(StyleDistance, FirstFourLayersIsTheMeanOfTheirDistances) {
    const auto a = embed(random_solid(50)), b = embed(random_solid(51));
    double sum = 0;
    for (int l = 0; l < 4; ++l) sum += layer_distance(a, b, l);
    EXPECT_NEAR(style_distance(a, b, LayerWeights::first_k(7, 4)), sum / 4, 1e-15);
    EXPECT_EQ(LayerWeights::first_k(7, 4).w, (std::vector<double>{0.25, 0.25, 0.25, 0.25, 0, 0, 0}));
}

TEST(StyleDistance, LinearInTheWeights) {
    std::mt19937_64 rng(9);
    const auto lengths = gram_lengths(EncoderSpec{});
    const auto a = random_embedding(rng, lengths), b = random_embedding(rng, lengths);
    for (int t = 0; t < 20; ++t) {
        const auto u = random_simplex(rng, 7), v = random_simplex(rng, 7);
        const double lambda = std::uniform_real_distribution<double>(0, 1)(rng);
        LayerWeights mix{std::vector<double>(7)};
        for (int l = 0; l < 7; ++l) mix.w[l] = lambda * u.w[l] + (1 - lambda) * v.w[l];
        EXPECT_NEAR(style_distance(a, b, mix),
                    lambda * style_distance(a, b, u) + (1 - lambda) * style_distance(a, b, v), 1e-12);
    }
}

TEST(StyleDistance, OffSimplexWeightsAreRejected) {
    std::mt19937_64 rng(10);
    const auto lengths = gram_lengths(EncoderSpec{});
    const auto a = random_embedding(rng, lengths), b = random_embedding(rng, lengths);
    EXPECT_THROW(style_distance(a, b, LayerWeights{{0.5, 0.5, 0.1, 0, 0, 0, 0}}), ContractError);
    EXPECT_THROW(style_distance(a, b, LayerWeights{{1.1, -0.1, 0, 0, 0, 0, 0}}), ContractError);
    EXPECT_THROW(style_distance(a, b, LayerWeights::uniform(6)), ContractError);
    // Within tolerance is accepted.
    EXPECT_NO_THROW(style_distance(a, b, LayerWeights{{1.0 + 5e-10, 0, 0, 0, 0, 0, 0}}));
}

TEST(StyleDistance, IncompatibleEmbeddingsAreRejected) {
    std::mt19937_64 rng(11);
    const auto lengths = gram_lengths(EncoderSpec{});
    auto a = random_embedding(rng, lengths), b = random_embedding(rng, lengths);
    b.fingerprint = "enc-other";
    EXPECT_THROW(layer_distance(a, b, 0), IncompatibleError);
    b.fingerprint = a.fingerprint;
    b.policy = "different";
    EXPECT_THROW(layer_distance(a, b, 0), IncompatibleError);
    b.policy = a.policy;
    b.reduction = "pca70";
    EXPECT_THROW(style_distance(a, b, LayerWeights::uniform(7)), IncompatibleError);
}
