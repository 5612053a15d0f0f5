/**
 * @file encoder.hpp
 * @brief Deterministic UV-grid encoder: per-face 3x3 convolutions, masked face
 *        pooling with projection, and GIN-style message passing over face adjacency
 *
 * Layer numbering used throughout the library:
 *   0            input features (xyz + normal, 6 channels, per sample)
 *   1..C         convolution outputs (per sample, full 10x10 grid per face)
 *   C+1          pooled and projected face embedding (per face)
 *   C+2..        message-passing outputs (per face)
 *
 * `forward_traced` keeps the pre-activations needed by `backward`, which
 * propagates gradients of any per-layer activation loss back to the input grid.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "uvstyle/errors.hpp"
#include "uvstyle/geom.hpp"
#include "uvstyle/io.hpp"

namespace uvstyle {

inline constexpr int kFeatureChannels = 6;

struct EncoderSpec {
    std::vector<int> conv_channels{16, 32, 64};
    int face_embed_dim = 64;
    std::vector<int> gnn_dims{64, 64};
    double gin_epsilon = 0.0;
    std::uint64_t seed = 0;

    int num_conv() const { return static_cast<int>(conv_channels.size()); }
    int num_layers() const { return 2 + num_conv() + static_cast<int>(gnn_dims.size()); }
    int embed_layer() const { return 1 + num_conv(); }
    bool spatial(int layer) const { return layer <= num_conv(); }

    std::vector<int> layer_dims() const {
        std::vector<int> d{kFeatureChannels};
        d.insert(d.end(), conv_channels.begin(), conv_channels.end());
        d.push_back(face_embed_dim);
        d.insert(d.end(), gnn_dims.begin(), gnn_dims.end());
        return d;
    }

    json to_json() const {
        return {{"conv_channels", conv_channels}, {"face_embed_dim", face_embed_dim},
                {"gnn_dims", gnn_dims},           {"gin_epsilon", gin_epsilon},
                {"seed", seed}};
    }
    static EncoderSpec from_json(const json& j) {
        EncoderSpec s;
        s.conv_channels = j.at("conv_channels").get<std::vector<int>>();
        s.face_embed_dim = j.at("face_embed_dim").get<int>();
        s.gnn_dims = j.at("gnn_dims").get<std::vector<int>>();
        s.gin_epsilon = j.at("gin_epsilon").get<double>();
        s.seed = j.at("seed").get<std::uint64_t>();
        return s;
    }

    bool same_architecture(const EncoderSpec& o) const {
        return conv_channels == o.conv_channels && face_embed_dim == o.face_embed_dim &&
               gnn_dims == o.gnn_dims && gin_epsilon == o.gin_epsilon;
    }
};

/// 3x3 kernel stored as [ky][kx][out][in].
struct ConvWeights {
    int in = 0, out = 0;
    std::vector<double> kernel;
    std::vector<double> bias;
    double k(int ky, int kx, int o, int c) const { return kernel[((ky * 3 + kx) * out + o) * in + c]; }
};

/// Row-major [out][in].
struct DenseWeights {
    int in = 0, out = 0;
    std::vector<double> weight;
    std::vector<double> bias;
};

struct GinWeights {
    DenseWeights hidden;
    DenseWeights output;
};

enum class Provenance : std::uint32_t { Seeded = 0, Loaded = 1 };

struct WeightBundle {
    EncoderSpec spec;
    Provenance provenance = Provenance::Seeded;
    std::vector<ConvWeights> conv;
    DenseWeights embed;
    std::vector<GinWeights> gin;

    bool operator==(const WeightBundle& o) const;
    std::string fingerprint() const;
};

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

inline DenseWeights make_dense(int in, int out, std::mt19937_64& rng) {
    DenseWeights d{in, out, std::vector<double>(std::size_t(in) * out), std::vector<double>(out, 0.0)};
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / in));
    for (auto& v : d.weight) v = static_cast<float>(g(rng));
    return d;
}

inline ConvWeights make_conv(int in, int out, std::mt19937_64& rng) {
    ConvWeights c{in, out, std::vector<double>(std::size_t(9) * in * out), std::vector<double>(out, 0.0)};
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / (9.0 * in)));
    for (auto& v : c.kernel) v = static_cast<float>(g(rng));
    return c;
}

}  // namespace detail

/// He-style initialization (variance 2 / fan_in), zero biases. Values are
/// rounded to float32 so the bundle survives the weight file unchanged.
inline WeightBundle init_weights(const EncoderSpec& spec) {
    WeightBundle b;
    b.spec = spec;
    b.provenance = Provenance::Seeded;
    std::mt19937_64 rng(spec.seed);
    int in = kChannels;
    for (int c : spec.conv_channels) {
        b.conv.push_back(detail::make_conv(in, c, rng));
        in = c;
    }
    b.embed = detail::make_dense(in, spec.face_embed_dim, rng);
    in = spec.face_embed_dim;
    for (int g : spec.gnn_dims) {
        GinWeights gw;
        gw.hidden = detail::make_dense(in, g, rng);
        gw.output = detail::make_dense(g, g, rng);
        b.gin.push_back(std::move(gw));
        in = g;
    }
    return b;
}

/// Throws ShapeError naming the first tensor inconsistent with the spec.
inline void check_bundle_shapes(const WeightBundle& b) {
    const auto& s = b.spec;
    auto fail = [](const std::string& what) { throw ShapeError("weight bundle: " + what); };
    if (b.conv.size() != s.conv_channels.size()) fail("convolution layer count differs from spec");
    int in = kChannels;
    for (std::size_t i = 0; i < b.conv.size(); ++i) {
        const auto& c = b.conv[i];
        const std::string name = "layer " + std::to_string(i + 1) + " kernel";
        if (c.in != in || c.out != s.conv_channels[i] ||
            c.kernel.size() != std::size_t(9) * c.in * c.out || c.bias.size() != std::size_t(c.out))
            fail(name + " has shape " + std::to_string(c.out) + "x" + std::to_string(c.in) + "x3x3, expected " +
                 std::to_string(s.conv_channels[i]) + "x" + std::to_string(in) + "x3x3");
        in = c.out;
    }
    auto check_dense = [&](const DenseWeights& d, int want_in, int want_out, const std::string& name) {
        if (d.in != want_in || d.out != want_out || d.weight.size() != std::size_t(d.in) * d.out ||
            d.bias.size() != std::size_t(d.out))
            fail(name + " has shape " + std::to_string(d.out) + "x" + std::to_string(d.in) + ", expected " +
                 std::to_string(want_out) + "x" + std::to_string(want_in));
    };
    check_dense(b.embed, in, s.face_embed_dim, "layer " + std::to_string(s.embed_layer()) + " projection");
    in = s.face_embed_dim;
    if (b.gin.size() != s.gnn_dims.size()) fail("message-passing layer count differs from spec");
    for (std::size_t i = 0; i < b.gin.size(); ++i) {
        const std::string name = "layer " + std::to_string(s.embed_layer() + 1 + i);
        check_dense(b.gin[i].hidden, in, s.gnn_dims[i], name + " hidden");
        check_dense(b.gin[i].output, s.gnn_dims[i], s.gnn_dims[i], name + " output");
        in = s.gnn_dims[i];
    }
}

// ---------------------------------------------------------------------------
// Weight file: "UVWB" | u32 version | spec echo | float32 tensors in layer order

inline constexpr std::uint32_t kWeightFormatVersion = 1;

namespace detail {

inline void put_spec(ByteWriter& w, const EncoderSpec& s) {
    w.u32(static_cast<std::uint32_t>(s.conv_channels.size()));
    for (int c : s.conv_channels) w.u32(static_cast<std::uint32_t>(c));
    w.u32(static_cast<std::uint32_t>(s.face_embed_dim));
    w.u32(static_cast<std::uint32_t>(s.gnn_dims.size()));
    for (int g : s.gnn_dims) w.u32(static_cast<std::uint32_t>(g));
    w.f64(s.gin_epsilon);
    w.u64(s.seed);
}

inline EncoderSpec get_spec(ByteReader& r) {
    EncoderSpec s;
    const auto nc = r.u32("conv layer count");
    if (nc > 64) throw ParseError("implausible conv layer count " + std::to_string(nc));
    s.conv_channels.resize(nc);
    for (auto& c : s.conv_channels) c = static_cast<int>(r.u32("conv channels"));
    s.face_embed_dim = static_cast<int>(r.u32("face embed dim"));
    const auto ng = r.u32("gnn layer count");
    if (ng > 64) throw ParseError("implausible gnn layer count " + std::to_string(ng));
    s.gnn_dims.resize(ng);
    for (auto& g : s.gnn_dims) g = static_cast<int>(r.u32("gnn dims"));
    s.gin_epsilon = r.f64("gin epsilon");
    s.seed = r.u64("seed");
    return s;
}

inline void put_tensor(ByteWriter& w, const std::vector<double>& t) {
    w.u32(static_cast<std::uint32_t>(t.size()));
    for (double v : t) w.f32(static_cast<float>(v));
}

inline std::vector<double> get_tensor(ByteReader& r, const std::string& name) {
    const auto n = r.u32(name.c_str());
    if (std::size_t(n) * sizeof(float) > r.remaining())
        throw ParseError("unexpected end of input at byte offset " + std::to_string(r.offset()) +
                         " while reading " + name);
    std::vector<float> tmp(n);
    r.read_f32(tmp.data(), n, name.c_str());
    return std::vector<double>(tmp.begin(), tmp.end());
}

}  // namespace detail

inline Bytes save_weights(const WeightBundle& b) {
    ByteWriter w;
    w.magic("UVWB");
    w.u32(kWeightFormatVersion);
    detail::put_spec(w, b.spec);
    w.u32(static_cast<std::uint32_t>(b.provenance));
    for (const auto& c : b.conv) {
        detail::put_tensor(w, c.kernel);
        detail::put_tensor(w, c.bias);
    }
    detail::put_tensor(w, b.embed.weight);
    detail::put_tensor(w, b.embed.bias);
    for (const auto& g : b.gin) {
        detail::put_tensor(w, g.hidden.weight);
        detail::put_tensor(w, g.hidden.bias);
        detail::put_tensor(w, g.output.weight);
        detail::put_tensor(w, g.output.bias);
    }
    return std::move(w).bytes();
}

/// Parses a weight file. Tensor sizes are checked against the echoed spec.
inline WeightBundle load_weights(const Bytes& bytes) {
    ByteReader r(bytes);
    r.expect_magic("UVWB");
    const auto version = r.u32("version");
    if (version != kWeightFormatVersion)
        throw ParseError("unknown weight file version " + std::to_string(version));
    WeightBundle b;
    b.spec = detail::get_spec(r);
    b.provenance = static_cast<Provenance>(r.u32("provenance"));
    int in = kChannels;
    for (std::size_t i = 0; i < b.spec.conv_channels.size(); ++i) {
        const std::string name = "layer " + std::to_string(i + 1);
        ConvWeights c;
        c.in = in;
        c.out = b.spec.conv_channels[i];
        c.kernel = detail::get_tensor(r, name + " kernel");
        c.bias = detail::get_tensor(r, name + " bias");
        b.conv.push_back(std::move(c));
        in = b.spec.conv_channels[i];
    }
    b.embed = {in, b.spec.face_embed_dim, detail::get_tensor(r, "projection weight"),
               detail::get_tensor(r, "projection bias")};
    in = b.spec.face_embed_dim;
    for (int g : b.spec.gnn_dims) {
        GinWeights gw;
        gw.hidden = {in, g, detail::get_tensor(r, "gin hidden weight"), detail::get_tensor(r, "gin hidden bias")};
        gw.output = {g, g, detail::get_tensor(r, "gin output weight"), detail::get_tensor(r, "gin output bias")};
        b.gin.push_back(std::move(gw));
        in = g;
    }
    r.expect_end();
    check_bundle_shapes(b);
    return b;
}

/// Loads a weight file and requires it to match an expected architecture.
inline WeightBundle load_weights(const Bytes& bytes, const EncoderSpec& expected) {
    auto b = load_weights(bytes);
    std::vector<std::string> bad;
    const auto have = b.spec.layer_dims(), want = expected.layer_dims();
    const std::size_t n = std::max(have.size(), want.size());
    for (std::size_t l = 0; l < n; ++l) {
        const int h = l < have.size() ? have[l] : -1;
        const int w = l < want.size() ? want[l] : -1;
        if (h != w)
            bad.push_back("layer " + std::to_string(l) + " (" + std::to_string(h) + " vs " + std::to_string(w) + ")");
    }
    if (b.spec.gin_epsilon != expected.gin_epsilon) bad.push_back("gin_epsilon");
    if (!bad.empty()) {
        std::string msg = "spec mismatch:";
        for (const auto& s : bad) msg += " " + s;
        throw ShapeError(msg);
    }
    return b;
}

inline bool WeightBundle::operator==(const WeightBundle& o) const { return save_weights(*this) == save_weights(o); }

/// Hash of the architecture and every tensor; seed and provenance are excluded
/// because they do not change the function the encoder computes.
inline std::string WeightBundle::fingerprint() const {
    ByteWriter w;
    EncoderSpec arch = spec;
    arch.seed = 0;
    detail::put_spec(w, arch);
    auto put = [&](const std::vector<double>& t) { detail::put_tensor(w, t); };
    for (const auto& c : conv) {
        put(c.kernel);
        put(c.bias);
    }
    put(embed.weight);
    put(embed.bias);
    for (const auto& g : gin) {
        put(g.hidden.weight);
        put(g.hidden.bias);
        put(g.output.weight);
        put(g.output.bias);
    }
    return "enc-" + hex64(fnv1a(w.bytes().data(), w.bytes().size()));
}

// ---------------------------------------------------------------------------
// Activations

struct LayerMap {
    int channels = 0;
    bool spatial = false;        ///< one row per grid sample (F*100 rows) vs one row per face
    std::vector<double> values;  ///< rows x channels, row-major

    int rows() const { return channels ? static_cast<int>(values.size()) / channels : 0; }
    double* row(int r) { return values.data() + std::size_t(r) * channels; }
    const double* row(int r) const { return values.data() + std::size_t(r) * channels; }
};

struct ActivationSet {
    int num_faces = 0;
    std::vector<std::uint8_t> mask;  ///< F*100 visibility flags, grouping rows by face
    std::vector<LayerMap> layers;

    int num_layers() const { return static_cast<int>(layers.size()); }

    /// N_l: visible samples for per-sample layers, faces otherwise.
    int count(int layer) const {
        if (!layers[layer].spatial) return num_faces;
        return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
    }
    int face_of_row(int layer, int row) const { return layers[layer].spatial ? row / kSamplesPerFace : row; }
    bool row_visible(int layer, int row) const { return !layers[layer].spatial || mask[row] != 0; }
};

/// Everything `backward` needs besides the activations themselves.
struct ForwardTrace {
    ActivationSet acts;
    std::vector<std::vector<double>> conv_pre;  ///< per conv layer, F*100 x out
    std::vector<double> pooled;                  ///< F x last conv width
    std::vector<int> visible_per_face;
    std::vector<double> embed_pre;               ///< F x embed
    std::vector<std::vector<double>> gin_sum, gin_hidden_pre, gin_out_pre;
    std::vector<std::vector<int>> neighbours;
};

namespace detail {

/// Pre-activation of a same-padded 3x3 convolution over one face grid.
inline void conv_face(const double* in, const ConvWeights& w, double* out) {
    for (int i = 0; i < kGrid; ++i)
        for (int j = 0; j < kGrid; ++j) {
            double* o = out + std::size_t(i * kGrid + j) * w.out;
            std::copy(w.bias.begin(), w.bias.end(), o);
            for (int ky = 0; ky < 3; ++ky) {
                const int y = i + ky - 1;
                if (y < 0 || y >= kGrid) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int x = j + kx - 1;
                    if (x < 0 || x >= kGrid) continue;
                    const double* src = in + std::size_t(y * kGrid + x) * w.in;
                    const double* K = w.kernel.data() + std::size_t(ky * 3 + kx) * w.out * w.in;
                    for (int oc = 0; oc < w.out; ++oc) {
                        const double* k = K + std::size_t(oc) * w.in;
                        double acc = 0;
                        for (int c = 0; c < w.in; ++c) acc += k[c] * src[c];
                        o[oc] += acc;
                    }
                }
            }
        }
}

/// Accumulates d(input) from d(pre-activation) for one face grid.
inline void conv_face_backward(const double* dout, const ConvWeights& w, double* din) {
    for (int i = 0; i < kGrid; ++i)
        for (int j = 0; j < kGrid; ++j) {
            const double* g = dout + std::size_t(i * kGrid + j) * w.out;
            for (int ky = 0; ky < 3; ++ky) {
                const int y = i + ky - 1;
                if (y < 0 || y >= kGrid) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int x = j + kx - 1;
                    if (x < 0 || x >= kGrid) continue;
                    double* dst = din + std::size_t(y * kGrid + x) * w.in;
                    const double* K = w.kernel.data() + std::size_t(ky * 3 + kx) * w.out * w.in;
                    for (int oc = 0; oc < w.out; ++oc) {
                        const double go = g[oc];
                        if (go == 0.0) continue;
                        const double* k = K + std::size_t(oc) * w.in;
                        for (int c = 0; c < w.in; ++c) dst[c] += k[c] * go;
                    }
                }
            }
        }
}

inline void dense(const DenseWeights& d, const double* x, double* y) {
    for (int o = 0; o < d.out; ++o) {
        const double* w = d.weight.data() + std::size_t(o) * d.in;
        double acc = d.bias[o];
        for (int i = 0; i < d.in; ++i) acc += w[i] * x[i];
        y[o] = acc;
    }
}

inline void dense_backward(const DenseWeights& d, const double* dy, double* dx) {
    for (int o = 0; o < d.out; ++o) {
        if (dy[o] == 0.0) continue;
        const double* w = d.weight.data() + std::size_t(o) * d.in;
        for (int i = 0; i < d.in; ++i) dx[i] += w[i] * dy[o];
    }
}

inline double relu(double v) { return v > 0 ? v : 0.0; }

}  // namespace detail

inline ForwardTrace forward_traced(const UVSolid& s, const WeightBundle& w) {
    check_bundle_shapes(w);
    const auto& spec = w.spec;
    const int F = s.num_faces();
    if (F == 0) throw ShapeError("solid has no faces");

    ForwardTrace t;
    auto& A = t.acts;
    A.num_faces = F;
    A.mask.resize(std::size_t(F) * kSamplesPerFace);
    t.neighbours = s.neighbours();

    // Raw 7-channel input, and layer 0 as its first six channels.
    std::vector<double> input(std::size_t(F) * kFaceFloats);
    LayerMap L0{kFeatureChannels, true, std::vector<double>(std::size_t(F) * kSamplesPerFace * kFeatureChannels)};
    for (int f = 0; f < F; ++f) {
        const auto& face = s.faces[f];
        std::copy(face.data.begin(), face.data.end(), input.begin() + std::size_t(f) * kFaceFloats);
        for (int k = 0; k < kSamplesPerFace; ++k) {
            const int r = f * kSamplesPerFace + k;
            A.mask[r] = face.visible(k) ? 1 : 0;
            for (int c = 0; c < kFeatureChannels; ++c) L0.row(r)[c] = face.at(k, c);
        }
    }
    A.layers.push_back(std::move(L0));

    const double* prev = input.data();
    int prev_ch = kChannels;
    for (int li = 0; li < spec.num_conv(); ++li) {
        const auto& cw = w.conv[li];
        std::vector<double> pre(std::size_t(F) * kSamplesPerFace * cw.out);
        for (int f = 0; f < F; ++f)
            detail::conv_face(prev + std::size_t(f) * kSamplesPerFace * prev_ch, cw,
                              pre.data() + std::size_t(f) * kSamplesPerFace * cw.out);
        LayerMap L{cw.out, true, pre};
        for (auto& v : L.values) v = detail::relu(v);
        t.conv_pre.push_back(std::move(pre));
        A.layers.push_back(std::move(L));
        prev = A.layers.back().values.data();
        prev_ch = cw.out;
    }

    // Masked average pool, then projection + ReLU.
    const auto& last = A.layers.back();
    t.pooled.assign(std::size_t(F) * prev_ch, 0.0);
    t.visible_per_face.assign(F, 0);
    for (int f = 0; f < F; ++f) {
        double* p = t.pooled.data() + std::size_t(f) * prev_ch;
        int m = 0;
        for (int k = 0; k < kSamplesPerFace; ++k) {
            const int r = f * kSamplesPerFace + k;
            if (!A.mask[r]) continue;
            ++m;
            for (int c = 0; c < prev_ch; ++c) p[c] += last.row(r)[c];
        }
        if (m == 0) throw ShapeError("face " + std::to_string(f) + " has no visible sample to pool");
        for (int c = 0; c < prev_ch; ++c) p[c] /= m;
        t.visible_per_face[f] = m;
    }
    t.embed_pre.resize(std::size_t(F) * w.embed.out);
    LayerMap L4{w.embed.out, false, std::vector<double>(std::size_t(F) * w.embed.out)};
    for (int f = 0; f < F; ++f) {
        detail::dense(w.embed, t.pooled.data() + std::size_t(f) * prev_ch, t.embed_pre.data() + std::size_t(f) * w.embed.out);
        for (int c = 0; c < w.embed.out; ++c) L4.row(f)[c] = detail::relu(t.embed_pre[std::size_t(f) * w.embed.out + c]);
    }
    A.layers.push_back(std::move(L4));

    for (const auto& g : w.gin) {
        const auto& h = A.layers.back();
        const int din = h.channels, dh = g.hidden.out, dout = g.output.out;
        std::vector<double> sum(std::size_t(F) * din), hid_pre(std::size_t(F) * dh), out_pre(std::size_t(F) * dout);
        LayerMap L{dout, false, std::vector<double>(std::size_t(F) * dout)};
        std::vector<double> hid(dh);
        for (int f = 0; f < F; ++f) {
            double* sf = sum.data() + std::size_t(f) * din;
            for (int c = 0; c < din; ++c) sf[c] = (1.0 + spec.gin_epsilon) * h.row(f)[c];
            for (int nb : t.neighbours[f])
                for (int c = 0; c < din; ++c) sf[c] += h.row(nb)[c];
            double* hp = hid_pre.data() + std::size_t(f) * dh;
            detail::dense(g.hidden, sf, hp);
            for (int c = 0; c < dh; ++c) hid[c] = detail::relu(hp[c]);
            double* op = out_pre.data() + std::size_t(f) * dout;
            detail::dense(g.output, hid.data(), op);
            for (int c = 0; c < dout; ++c) L.row(f)[c] = detail::relu(op[c]);
        }
        t.gin_sum.push_back(std::move(sum));
        t.gin_hidden_pre.push_back(std::move(hid_pre));
        t.gin_out_pre.push_back(std::move(out_pre));
        A.layers.push_back(std::move(L));
    }
    return t;
}

inline ActivationSet forward(const UVSolid& s, const WeightBundle& w) { return forward_traced(s, w).acts; }

/// Given dLoss/d(activation) for every layer (same shapes as `trace.acts`,
/// empty vectors meaning zero), returns dLoss/d(input grid), F*100 x 7.
/// ReLU derivative at exactly zero is taken as zero.
inline std::vector<double> backward(const ForwardTrace& t, const WeightBundle& w,
                                    std::vector<std::vector<double>> layer_grads) {
    const auto& A = t.acts;
    const int F = A.num_faces;
    const int L = A.num_layers();
    layer_grads.resize(L);
    for (int l = 0; l < L; ++l)
        if (layer_grads[l].empty()) layer_grads[l].assign(A.layers[l].values.size(), 0.0);

    const int nconv = w.spec.num_conv();
    const int embed_layer = nconv + 1;

    // Message-passing layers, last to first.
    std::vector<double> gh = layer_grads[L - 1];
    for (int gi = static_cast<int>(w.gin.size()) - 1; gi >= 0; --gi) {
        const auto& g = w.gin[gi];
        const int din = g.hidden.in, dh = g.hidden.out, dout = g.output.out;
        std::vector<double> dsum(std::size_t(F) * din, 0.0);
        std::vector<double> dop(dout), dhid(dh);
        for (int f = 0; f < F; ++f) {
            const double* op = t.gin_out_pre[gi].data() + std::size_t(f) * dout;
            for (int c = 0; c < dout; ++c) dop[c] = op[c] > 0 ? gh[std::size_t(f) * dout + c] : 0.0;
            std::fill(dhid.begin(), dhid.end(), 0.0);
            detail::dense_backward(g.output, dop.data(), dhid.data());
            const double* hp = t.gin_hidden_pre[gi].data() + std::size_t(f) * dh;
            for (int c = 0; c < dh; ++c)
                if (!(hp[c] > 0)) dhid[c] = 0.0;
            detail::dense_backward(g.hidden, dhid.data(), dsum.data() + std::size_t(f) * din);
        }
        std::vector<double> dh_in(std::size_t(F) * din, 0.0);
        for (int f = 0; f < F; ++f) {
            for (int c = 0; c < din; ++c) dh_in[std::size_t(f) * din + c] += (1.0 + w.spec.gin_epsilon) * dsum[std::size_t(f) * din + c];
            for (int nb : t.neighbours[f])
                for (int c = 0; c < din; ++c) dh_in[std::size_t(nb) * din + c] += dsum[std::size_t(f) * din + c];
        }
        const auto& extra = layer_grads[embed_layer + gi];
        for (std::size_t i = 0; i < dh_in.size(); ++i) dh_in[i] += extra[i];
        gh = std::move(dh_in);
    }
    if (w.gin.empty()) gh = layer_grads[embed_layer];

    // Projection and masked pooling.
    const int cw = w.embed.in, ew = w.embed.out;
    std::vector<double> dA = layer_grads[nconv];
    std::vector<double> dpre(ew), dpool(cw);
    for (int f = 0; f < F; ++f) {
        for (int c = 0; c < ew; ++c)
            dpre[c] = t.embed_pre[std::size_t(f) * ew + c] > 0 ? gh[std::size_t(f) * ew + c] : 0.0;
        std::fill(dpool.begin(), dpool.end(), 0.0);
        detail::dense_backward(w.embed, dpre.data(), dpool.data());
        const double inv = 1.0 / t.visible_per_face[f];
        for (int k = 0; k < kSamplesPerFace; ++k) {
            const int r = f * kSamplesPerFace + k;
            if (!A.mask[r]) continue;
            for (int c = 0; c < cw; ++c) dA[std::size_t(r) * cw + c] += dpool[c] * inv;
        }
    }

    // Convolutions, last to first.
    for (int li = nconv - 1; li >= 0; --li) {
        const auto& cwts = w.conv[li];
        const auto& pre = t.conv_pre[li];
        std::vector<double> dz(pre.size());
        for (std::size_t i = 0; i < pre.size(); ++i) dz[i] = pre[i] > 0 ? dA[i] : 0.0;
        std::vector<double> din(std::size_t(F) * kSamplesPerFace * cwts.in, 0.0);
        for (int f = 0; f < F; ++f)
            detail::conv_face_backward(dz.data() + std::size_t(f) * kSamplesPerFace * cwts.out, cwts,
                                       din.data() + std::size_t(f) * kSamplesPerFace * cwts.in);
        if (li > 0) {
            const auto& extra = layer_grads[li];
            for (std::size_t i = 0; i < din.size(); ++i) din[i] += extra[i];
        }
        dA = std::move(din);
    }
    if (nconv == 0) dA.assign(std::size_t(F) * kFaceFloats, 0.0);

    // dA is now d(input), F*100 x 7; add the feature layer's own gradient.
    const auto& g0 = layer_grads[0];
    for (int r = 0; r < F * kSamplesPerFace; ++r)
        for (int c = 0; c < kFeatureChannels; ++c) dA[std::size_t(r) * kChannels + c] += g0[std::size_t(r) * kFeatureChannels + c];
    return dA;
}

}  // namespace uvstyle
