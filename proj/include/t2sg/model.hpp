#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "t2sg/errors.hpp"
#include "t2sg/linalg.hpp"
#include "t2sg/rng.hpp"

namespace t2sg {

struct ModelConfig {
    int dim = 300;        // node/edge feature size
    int num_blocks = 1;   // self+cross attention modules, N
    int mlp_hidden = 256;
    uint64_t seed = 1;

    void check() const {
        if (dim <= 0 || num_blocks < 1 || mlp_hidden <= 0) {
            throw InvalidArgument("ModelConfig requires dim > 0, num_blocks >= 1, mlp_hidden > 0");
        }
    }
};

// Edge features enter keys and values through We; We carries no bias so the
// implicit self-edge (zero edge feature) contributes nothing through it.
struct SelfAttentionParams {
    Mat Wq, bq, Wk, bk, Wv, bv, We;
};

struct CrossAttentionParams {
    Mat Wq, bq, Wk, bk, Wv, bv;
};

struct AttentionBlockParams {
    SelfAttentionParams self_attn;
    CrossAttentionParams cross_attn;
};

// 2*dim -> hidden -> hidden -> 1, ReLU inside, sigmoid on the output.
struct MlpHeadParams {
    Mat W1, b1, W2, b2, W3, b3;
};

struct JointModel {
    ModelConfig config;
    std::vector<AttentionBlockParams> blocks;
    MlpHeadParams head;

    // Visits every parameter tensor in declaration order; the checkpoint
    // layout and the optimizer state both rely on this order.
    template <typename F>
    void for_each_tensor(F&& f) {
        for (size_t b = 0; b < blocks.size(); ++b) {
            auto tag = [&](const char* name) { return "block" + std::to_string(b) + "." + name; };
            auto& s = blocks[b].self_attn;
            f(tag("self.Wq"), s.Wq); f(tag("self.bq"), s.bq);
            f(tag("self.Wk"), s.Wk); f(tag("self.bk"), s.bk);
            f(tag("self.Wv"), s.Wv); f(tag("self.bv"), s.bv);
            f(tag("self.We"), s.We);
            auto& c = blocks[b].cross_attn;
            f(tag("cross.Wq"), c.Wq); f(tag("cross.bq"), c.bq);
            f(tag("cross.Wk"), c.Wk); f(tag("cross.bk"), c.bk);
            f(tag("cross.Wv"), c.Wv); f(tag("cross.bv"), c.bv);
        }
        f(std::string("head.W1"), head.W1); f(std::string("head.b1"), head.b1);
        f(std::string("head.W2"), head.W2); f(std::string("head.b2"), head.b2);
        f(std::string("head.W3"), head.W3); f(std::string("head.b3"), head.b3);
    }

    template <typename F>
    void for_each_tensor(F&& f) const {
        const_cast<JointModel*>(this)->for_each_tensor(
            [&](const std::string& name, Mat& t) { f(name, const_cast<const Mat&>(t)); });
    }

    JointModel zeros_like() const {
        JointModel z = shaped(config);
        return z;
    }

    size_t parameter_count() const {
        size_t n = 0;
        for_each_tensor([&](const std::string&, const Mat& t) { n += t.v.size(); });
        return n;
    }

    bool finite() const {
        bool ok = true;
        for_each_tensor([&](const std::string&, const Mat& t) {
            for (double x : t.v) {
                if (!std::isfinite(x)) ok = false;
            }
        });
        return ok;
    }

    // All tensors allocated at the right shapes, zero-filled.
    static JointModel shaped(const ModelConfig& cfg) {
        cfg.check();
        JointModel m;
        m.config = cfg;
        const int d = cfg.dim;
        const int h = cfg.mlp_hidden;
        m.blocks.resize(size_t(cfg.num_blocks));
        for (auto& b : m.blocks) {
            b.self_attn = {Mat(d, d), Mat(d, 1), Mat(d, d), Mat(d, 1),
                           Mat(d, d), Mat(d, 1), Mat(d, d)};
            b.cross_attn = {Mat(d, d), Mat(d, 1), Mat(d, d), Mat(d, 1), Mat(d, d), Mat(d, 1)};
        }
        m.head = {Mat(h, 2 * d), Mat(h, 1), Mat(h, h), Mat(h, 1), Mat(1, h), Mat(1, 1)};
        return m;
    }

    // Weights uniform in (-1/sqrt(dim), 1/sqrt(dim)) from the config seed,
    // biases zero; with the residual connections the fresh model stays near
    // the identity map.
    static JointModel init(const ModelConfig& cfg) {
        JointModel m = shaped(cfg);
        Rng rng(cfg.seed);
        const double bound = 1.0 / std::sqrt(double(cfg.dim));
        m.for_each_tensor([&](const std::string&, Mat& t) {
            if (t.cols == 1) return;  // bias
            for (auto& x : t.v) x = rng.uniform(-bound, bound);
        });
        return m;
    }
};

namespace detail {

inline void write_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), std::streamsize(n));
}

inline void write_u32le(std::ostream& out, uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
    write_bytes(out, b, 4);
}

inline void write_u64le(std::ostream& out, uint64_t x) {
    write_u32le(out, uint32_t(x));
    write_u32le(out, uint32_t(x >> 32));
}

inline void write_f32le(std::ostream& out, float f) {
    uint32_t x;
    std::memcpy(&x, &f, 4);
    write_u32le(out, x);
}

inline bool read_bytes(std::istream& in, void* p, size_t n) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    return size_t(in.gcount()) == n;
}

inline uint32_t read_u32le(std::istream& in) {
    unsigned char b[4];
    if (!read_bytes(in, b, 4)) throw MalformedCheckpoint("unexpected end of file");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

inline uint64_t read_u64le(std::istream& in) {
    uint64_t lo = read_u32le(in);
    uint64_t hi = read_u32le(in);
    return lo | (hi << 32);
}

inline float read_f32le(std::istream& in) {
    uint32_t x = read_u32le(in);
    float f;
    std::memcpy(&f, &x, 4);
    return f;
}

}  // namespace detail

inline constexpr char kModelMagic[8] = {'T', '2', 'S', 'G', 'M', 'D', 'L', '1'};

// Binary checkpoint: magic, config fields, then every tensor in declaration
// order as little-endian 32-bit floats.
inline void save_model(const JointModel& model, std::ostream& out) {
    detail::write_bytes(out, kModelMagic, 8);
    detail::write_u32le(out, uint32_t(model.config.dim));
    detail::write_u32le(out, uint32_t(model.config.num_blocks));
    detail::write_u32le(out, uint32_t(model.config.mlp_hidden));
    detail::write_u64le(out, model.config.seed);
    model.for_each_tensor([&](const std::string&, const Mat& t) {
        for (double x : t.v) detail::write_f32le(out, float(x));
    });
}

inline void save_model(const JointModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model file: " + path);
    save_model(model, out);
    if (!out) throw IoError("short write to model file: " + path);
}

inline JointModel load_model(std::istream& in) {
    char magic[8];
    if (!detail::read_bytes(in, magic, 8) || std::memcmp(magic, kModelMagic, 8) != 0) {
        throw MalformedCheckpoint("bad model magic, not a model checkpoint");
    }
    ModelConfig cfg;
    cfg.dim = int(detail::read_u32le(in));
    cfg.num_blocks = int(detail::read_u32le(in));
    cfg.mlp_hidden = int(detail::read_u32le(in));
    cfg.seed = detail::read_u64le(in);
    if (cfg.dim <= 0 || cfg.dim > (1 << 20) || cfg.num_blocks < 1 || cfg.num_blocks > 1024 ||
        cfg.mlp_hidden <= 0 || cfg.mlp_hidden > (1 << 20)) {
        throw MalformedCheckpoint("implausible model shape in header");
    }
    JointModel m = JointModel::shaped(cfg);
    m.for_each_tensor([&](const std::string& name, Mat& t) {
        for (auto& x : t.v) x = double(detail::read_f32le(in));
        (void)name;
    });
    in.peek();
    if (!in.eof()) throw MalformedCheckpoint("trailing bytes after parameter tensors");
    return m;
}

inline JointModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file: " + path);
    return load_model(in);
}

}  // namespace t2sg
