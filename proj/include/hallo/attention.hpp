#pragma once

#include "hallo/tensor.hpp"

namespace hallo {

// Projections for Attention(Q,K,V) with queries as rows. Q = W_Q z,
// K = W_K c, V = W_V c; the output feature width D_e is the shared row
// count of the three matrices. No output projection.
struct AttentionParams {
    Tensor w_q;  // [D_e, D_z]
    Tensor w_k;  // [D_e, D_c]
    Tensor w_v;  // [D_e, D_c]
    double scale = 0.0;  // 0 selects the default 1/sqrt(D_e per head)
    int heads = 1;

    std::size_t d_e() const { return w_q.extent(0); }
    std::size_t d_z() const { return w_q.extent(1); }
    std::size_t d_c() const { return w_k.extent(1); }

    static AttentionParams init(std::size_t d_e, std::size_t d_z, std::size_t d_c, Rng& rng,
                                double gain = 1.0, int heads = 1) {
        AttentionParams p;
        p.w_q = Tensor::randn({d_e, d_z}, rng, gain / std::sqrt(double(d_z)), true);
        p.w_k = Tensor::randn({d_e, d_c}, rng, gain / std::sqrt(double(d_c)), true);
        p.w_v = Tensor::randn({d_e, d_c}, rng, gain / std::sqrt(double(d_c)), true);
        p.heads = heads;
        return p;
    }

    void validate() const {
        require(w_q.rank() == 2 && w_k.rank() == 2 && w_v.rank() == 2,
                "attention: projection matrices must be rank-2");
        require(w_k.extent(0) == w_q.extent(0) && w_v.extent(0) == w_q.extent(0),
                "attention: W_Q/W_K/W_V row counts disagree (" +
                    std::to_string(w_q.extent(0)) + "," + std::to_string(w_k.extent(0)) + "," +
                    std::to_string(w_v.extent(0)) + ")");
        require(w_k.extent(1) == w_v.extent(1), "attention: W_K/W_V column counts disagree");
        require(heads >= 1 && w_q.extent(0) % std::size_t(heads) == 0,
                "attention: D_e must be divisible by head count");
    }
};

inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    require(a.rank() == 2 && c0 < c1 && c1 <= a.extent(1), "slice_cols: bad column range");
    std::size_t m = a.extent(0), n = a.extent(1), w = c1 - c0;
    std::vector<std::int64_t> idx(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) idx[i * w + j] = std::int64_t(i * n + c0 + j);
    return index_select_flat(a, idx, {m, w});
}

struct AttentionResult {
    Tensor out;  // [N_q, D_e]
    // per-head softmax matrices [N_q, N_k], detached from the tape
    std::vector<Tensor> weights;
};

// softmax_rows(scale * (W_Q z)(W_K c)^T) (W_V c)^T, heads concatenated
// along the feature axis.
inline AttentionResult cross_attention_full(const Tensor& z, const Tensor& c,
                                            const AttentionParams& p) {
    p.validate();
    require(z.rank() == 2,
            "cross_attention: queries must be [N_q, D_z], got " + shape_str(z.shape()));
    require(c.rank() == 2,
            "cross_attention: context must be [N_k, D_c], got " + shape_str(c.shape()));
    require(z.extent(1) == p.d_z(),
            "cross_attention: W_Q expects D_z=" + std::to_string(p.d_z()) +
                ", queries have width " + std::to_string(z.extent(1)));
    require(c.extent(1) == p.d_c(),
            "cross_attention: W_K/W_V expect D_c=" + std::to_string(p.d_c()) +
                ", context has width " + std::to_string(c.extent(1)));
    require(z.extent(0) >= 1 && c.extent(0) >= 1, "cross_attention: empty query or key set");

    Tensor q = matmul(z, transpose(p.w_q));  // [N_q, D_e]
    Tensor k = matmul(c, transpose(p.w_k));  // [N_k, D_e]
    Tensor v = matmul(c, transpose(p.w_v));  // [N_k, D_e]

    std::size_t h = std::size_t(p.heads);
    std::size_t dh = p.d_e() / h;
    double scale = p.scale != 0.0 ? p.scale : 1.0 / std::sqrt(double(dh));

    AttentionResult res;
    if (h == 1) {
        Tensor attn = softmax_rows(hallo::scale(matmul(q, transpose(k)), scale));
        res.weights.push_back(attn.detach());
        res.out = matmul(attn, v);
        return res;
    }
    std::vector<Tensor> head_outs;
    for (std::size_t i = 0; i < h; ++i) {
        Tensor qh = slice_cols(q, i * dh, (i + 1) * dh);
        Tensor kh = slice_cols(k, i * dh, (i + 1) * dh);
        Tensor vh = slice_cols(v, i * dh, (i + 1) * dh);
        Tensor attn = softmax_rows(hallo::scale(matmul(qh, transpose(kh)), scale));
        res.weights.push_back(attn.detach());
        head_outs.push_back(matmul(attn, vh));
    }
    res.out = concat_cols(head_outs);
    return res;
}

inline Tensor cross_attention(const Tensor& z, const Tensor& c, const AttentionParams& p) {
    return cross_attention_full(z, c, p).out;
}

inline Tensor self_attention(const Tensor& x, const AttentionParams& p) {
    require(p.d_z() == p.d_c(),
            "self_attention: requires D_z == D_c, got " + std::to_string(p.d_z()) + " vs " +
                std::to_string(p.d_c()));
    return cross_attention(x, x, p);
}

}  // namespace hallo
