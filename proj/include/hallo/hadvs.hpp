#pragma once

#include "hallo/attention.hpp"
#include "hallo/maskgen.hpp"

namespace hallo {

enum class FusionMode { direct_addition, self_attention, zero_convolution };

inline const char* fusion_mode_name(FusionMode m) {
    switch (m) {
        case FusionMode::direct_addition: return "direct_addition";
        case FusionMode::self_attention: return "self_attention";
        case FusionMode::zero_convolution: return "zero_convolution";
    }
    return "?";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
    if (s == "direct_addition") return FusionMode::direct_addition;
    if (s == "self_attention") return FusionMode::self_attention;
    if (s == "zero_convolution") return FusionMode::zero_convolution;
    fail("unknown fusion mode '" + s + "'");
}

struct RegionWeights {
    double lip = 1.0;
    double exp = 1.0;
    double pose = 1.0;

    void validate() const {
        require(std::isfinite(lip) && std::isfinite(exp) && std::isfinite(pose) && lip >= 0.0 &&
                    exp >= 0.0 && pose >= 0.0,
                "region weights must be finite and non-negative");
    }
};

// Per-block configuration: audio cross-attention projections plus exactly
// one fusion parameter set, selected by `fusion`.
struct HadvsConfig {
    FusionMode fusion = FusionMode::zero_convolution;
    RegionWeights region_weights;
    AttentionParams attn;  // audio cross-attention
    // zero_convolution / direct-addition path: one conv per region
    Conv1x1Params conv_pose, conv_exp, conv_lip;
    // self_attention fusion path
    AttentionParams fusion_attn;

    void validate() const {
        region_weights.validate();
        attn.validate();
        if (fusion == FusionMode::zero_convolution) {
            require(conv_pose.weight.defined() && conv_exp.weight.defined() &&
                        conv_lip.weight.defined(),
                    "hadvs: zero_convolution fusion needs three Conv1x1 parameter sets");
        }
        if (fusion == FusionMode::self_attention)
            require(fusion_attn.w_q.defined(), "hadvs: self_attention fusion needs AttentionParams");
    }

    static HadvsConfig init(std::size_t d_e, std::size_t d_z, std::size_t d_a, Rng& rng,
                            FusionMode mode = FusionMode::zero_convolution) {
        HadvsConfig cfg;
        cfg.fusion = mode;
        cfg.attn = AttentionParams::init(d_e, d_z, d_a, rng);
        if (mode == FusionMode::zero_convolution) {
            cfg.conv_pose = Conv1x1Params::zeros(d_e, d_e);
            cfg.conv_exp = Conv1x1Params::zeros(d_e, d_e);
            cfg.conv_lip = Conv1x1Params::zeros(d_e, d_e);
        } else if (mode == FusionMode::self_attention) {
            cfg.fusion_attn = AttentionParams::init(d_e, d_e, d_e, rng, 0.2);
        }
        return cfg;
    }
};

struct HadvsOutputs {
    Tensor o;      // [N_q, D_e] full audio attention output
    Tensor b;      // pose-masked
    Tensor f;      // expression-masked
    Tensor l;      // lip-masked
    Tensor fused;  // [N_q, D_e]
};

// o = CrossAttn(z, c_audio): spatial sites are queries, audio tokens keys/values.
inline Tensor audio_cross_attention(const Tensor& z, const Tensor& c_audio,
                                    const AttentionParams& p) {
    return cross_attention(z, c_audio, p);
}

// b = o o M_pose, f = o o M_exp, l = o o M_lip, masks broadcast over features.
inline void split_by_region(const Tensor& o, const RegionMasks& masks, Tensor& b, Tensor& f,
                            Tensor& l) {
    std::size_t cells = masks.m_pose.size();
    require(o.rank() == 2 && o.extent(0) == cells,
            "split_by_region: query axis " + std::to_string(o.extent(0)) +
                " does not match mask cell count " + std::to_string(cells));
    Tensor pose = reshape(masks.m_pose, {cells});
    Tensor expm = reshape(masks.m_exp, {cells});
    Tensor lip = reshape(masks.m_lip, {cells});
    b = hadamard(o, pose);
    f = hadamard(o, expm);
    l = hadamard(o, lip);
}

namespace detail_hadvs {

// [N_q, D] rows over a grid -> [D, H, W] for the 1x1 convolution path
inline Tensor rows_to_chw(const Tensor& x, std::size_t h, std::size_t w) {
    return reshape(transpose(x), {x.extent(1), h, w});
}

inline Tensor chw_to_rows(const Tensor& x) {
    return transpose(reshape(x, {x.extent(0), x.extent(1) * x.extent(2)}));
}

}  // namespace detail_hadvs

// Weighted fusion of the regional splits. The grid shape (h, w) is needed by
// the convolution path; rows are laid out row-major over the grid.
inline Tensor fuse(const Tensor& b, const Tensor& f, const Tensor& l, const HadvsConfig& cfg,
                   std::size_t h, std::size_t w) {
    cfg.validate();
    require(b.shape() == f.shape() && f.shape() == l.shape(),
            "fuse: regional inputs disagree: " + shape_str(b.shape()) + ", " +
                shape_str(f.shape()) + ", " + shape_str(l.shape()));
    require(b.rank() == 2 && b.extent(0) == h * w,
            "fuse: rows " + std::to_string(b.extent(0)) + " do not cover grid " +
                std::to_string(h) + "x" + std::to_string(w));
    const RegionWeights& rw = cfg.region_weights;
    switch (cfg.fusion) {
        case FusionMode::direct_addition:
            return add(add(scale(b, rw.pose), scale(f, rw.exp)), scale(l, rw.lip));
        case FusionMode::zero_convolution: {
            using detail_hadvs::chw_to_rows;
            using detail_hadvs::rows_to_chw;
            Tensor cb = chw_to_rows(conv1x1_forward(cfg.conv_pose, rows_to_chw(b, h, w)));
            Tensor cf = chw_to_rows(conv1x1_forward(cfg.conv_exp, rows_to_chw(f, h, w)));
            Tensor cl = chw_to_rows(conv1x1_forward(cfg.conv_lip, rows_to_chw(l, h, w)));
            return add(add(scale(cb, rw.pose), scale(cf, rw.exp)), scale(cl, rw.lip));
        }
        case FusionMode::self_attention: {
            // Stack the three regional tensors as 3*N_q tokens, attend, then
            // re-sum the regional slices with weights.
            std::size_t n = b.extent(0);
            Tensor stacked = concat_rows({b, f, l});
            Tensor attended = self_attention(stacked, cfg.fusion_attn);
            Tensor ab = slice_rows(attended, 0, n);
            Tensor af = slice_rows(attended, n, 2 * n);
            Tensor al = slice_rows(attended, 2 * n, 3 * n);
            return add(add(scale(ab, rw.pose), scale(af, rw.exp)), scale(al, rw.lip));
        }
    }
    fail("fuse: unknown fusion mode");
}

inline HadvsOutputs hadvs_forward(const Tensor& z, const Tensor& c_audio, const RegionMasks& masks,
                                  const HadvsConfig& cfg) {
    HadvsOutputs out;
    out.o = audio_cross_attention(z, c_audio, cfg.attn);
    split_by_region(out.o, masks, out.b, out.f, out.l);
    out.fused = fuse(out.b, out.f, out.l, cfg, masks.m_pose.extent(0), masks.m_pose.extent(1));
    return out;
}

}  // namespace hallo
