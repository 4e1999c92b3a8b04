#pragma once

#include "hallo/conv.hpp"
#include "hallo/encoders.hpp"
#include "hallo/hadvs.hpp"

namespace hallo {

struct DenoiserConfig {
    std::size_t levels = 2;
    std::vector<std::size_t> channels = {16, 32};
    std::size_t temb_width = 32;
    std::size_t motion_frames = 2;  // k
    std::size_t d_f = 16;
    std::size_t d_a = 32;
    std::size_t max_timestep = 100;
    std::size_t audio_context = 1;  // window half-width in frames
    bool use_temporal = true;
    bool use_hadvs = true;
    FusionMode fusion = FusionMode::zero_convolution;
    RegionWeights region_weights;

    void validate() const {
        require(levels >= 1 && channels.size() == levels, "denoiser config: levels/channels disagree");
        for (std::size_t c : channels) require(c > 0, "denoiser config: channels must be positive");
        require(temb_width >= 2 && temb_width % 2 == 0, "denoiser config: even temb width required");
        region_weights.validate();
    }
};

struct DenoiserLevel {
    ConvParams res1;           // C -> C spatial block
    LinearParams temb;         // temb_width -> C, added as channel bias
    AttentionParams spatial;   // self-attn, ref tokens joined on the KV axis
    AttentionParams face;      // cross-attn against c_exp
    HadvsConfig hadvs;
    AttentionParams temporal;  // self-attn over the frame axis per site
};

struct DenoiserParams {
    DenoiserConfig cfg;
    LatentSpec spec;
    ConvParams stem;  // D_z -> C0
    std::vector<DenoiserLevel> levels;
    std::vector<ConvParams> down;  // C_l -> C_{l+1}, stride 2
    std::vector<ConvParams> up;    // C_{l+1} -> C_l after nearest-2x
    ConvParams out;                // C0 -> D_z
    Tensor null_face;              // [D_f]
    Tensor null_audio;             // [D_a]
    Tensor null_motion;            // [D_z, H_z, W_z]
    std::vector<Tensor> null_ref;  // per level, one token [1, C_l]

    static DenoiserParams init(const DenoiserConfig& cfg, const LatentSpec& spec, Rng& rng) {
        cfg.validate();
        spec.validate();
        DenoiserParams p;
        p.cfg = cfg;
        p.spec = spec;
        p.stem = ConvParams::init(cfg.channels[0], spec.d_z, rng);
        for (std::size_t l = 0; l < cfg.levels; ++l) {
            std::size_t c = cfg.channels[l];
            DenoiserLevel lev;
            lev.res1 = ConvParams::init(c, c, rng, 0.5);
            lev.temb = LinearParams::init(c, cfg.temb_width, rng, true, 0.5);
            lev.spatial = AttentionParams::init(c, c, c, rng, 0.5);
            lev.face = AttentionParams::init(c, c, cfg.d_f, rng, 0.5);
            lev.hadvs = HadvsConfig::init(c, c, cfg.d_a, rng, cfg.fusion);
            lev.hadvs.region_weights = cfg.region_weights;
            // unlike HADVS (zero-init fusion), temporal blocks start at full
            // strength and visibly perturb a stage-1 model until trained in
            lev.temporal = AttentionParams::init(c, c, c, rng, 2.0);
            p.levels.push_back(lev);
            if (l + 1 < cfg.levels) {
                p.down.push_back(ConvParams::init(cfg.channels[l + 1], c, rng));
                p.up.push_back(ConvParams::init(c, cfg.channels[l + 1], rng));
            }
            p.null_ref.push_back(Tensor::randn({1, c}, rng, 0.1, true));
        }
        p.out = ConvParams::init(spec.d_z, cfg.channels[0], rng, 0.5);
        p.null_face = Tensor::randn({cfg.d_f}, rng, 0.1, true);
        p.null_audio = Tensor::randn({cfg.d_a}, rng, 0.1, true);
        p.null_motion = Tensor::randn({spec.d_z, spec.h_z, spec.w_z}, rng, 0.1, true);
        return p;
    }
};

struct ReferenceParams {
    ConvParams stem;
    std::vector<ConvParams> convs;  // per level C -> C
    std::vector<ConvParams> down;

    static ReferenceParams init(const DenoiserConfig& cfg, const LatentSpec& spec, Rng& rng) {
        ReferenceParams p;
        p.stem = ConvParams::init(cfg.channels[0], spec.d_z, rng);
        for (std::size_t l = 0; l < cfg.levels; ++l) {
            p.convs.push_back(ConvParams::init(cfg.channels[l], cfg.channels[l], rng, 0.5));
            if (l + 1 < cfg.levels)
                p.down.push_back(ConvParams::init(cfg.channels[l + 1], cfg.channels[l], rng));
        }
        return p;
    }
};

struct ReferenceFeatures {
    std::vector<Tensor> tokens;  // per level [N_l, C_l]
};

inline ReferenceFeatures reference_forward(const ReferenceParams& p, const DenoiserConfig& cfg,
                                           const LatentSpec& spec, const Tensor& z_ref) {
    require(z_ref.rank() == 3 && z_ref.extent(0) == spec.d_z && z_ref.extent(1) == spec.h_z &&
                z_ref.extent(2) == spec.w_z,
            "reference_forward: latent shape " + shape_str(z_ref.shape()) + " does not match spec");
    ReferenceFeatures out;
    Tensor x = conv3x3_forward(p.stem, z_ref);
    for (std::size_t l = 0; l < cfg.levels; ++l) {
        x = conv3x3_forward(p.convs[l], relu(x));
        out.tokens.push_back(detail_hadvs::chw_to_rows(x));
        if (l + 1 < cfg.levels) x = conv3x3_forward(p.down[l], relu(x), 2);
    }
    return out;
}

// ---- named parameter registry (checkpoints, stage freezing) ----

using ParamMap = std::vector<std::pair<std::string, Tensor>>;

namespace detail_denoiser {

inline void reg(ParamMap& m, const std::string& name, const Tensor& t) {
    m.emplace_back(name, t);
}

inline void reg_conv(ParamMap& m, const std::string& p, const ConvParams& c) {
    reg(m, p + ".weight", c.weight);
    reg(m, p + ".bias", c.bias);
}

inline void reg_linear(ParamMap& m, const std::string& p, const LinearParams& l) {
    reg(m, p + ".weight", l.weight);
    if (l.bias) reg(m, p + ".bias", *l.bias);
}

inline void reg_attn(ParamMap& m, const std::string& p, const AttentionParams& a) {
    reg(m, p + ".w_q", a.w_q);
    reg(m, p + ".w_k", a.w_k);
    reg(m, p + ".w_v", a.w_v);
}

inline void reg_conv1(ParamMap& m, const std::string& p, const Conv1x1Params& c) {
    reg(m, p + ".weight", c.weight);
    reg(m, p + ".bias", c.bias);
}

}  // namespace detail_denoiser

inline ParamMap named_params(const DenoiserParams& d) {
    using namespace detail_denoiser;
    ParamMap m;
    reg_conv(m, "stem", d.stem);
    for (std::size_t l = 0; l < d.levels.size(); ++l) {
        std::string p = "level" + std::to_string(l);
        const DenoiserLevel& lev = d.levels[l];
        reg_conv(m, p + ".res1", lev.res1);
        reg_linear(m, p + ".temb", lev.temb);
        reg_attn(m, p + ".spatial", lev.spatial);
        reg_attn(m, p + ".face", lev.face);
        reg_attn(m, p + ".hadvs.attn", lev.hadvs.attn);
        if (lev.hadvs.fusion == FusionMode::zero_convolution) {
            reg_conv1(m, p + ".hadvs.conv_pose", lev.hadvs.conv_pose);
            reg_conv1(m, p + ".hadvs.conv_exp", lev.hadvs.conv_exp);
            reg_conv1(m, p + ".hadvs.conv_lip", lev.hadvs.conv_lip);
        }
        if (lev.hadvs.fusion == FusionMode::self_attention)
            reg_attn(m, p + ".hadvs.fusion_attn", lev.hadvs.fusion_attn);
        reg_attn(m, p + ".temporal", lev.temporal);
        reg(m, "null.ref" + std::to_string(l), d.null_ref[l]);
    }
    for (std::size_t l = 0; l + 1 < d.levels.size(); ++l) {
        reg_conv(m, "down" + std::to_string(l), d.down[l]);
        reg_conv(m, "up" + std::to_string(l), d.up[l]);
    }
    reg_conv(m, "out", d.out);
    reg(m, "null.face", d.null_face);
    reg(m, "null.audio", d.null_audio);
    reg(m, "null.motion", d.null_motion);
    return m;
}

inline ParamMap named_params(const ReferenceParams& r) {
    using namespace detail_denoiser;
    ParamMap m;
    reg_conv(m, "ref.stem", r.stem);
    for (std::size_t l = 0; l < r.convs.size(); ++l)
        reg_conv(m, "ref.conv" + std::to_string(l), r.convs[l]);
    for (std::size_t l = 0; l < r.down.size(); ++l)
        reg_conv(m, "ref.down" + std::to_string(l), r.down[l]);
    return m;
}

// Stage 2 optimizes the audio (HADVS) and temporal blocks plus their null
// embeddings; everything else belongs to stage 1 and stays frozen in stage 2.
inline bool is_stage2_param(const std::string& name) {
    return name.find(".hadvs.") != std::string::npos ||
           name.find(".temporal.") != std::string::npos || name == "null.audio" ||
           name == "null.motion";
}

// ---- forward pass ----

namespace detail_denoiser {

// sinusoidal timestep features, constant w.r.t. the tape
inline Tensor timestep_features(std::size_t t, std::size_t width) {
    Tensor f = Tensor::zeros({width});
    std::size_t half = width / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double omega = std::exp(-std::log(10000.0) * double(i) / double(half));
        f.mutable_data()[2 * i] = std::sin(double(t) * omega);
        f.mutable_data()[2 * i + 1] = std::cos(double(t) * omega);
    }
    return f;
}

// temporal self-attention at every spatial site over the frame axis;
// frames: per-frame token matrices [N, C], all the same shape
inline std::vector<Tensor> temporal_attention(const std::vector<Tensor>& frames,
                                              const AttentionParams& p) {
    std::size_t fcount = frames.size(), n = frames[0].extent(0);
    Tensor big = concat_rows(frames);  // [F*N, C], frame-major
    std::vector<Tensor> sites;
    sites.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<std::size_t> idx(fcount);
        for (std::size_t j = 0; j < fcount; ++j) idx[j] = j * n + s;
        sites.push_back(self_attention(gather_rows(big, idx), p));  // [F, C]
    }
    Tensor stacked = concat_rows(sites);  // [N*F, C], site-major
    std::vector<Tensor> out;
    out.reserve(fcount);
    for (std::size_t j = 0; j < fcount; ++j) {
        std::vector<std::size_t> idx(n);
        for (std::size_t s = 0; s < n; ++s) idx[s] = s * fcount + j;
        out.push_back(gather_rows(stacked, idx));
    }
    return out;
}

}  // namespace detail_denoiser

// z_frames: S noisy latents [D_z, H_z, W_z]; motion: 0 or k prior latents
// prepended on the temporal axis (their outputs are discarded). Block order
// per level: conv+timestep -> spatial self-attn with reference KV -> face
// cross-attn -> HADVS residual -> temporal self-attn.
inline std::vector<Tensor> denoiser_forward(const DenoiserParams& p,
                                            const std::vector<Tensor>& z_frames, std::size_t t,
                                            const ConditionBundle& cond,
                                            const ReferenceFeatures& ref, const RegionMasks& masks,
                                            const std::vector<Tensor>& motion) {
    const DenoiserConfig& cfg = p.cfg;
    cfg.validate();
    require(t < cfg.max_timestep, "denoiser_forward: timestep " + std::to_string(t) +
                                      " outside [0, " + std::to_string(cfg.max_timestep) + ")");
    std::size_t s_count = z_frames.size();
    require(s_count >= 1, "denoiser_forward: empty frame block");
    require(ref.tokens.size() == cfg.levels, "denoiser_forward: reference level count mismatch");
    std::size_t h = p.spec.h_z, w = p.spec.w_z;
    require(masks.m_pose.rank() == 2 && masks.m_pose.extent(0) == h && masks.m_pose.extent(1) == w,
            "denoiser_forward: masks are " + shape_str(masks.m_pose.shape()) + ", latent grid is [" +
                std::to_string(h) + "," + std::to_string(w) + "]");
    for (const Tensor& z : z_frames)
        require(z.rank() == 3 && z.extent(0) == p.spec.d_z && z.extent(1) == h && z.extent(2) == w,
                "denoiser_forward: latent shape " + shape_str(z.shape()) + " does not match spec");
    require(cond.c_audio.rank() == 2 && cond.c_audio.extent(0) == s_count &&
                cond.c_audio.extent(1) == cfg.d_a,
            "denoiser_forward: audio embedding must be [S, D_a]");
    require(cond.c_exp.rank() == 1 && cond.c_exp.extent(0) == cfg.d_f,
            "denoiser_forward: c_exp must be [D_f]");

    // assemble the temporal block: motion frames first
    std::size_t k = motion.size();
    std::vector<Tensor> frames;
    frames.reserve(k + s_count);
    for (const Tensor& m : motion) {
        require(m.shape() == z_frames[0].shape(), "denoiser_forward: motion latent shape mismatch");
        frames.push_back(cond.drop_motion ? p.null_motion : m);
    }
    for (const Tensor& z : z_frames) frames.push_back(z);
    std::size_t fcount = frames.size();

    // conditioning with learned nulls
    Tensor c_exp = cond.drop_face ? p.null_face : cond.c_exp;
    Tensor face_ctx = reshape(c_exp, {1, cfg.d_f});
    Tensor null_audio_row = reshape(p.null_audio, {1, cfg.d_a});
    // per-frame audio context windows (motion positions clamp to frame 0)
    std::vector<Tensor> audio_ctx(fcount);
    for (std::size_t j = 0; j < fcount; ++j) {
        if (cond.drop_audio) {
            audio_ctx[j] = null_audio_row;
            continue;
        }
        std::int64_t fi = std::int64_t(j) - std::int64_t(k);
        if (fi < 0) fi = 0;
        std::int64_t lo = std::max<std::int64_t>(0, fi - std::int64_t(cfg.audio_context));
        std::int64_t hi = std::min<std::int64_t>(std::int64_t(s_count) - 1,
                                                 fi + std::int64_t(cfg.audio_context));
        audio_ctx[j] = slice_rows(cond.c_audio, std::size_t(lo), std::size_t(hi) + 1);
    }

    // per-level masks
    std::vector<RegionMasks> level_masks;
    level_masks.push_back(masks);
    for (std::size_t l = 1; l < cfg.levels; ++l)
        level_masks.push_back(downsample_region_masks(level_masks.back(),
                                                      h >> l, w >> l));

    Tensor tfeat = detail_denoiser::timestep_features(t, cfg.temb_width);

    auto run_level = [&](std::vector<Tensor>& xs, std::size_t l, std::size_t lh, std::size_t lw) {
        const DenoiserLevel& lev = p.levels[l];
        std::size_t c = cfg.channels[l];
        Tensor tb = linear_forward(lev.temb, tfeat);  // [C]
        Tensor ref_tokens = cond.drop_face ? p.null_ref[l] : ref.tokens[l];
        std::vector<Tensor> rows(xs.size());
        for (std::size_t j = 0; j < xs.size(); ++j) {
            Tensor x = xs[j];
            x = add(x, conv3x3_forward(lev.res1, relu(add_channel_bias(x, tb))));
            Tensor r = detail_hadvs::chw_to_rows(x);  // [N, C]
            r = add(r, cross_attention(r, concat_rows({r, ref_tokens}), lev.spatial));
            r = add(r, cross_attention(r, face_ctx, lev.face));
            if (cfg.use_hadvs)
                r = add(r, hadvs_forward(r, audio_ctx[j], level_masks[l], lev.hadvs).fused);
            rows[j] = r;
        }
        if (cfg.use_temporal && rows.size() > 1) {
            std::vector<Tensor> ta = detail_denoiser::temporal_attention(rows, lev.temporal);
            for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = add(rows[j], ta[j]);
        }
        for (std::size_t j = 0; j < xs.size(); ++j)
            xs[j] = detail_hadvs::rows_to_chw(rows[j], lh, lw);
        (void)c;
    };

    // stem
    std::vector<Tensor> x0(fcount);
    for (std::size_t j = 0; j < fcount; ++j) x0[j] = conv3x3_forward(p.stem, frames[j]);

    run_level(x0, 0, h, w);

    std::vector<std::vector<Tensor>> skips = {x0};
    std::vector<Tensor> x = x0;
    for (std::size_t l = 1; l < cfg.levels; ++l) {
        std::vector<Tensor> xn(fcount);
        for (std::size_t j = 0; j < fcount; ++j)
            xn[j] = conv3x3_forward(p.down[l - 1], relu(x[j]), 2);
        run_level(xn, l, h >> l, w >> l);
        skips.push_back(xn);
        x = xn;
    }
    // decoder: walk back up adding skips
    for (std::size_t l = cfg.levels; l-- > 1;) {
        std::vector<Tensor> xu(fcount);
        for (std::size_t j = 0; j < fcount; ++j) {
            Tensor u = conv3x3_forward(p.up[l - 1], upsample_nearest2(relu(x[j])));
            xu[j] = add(skips[l - 1][j], u);
        }
        x = xu;
    }
    std::vector<Tensor> eps(s_count);
    for (std::size_t j = 0; j < s_count; ++j)
        eps[j] = conv3x3_forward(p.out, relu(x[k + j]));
    return eps;
}

}  // namespace hallo
