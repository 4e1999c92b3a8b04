#pragma once

#include "hallo/conv.hpp"

namespace hallo {

struct LatentSpec {
    std::size_t h_z = 16, w_z = 16, d_z = 4;
    std::size_t h_i = 64, w_i = 64;

    void validate() const {
        require(h_z > 0 && w_z > 0 && d_z > 0 && h_i > 0 && w_i > 0,
                "latent spec: extents must be positive");
        require(h_i % h_z == 0 && w_i % w_z == 0,
                "latent spec: image size must be an integer multiple of the latent size");
    }
    std::size_t factor() const {
        validate();
        std::size_t f = h_i / h_z;
        require(w_i / w_z == f, "latent spec: anisotropic downsampling not supported");
        require((f & (f - 1)) == 0, "latent spec: downsampling factor must be a power of two");
        return f;
    }
};

// Per-clip conditioning. Dropped conditions are swapped for learned null
// embeddings by the consumer, never ad-hoc zeros.
struct ConditionBundle {
    Tensor c_exp;    // [D_f]
    Tensor c_audio;  // [S, D_a]
    bool drop_face = false;
    bool drop_audio = false;
    bool drop_motion = false;
};

// ---- toy VAE ----

struct VaeParams {
    std::vector<ConvParams> enc_down;  // stride-2 stages
    ConvParams enc_out;
    ConvParams dec_in;
    std::vector<ConvParams> dec_up;  // after each nearest-2x upsample
    ConvParams dec_out;

    static VaeParams init(const LatentSpec& spec, Rng& rng) {
        VaeParams p;
        std::size_t f = spec.factor();
        std::size_t stages = 0;
        while ((std::size_t(1) << stages) < f) ++stages;
        std::size_t ch = 3;
        std::vector<std::size_t> chans;
        for (std::size_t i = 0; i < stages; ++i) {
            std::size_t next = std::min<std::size_t>(8 << i, 32);
            p.enc_down.push_back(ConvParams::init(next, ch, rng));
            chans.push_back(next);
            ch = next;
        }
        p.enc_out = ConvParams::init(spec.d_z, ch, rng);
        p.dec_in = ConvParams::init(ch, spec.d_z, rng);
        for (std::size_t i = stages; i-- > 0;) {
            std::size_t next = i == 0 ? 8 : chans[i - 1];
            p.dec_up.push_back(ConvParams::init(next, ch, rng));
            ch = next;
        }
        p.dec_out = ConvParams::init(3, ch, rng);
        // center the output range
        for (double& v : p.dec_out.bias.mutable_data()) v = 0.5;
        return p;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        auto push = [&out](const ConvParams& c) {
            out.push_back(c.weight);
            out.push_back(c.bias);
        };
        for (const auto& c : enc_down) push(c);
        push(enc_out);
        push(dec_in);
        for (const auto& c : dec_up) push(c);
        push(dec_out);
        return out;
    }
};

inline Tensor vae_encode(const VaeParams& p, const LatentSpec& spec, const Tensor& image) {
    require(image.rank() == 3 && image.extent(0) == 3 && image.extent(1) == spec.h_i &&
                image.extent(2) == spec.w_i,
            "vae_encode: expected [3," + std::to_string(spec.h_i) + "," +
                std::to_string(spec.w_i) + "] image, got " + shape_str(image.shape()));
    Tensor h = image;
    for (const ConvParams& c : p.enc_down) h = relu(conv3x3_forward(c, h, 2));
    return conv3x3_forward(p.enc_out, h, 1);
}

inline Tensor vae_decode(const VaeParams& p, const LatentSpec& spec, const Tensor& latent) {
    require(latent.rank() == 3 && latent.extent(0) == spec.d_z && latent.extent(1) == spec.h_z &&
                latent.extent(2) == spec.w_z,
            "vae_decode: expected [" + std::to_string(spec.d_z) + "," + std::to_string(spec.h_z) +
                "," + std::to_string(spec.w_z) + "] latent, got " + shape_str(latent.shape()));
    Tensor h = relu(conv3x3_forward(p.dec_in, latent, 1));
    for (const ConvParams& c : p.dec_up) h = relu(conv3x3_forward(c, upsample_nearest2(h), 1));
    return clamp01(conv3x3_forward(p.dec_out, h, 1));
}

// ---- face identity encoder ----

struct FaceEncoderParams {
    std::vector<ConvParams> down;  // stride-2 stages, image -> 8x8
    LinearParams head;             // channel means -> D_f
    std::size_t d_f = 16;

    static FaceEncoderParams init(const LatentSpec& spec, Rng& rng, std::size_t d_f = 16) {
        FaceEncoderParams p;
        p.d_f = d_f;
        std::size_t ch = 3;
        std::size_t size = spec.h_i;
        while (size > 8) {
            std::size_t next = std::min<std::size_t>(ch * 2 + 2, 16);
            p.down.push_back(ConvParams::init(next, ch, rng));
            ch = next;
            size /= 2;
        }
        p.head = LinearParams::init(d_f, ch, rng);
        return p;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (const auto& c : down) {
            out.push_back(c.weight);
            out.push_back(c.bias);
        }
        out.push_back(head.weight);
        if (head.bias) out.push_back(*head.bias);
        return out;
    }
};

inline Tensor face_encode(const FaceEncoderParams& p, const LatentSpec& spec,
                          const Tensor& image) {
    require(image.rank() == 3 && image.extent(0) == 3 && image.extent(1) == spec.h_i &&
                image.extent(2) == spec.w_i,
            "face_encode: expected [3," + std::to_string(spec.h_i) + "," +
                std::to_string(spec.w_i) + "] image, got " + shape_str(image.shape()));
    Tensor h = image;
    for (const ConvParams& c : p.down) h = relu(conv3x3_forward(c, h, 2));
    return l2_normalize(linear_forward(p.head, spatial_mean(h)));
}

// ---- audio feature projection ----

// Three stacked linear layers with ReLU between, applied per frame.
struct AudioProjection {
    LinearParams l1, l2, l3;

    static AudioProjection init(std::size_t in_dim, std::size_t d_a, Rng& rng) {
        AudioProjection p;
        std::size_t mid = (in_dim + d_a) / 2;
        p.l1 = LinearParams::init(mid, in_dim, rng);
        p.l2 = LinearParams::init(mid, mid, rng);
        p.l3 = LinearParams::init(d_a, mid, rng);
        return p;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (const LinearParams* l : {&l1, &l2, &l3}) {
            out.push_back(l->weight);
            if (l->bias) out.push_back(*l->bias);
        }
        return out;
    }
};

inline Tensor audio_project(const AudioProjection& p, const Tensor& raw) {
    require(raw.rank() == 2, "audio_project: expected [S, features], got " +
                                 shape_str(raw.shape()));
    require(raw.extent(1) == p.l1.weight.extent(1),
            "audio_project: feature width " + std::to_string(raw.extent(1)) +
                " does not match projection input " + std::to_string(p.l1.weight.extent(1)));
    Tensor h = relu(linear_forward(p.l1, raw));
    h = relu(linear_forward(p.l2, h));
    return linear_forward(p.l3, h);
}

// Selects the S per-frame rows starting at clip_start_frame from a 5-second
// context window centered on the clip. Rows outside the timeline or outside
// the window come back zero-padded.
inline Tensor audio_segment(const Tensor& features, std::int64_t clip_start_frame, std::size_t s,
                            double fps) {
    require(features.rank() == 2, "audio_segment: expected [L, features]");
    require(clip_start_frame >= 0, "audio_segment: negative start frame");
    require(s >= 1, "audio_segment: frame count must be >= 1");
    require(fps > 0.0, "audio_segment: fps must be positive");
    std::int64_t l = std::int64_t(features.extent(0));
    std::size_t width = features.extent(1);
    std::int64_t window = std::llround(5.0 * fps);
    // center the window on the clip span
    std::int64_t wstart = clip_start_frame + std::int64_t(s) / 2 - window / 2;
    Tensor out = Tensor::zeros({s, width});
    for (std::size_t i = 0; i < s; ++i) {
        std::int64_t r = clip_start_frame + std::int64_t(i);
        if (r < 0 || r >= l) continue;
        if (r < wstart || r >= wstart + window) continue;
        for (std::size_t j = 0; j < width; ++j)
            out.mutable_data()[i * width + j] = features[std::size_t(r) * width + j];
    }
    return out;
}

}  // namespace hallo
