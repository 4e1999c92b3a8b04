#pragma once

#include <filesystem>
#include <fstream>

#include "hallo/io.hpp"
#include "hallo/maskgen.hpp"

namespace hallo {

// Procedural face-like corpus: per identity an ellipse head on a flat
// background, eyes that blink on a slow cycle, and a mouth rectangle whose
// opening tracks the synthetic audio envelope. A head bob runs on an
// independent frequency so lip motion and global motion are decorrelated.
struct SynthConfig {
    std::size_t ids = 4;
    std::size_t clips = 4;
    std::size_t frames = 14;
    std::size_t image = 64;
    std::size_t raw_width = 96;  // 12 * D_raw
    std::uint64_t seed = 1;
};

struct SynthIdentity {
    double head_r, head_g, head_b;
    double bg_r, bg_g, bg_b;
    double cx, cy;         // head center, pixels
    double ax, ay;         // head semi-axes, pixels
    double mouth_w;        // half-width, pixels
    double bob_amp;        // vertical bob amplitude, pixels
    double bob_freq, env_freq, blink_freq;
    double phase;
};

inline SynthIdentity synth_identity(const SynthConfig& cfg, std::size_t id) {
    Rng rng(cfg.seed ^ (0x9d1cull * (id + 1)));
    SynthIdentity p;
    p.head_r = 0.55 + 0.4 * rng.uniform();
    p.head_g = 0.35 + 0.4 * rng.uniform();
    p.head_b = 0.25 + 0.4 * rng.uniform();
    p.bg_r = 0.05 + 0.2 * rng.uniform();
    p.bg_g = 0.05 + 0.2 * rng.uniform();
    p.bg_b = 0.15 + 0.3 * rng.uniform();
    double s = double(cfg.image);
    p.cx = s * (0.46 + 0.08 * rng.uniform());
    p.cy = s * (0.42 + 0.08 * rng.uniform());
    p.ax = s * (0.26 + 0.06 * rng.uniform());
    p.ay = s * (0.32 + 0.06 * rng.uniform());
    p.mouth_w = s * (0.10 + 0.04 * rng.uniform());
    p.bob_amp = s * 0.04;
    p.bob_freq = 0.23 + 0.1 * rng.uniform();
    p.env_freq = 0.9 + 0.5 * rng.uniform();
    p.blink_freq = 0.07 + 0.04 * rng.uniform();
    p.phase = 6.283185307179586 * rng.uniform();
    return p;
}

// envelope in [0,1] driving the mouth opening; global frame index t
inline double synth_envelope(const SynthIdentity& p, std::size_t t) {
    // syllable gate (speech bursts separated by silence) times a fast
    // oscillation, so audio energy and mouth motion rise and fall together
    double gate = std::sin(0.45 * double(t) + p.phase) > 0.0 ? 1.0 : 0.0;
    double osc = 0.55 + 0.45 * std::sin(p.env_freq * double(t) + 0.3 * p.phase);
    return gate * osc;
}

inline double synth_bob(const SynthIdentity& p, std::size_t t) {
    return p.bob_amp * std::sin(p.bob_freq * double(t) + 2.0 * p.phase);
}

// eye-open fraction in [0.15, 1]
inline double synth_blink(const SynthIdentity& p, std::size_t t) {
    double c = std::sin(p.blink_freq * double(t) + 0.5 * p.phase);
    return 0.15 + 0.85 * std::min(1.0, 2.5 * std::abs(c));
}

inline Tensor synth_frame(const SynthConfig& cfg, const SynthIdentity& p, std::size_t t) {
    std::size_t s = cfg.image;
    Tensor img = Tensor::zeros({3, s, s});
    auto& d = img.mutable_data();
    double bob = synth_bob(p, t);
    double env = synth_envelope(p, t);
    double blink = synth_blink(p, t);
    double cy = p.cy + bob;

    double mouth_cy = cy + 0.55 * p.ay;
    double mouth_h = 1.0 + 0.10 * double(s) * env;  // half-height
    double eye_dx = 0.38 * p.ax, eye_cy = cy - 0.25 * p.ay;
    double eye_r = 0.055 * double(s), eye_h = eye_r * blink;

    for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
            double fx = double(x) + 0.5, fy = double(y) + 0.5;
            double r = p.bg_r, g = p.bg_g, b = p.bg_b;
            double hx = (fx - p.cx) / p.ax, hy = (fy - cy) / p.ay;
            if (hx * hx + hy * hy <= 1.0) {
                r = p.head_r;
                g = p.head_g;
                b = p.head_b;
                for (double sgn : {-1.0, 1.0}) {
                    double ex = (fx - (p.cx + sgn * eye_dx)) / eye_r;
                    double ey = (fy - eye_cy) / eye_h;
                    if (ex * ex + ey * ey <= 1.0) { r = g = b = 0.05; }
                }
                if (std::abs(fx - p.cx) <= p.mouth_w && std::abs(fy - mouth_cy) <= mouth_h) {
                    r = 0.45;
                    g = 0.08;
                    b = 0.10;
                }
            }
            std::size_t i = y * s + x;
            d[0 * s * s + i] = r;
            d[1 * s * s + i] = g;
            d[2 * s * s + i] = b;
        }
    return img;
}

// landmarks generous enough to cover the full motion range (bob + max opening)
inline LandmarkSet synth_landmarks(const SynthConfig& cfg, const SynthIdentity& p) {
    LandmarkSet lm;
    lm.image_h = lm.image_w = cfg.image;
    double s = double(cfg.image);
    double mouth_cy = p.cy + 0.55 * p.ay;
    double max_h = 1.0 + 0.10 * s;
    double pad = p.bob_amp + 1.0;
    auto clampc = [&](double v) { return std::min(s - 1e-6, std::max(0.0, v)); };
    lm.lip_points = {{clampc(p.cx - p.mouth_w - 1.0), clampc(mouth_cy - max_h - pad)},
                     {clampc(p.cx + p.mouth_w + 1.0), clampc(mouth_cy + max_h + pad)}};
    // expression box: eyes through mouth
    double eye_cy = p.cy - 0.25 * p.ay;
    double eye_r = 0.055 * s;
    lm.exp_points = {{clampc(p.cx - 0.38 * p.ax - eye_r - 1.0), clampc(eye_cy - eye_r - pad)},
                     {clampc(p.cx + 0.38 * p.ax + eye_r + 1.0), clampc(mouth_cy + max_h + pad)}};
    return lm;
}

// raw audio features [L, raw_width] with per-frame energy tracking the envelope
inline Tensor synth_audio(const SynthConfig& cfg, const SynthIdentity& p, std::size_t frames_total) {
    Tensor raw = Tensor::zeros({frames_total, cfg.raw_width});
    auto& d = raw.mutable_data();
    for (std::size_t t = 0; t < frames_total; ++t) {
        double env = synth_envelope(p, t);
        for (std::size_t j = 0; j < cfg.raw_width; ++j) {
            double carrier = std::sin(0.13 * double(j + 1) * double(t) + 0.41 * double(j));
            d[t * cfg.raw_width + j] = (0.1 + env) * carrier;
        }
    }
    return raw;
}

inline Tensor synth_envelope_track(const SynthConfig& cfg, const SynthIdentity& p,
                                   std::size_t frames_total) {
    (void)cfg;
    Tensor e = Tensor::zeros({frames_total});
    for (std::size_t t = 0; t < frames_total; ++t) e.mutable_data()[t] = synth_envelope(p, t);
    return e;
}

// On-disk layout, per identity directory idN/:
//   ref.ppm, landmarks.txt, audio.htns [L,96], envelope.htns [L],
//   clipNNN/frameNNN.ppm with global frame index clip*frames + frame.
inline void write_corpus(const std::filesystem::path& out, const SynthConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(out);
    for (std::size_t id = 0; id < cfg.ids; ++id) {
        SynthIdentity p = synth_identity(cfg, id);
        fs::path dir = out / ("id" + std::to_string(id));
        fs::create_directories(dir);
        std::size_t total = cfg.clips * cfg.frames;
        save_ppm(dir / "ref.ppm", synth_frame(cfg, p, 0));
        save_landmarks(dir / "landmarks.txt", synth_landmarks(cfg, p));
        save_htns(dir / "audio.htns", synth_audio(cfg, p, total));
        save_htns(dir / "envelope.htns", synth_envelope_track(cfg, p, total));
        for (std::size_t c = 0; c < cfg.clips; ++c) {
            char cb[16];
            std::snprintf(cb, sizeof cb, "clip%03zu", c);
            fs::path cdir = dir / cb;
            fs::create_directories(cdir);
            for (std::size_t f = 0; f < cfg.frames; ++f) {
                char fb[16];
                std::snprintf(fb, sizeof fb, "frame%03zu.ppm", f);
                save_ppm(cdir / fb, synth_frame(cfg, p, c * cfg.frames + f));
            }
        }
    }
}

}  // namespace hallo
