#pragma once

#include <chrono>
#include <map>

#include "hallo/config.hpp"
#include "hallo/metrics.hpp"
#include "hallo/synth.hpp"

namespace hallo {

// ---- corpus ----

struct CorpusIdentity {
    std::filesystem::path dir;
    Tensor ref_image;  // [3, H_I, W_I]
    LandmarkSet landmarks;
    std::vector<std::vector<std::filesystem::path>> clip_frames;
    Tensor audio;     // [L, raw_width]
    Tensor envelope;  // [L]
};

inline std::vector<CorpusIdentity> load_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    require(fs::is_directory(dir), "corpus: '" + dir.string() + "' is not a directory");
    std::vector<fs::path> id_dirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && e.path().filename().string().rfind("id", 0) == 0)
            id_dirs.push_back(e.path());
    std::sort(id_dirs.begin(), id_dirs.end());
    require(!id_dirs.empty(), "corpus: no id* directories under '" + dir.string() + "'");

    std::vector<CorpusIdentity> out;
    for (const fs::path& idp : id_dirs) {
        CorpusIdentity ci;
        ci.dir = idp;
        ci.ref_image = load_ppm(idp / "ref.ppm");
        ci.landmarks = load_landmarks(idp / "landmarks.txt");
        ci.audio = load_htns(idp / "audio.htns");
        ci.envelope = load_htns(idp / "envelope.htns");
        std::vector<fs::path> clips;
        for (const auto& e : fs::directory_iterator(idp))
            if (e.is_directory() && e.path().filename().string().rfind("clip", 0) == 0)
                clips.push_back(e.path());
        std::sort(clips.begin(), clips.end());
        require(!clips.empty(), "corpus: no clip* directories under '" + idp.string() + "'");
        for (const fs::path& cp : clips) {
            std::vector<fs::path> frames;
            for (const auto& e : fs::directory_iterator(cp))
                if (e.path().extension() == ".ppm") frames.push_back(e.path());
            std::sort(frames.begin(), frames.end());
            require(!frames.empty(), "corpus: empty clip '" + cp.string() + "'");
            ci.clip_frames.push_back(frames);
        }
        out.push_back(std::move(ci));
    }
    return out;
}

// ---- model bundle ----

struct Models {
    VaeParams vae;
    FaceEncoderParams face;
    AudioProjection audio;
    DenoiserParams dn;
    ReferenceParams ref;
};

inline Models init_models(const RunConfig& cfg) {
    Models m;
    Rng rng(cfg.seed ^ 0x6d6f64656cull);  // model-init stream
    m.vae = VaeParams::init(cfg.spec, rng);
    m.face = FaceEncoderParams::init(cfg.spec, rng, cfg.dn.d_f);
    m.audio = AudioProjection::init(cfg.raw_width, cfg.dn.d_a, rng);
    m.dn = DenoiserParams::init(cfg.dn, cfg.spec, rng);
    m.ref = ReferenceParams::init(cfg.dn, cfg.spec, rng);
    return m;
}

inline ParamMap named_params(const VaeParams& v) {
    using namespace detail_denoiser;
    ParamMap m;
    for (std::size_t i = 0; i < v.enc_down.size(); ++i)
        reg_conv(m, "vae.enc" + std::to_string(i), v.enc_down[i]);
    reg_conv(m, "vae.enc_out", v.enc_out);
    reg_conv(m, "vae.dec_in", v.dec_in);
    for (std::size_t i = 0; i < v.dec_up.size(); ++i)
        reg_conv(m, "vae.dec" + std::to_string(i), v.dec_up[i]);
    reg_conv(m, "vae.dec_out", v.dec_out);
    return m;
}

inline ParamMap named_params(const FaceEncoderParams& f) {
    using namespace detail_denoiser;
    ParamMap m;
    for (std::size_t i = 0; i < f.down.size(); ++i)
        reg_conv(m, "face.down" + std::to_string(i), f.down[i]);
    reg_linear(m, "face.head", f.head);
    return m;
}

inline ParamMap named_params(const AudioProjection& a) {
    using namespace detail_denoiser;
    ParamMap m;
    reg_linear(m, "audio.l1", a.l1);
    reg_linear(m, "audio.l2", a.l2);
    reg_linear(m, "audio.l3", a.l3);
    return m;
}

// toy VAE + face encoder + audio projection: trained once, then frozen
inline ParamMap encoder_params(const Models& m) {
    ParamMap pm = named_params(m.vae);
    for (auto& kv : named_params(m.face)) pm.push_back(kv);
    for (auto& kv : named_params(m.audio)) pm.push_back(kv);
    return pm;
}

inline ParamMap denoiser_params(const Models& m) {
    ParamMap pm = named_params(m.dn);
    for (auto& kv : named_params(m.ref)) pm.push_back(kv);
    return pm;
}

inline std::vector<Tensor> tensors_of(const ParamMap& pm) {
    std::vector<Tensor> out;
    out.reserve(pm.size());
    for (const auto& [n, t] : pm) out.push_back(t);
    return out;
}

// ---- training ----

struct TrainLog {
    std::vector<double> losses;

    // mean of the first/last `window` entries; the committed training-curve
    // oracle compares these
    double smoothed_initial(std::size_t window = 50) const {
        require(!losses.empty(), "train log: empty");
        window = std::min(window, losses.size());
        double s = 0.0;
        for (std::size_t i = 0; i < window; ++i) s += losses[i];
        return s / double(window);
    }
    double smoothed_final(std::size_t window = 50) const {
        require(!losses.empty(), "train log: empty");
        window = std::min(window, losses.size());
        double s = 0.0;
        for (std::size_t i = losses.size() - window; i < losses.size(); ++i) s += losses[i];
        return s / double(window);
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream os(path);
        require(bool(os), "train log: cannot write '" + path.string() + "'");
        os.precision(17);
        for (std::size_t i = 0; i < losses.size(); ++i) os << i << " " << losses[i] << "\n";
    }
};

namespace detail_pipeline {

inline void check_finite_loss(double v, std::size_t step, const char* stage) {
    if (!std::isfinite(v))
        fail(std::string(stage) + ": non-finite loss " + std::to_string(v) + " at step " +
             std::to_string(step) + "; lower the learning rate or check the data");
}

inline Tensor load_frame(const std::filesystem::path& p) { return load_ppm(p); }

}  // namespace detail_pipeline

// VAE reconstruction plus a small identity-separation objective for the face
// encoder; both are frozen after this run.
inline TrainLog train_vae(const RunConfig& cfg, const std::vector<CorpusIdentity>& corpus,
                          Models& models) {
    cfg.validate();
    require(corpus.size() >= 1, "train_vae: empty corpus");
    // pre-load all frames
    std::vector<std::vector<Tensor>> frames(corpus.size());
    for (std::size_t id = 0; id < corpus.size(); ++id)
        for (const auto& clip : corpus[id].clip_frames)
            for (const auto& fp : clip) frames[id].push_back(detail_pipeline::load_frame(fp));

    std::vector<Tensor> vae_t = tensors_of(named_params(models.vae));
    std::vector<Tensor> face_t = tensors_of(named_params(models.face));
    std::vector<Tensor> all = vae_t;
    all.insert(all.end(), face_t.begin(), face_t.end());

    Rng rng(cfg.seed ^ 0x766165ull);
    TrainLog log;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Tensor loss = Tensor::scalar(0.0);
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            std::size_t id = rng.index(corpus.size());
            const Tensor& img = frames[id][rng.index(frames[id].size())];
            Tensor recon = vae_decode(models.vae, cfg.spec, vae_encode(models.vae, cfg.spec, img));
            Tensor d = sub(recon, img);
            loss = add(loss, mean(hadamard(d, d)));
        }
        loss = scale(loss, 1.0 / double(cfg.batch_size));
        if (corpus.size() >= 2) {
            std::size_t ia = rng.index(corpus.size());
            std::size_t ib = (ia + 1 + rng.index(corpus.size() - 1)) % corpus.size();
            Tensor ea1 = face_encode(models.face, cfg.spec, frames[ia][rng.index(frames[ia].size())]);
            Tensor ea2 = face_encode(models.face, cfg.spec, frames[ia][rng.index(frames[ia].size())]);
            Tensor eb = face_encode(models.face, cfg.spec, frames[ib][rng.index(frames[ib].size())]);
            Tensor cos_same = sum(hadamard(ea1, ea2));
            Tensor cos_diff = sum(hadamard(ea1, eb));
            // pull same-identity embeddings together, push others below 0.5
            Tensor face_loss = add(sub(Tensor::scalar(1.0), cos_same),
                                   relu(sub(cos_diff, Tensor::scalar(0.5))));
            loss = add(loss, scale(face_loss, 0.05));
        }
        double v = loss.item();
        detail_pipeline::check_finite_loss(v, step, "train_vae");
        log.losses.push_back(v);
        loss.backward();
        sgd_step(all, cfg.learning_rate);
    }
    if (!cfg.checkpoint_out.empty())
        save_checkpoint(cfg.checkpoint_out, encoder_params(models), config_hash(cfg), cfg.seed);
    return log;
}

// Region masks for the full-attention-only baseline: M_pose = 1 everywhere.
inline RegionMasks full_attention_masks(std::size_t h, std::size_t w) {
    RegionMasks rm;
    rm.y_lip = Tensor::zeros({h, w});
    rm.y_exp = Tensor::zeros({h, w});
    rm.m_lip = Tensor::zeros({h, w});
    rm.m_exp = Tensor::zeros({h, w});
    rm.m_pose = Tensor::ones({h, w});
    return rm;
}

inline RegionMasks masks_for(const RunConfig& cfg, const LandmarkSet& landmarks) {
    if (cfg.mask_mode == "full") return full_attention_masks(cfg.spec.h_z, cfg.spec.w_z);
    return derive_region_masks(landmarks, cfg.spec.h_z, cfg.spec.w_z);
}

// Frozen-encoder latents and embeddings for every corpus frame.
struct LatentCorpus {
    std::vector<std::vector<std::vector<Tensor>>> latents;  // [id][clip][frame] [D_z,H,W]
    std::vector<std::vector<std::vector<Tensor>>> cexp;     // [id][clip][frame] [D_f]
    std::vector<RegionMasks> masks;                         // per id, latent grid
    std::vector<Tensor> audio_emb;                          // per id [L, D_a]
};

inline LatentCorpus encode_corpus(const RunConfig& cfg, const Models& models,
                                  const std::vector<CorpusIdentity>& corpus) {
    LatentCorpus lc;
    for (const CorpusIdentity& ci : corpus) {
        std::vector<std::vector<Tensor>> zc, ec;
        for (const auto& clip : ci.clip_frames) {
            std::vector<Tensor> zf, ef;
            for (const auto& fp : clip) {
                Tensor img = detail_pipeline::load_frame(fp);
                zf.push_back(vae_encode(models.vae, cfg.spec, img).detach());
                ef.push_back(face_encode(models.face, cfg.spec, img).detach());
            }
            zc.push_back(std::move(zf));
            ec.push_back(std::move(ef));
        }
        lc.latents.push_back(std::move(zc));
        lc.cexp.push_back(std::move(ec));
        lc.masks.push_back(masks_for(cfg, ci.landmarks));
        lc.audio_emb.push_back(audio_project(models.audio, ci.audio).detach());
    }
    return lc;
}

// Stage 1: spatial blocks, reference network, and face cross-attention on
// (reference frame, target frame) pairs; temporal and HADVS excluded.
inline TrainLog train_stage1(const RunConfig& cfg, const std::vector<CorpusIdentity>& corpus,
                             Models& models) {
    cfg.validate();
    require(!cfg.vae_checkpoint.empty(), "train_stage1: vae_checkpoint required (frozen encoders)");
    load_checkpoint(cfg.vae_checkpoint, encoder_params(models));
    LatentCorpus lc = encode_corpus(cfg, models, corpus);

    models.dn.cfg.use_temporal = false;
    models.dn.cfg.use_hadvs = false;
    ParamMap all = denoiser_params(models);
    std::vector<Tensor> trainables;
    for (const auto& [n, t] : all)
        if (!is_stage2_param(n)) trainables.push_back(t);

    NoiseSchedule sched = cfg.schedule();
    Rng rng(cfg.seed ^ 0x737431ull);
    TrainLog log;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Tensor loss = Tensor::scalar(0.0);
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            std::size_t id = rng.index(corpus.size());
            std::size_t clip = rng.index(lc.latents[id].size());
            const auto& zc = lc.latents[id][clip];
            std::size_t target = rng.index(zc.size());
            std::size_t refi = rng.index(zc.size());
            ReferenceFeatures rf = reference_forward(models.ref, cfg.dn, cfg.spec, zc[refi]);
            ConditionBundle cond;
            cond.c_exp = lc.cexp[id][clip][refi];
            std::size_t gframe = clip * zc.size() + target;
            cond.c_audio = slice_rows(lc.audio_emb[id], gframe, gframe + 1).detach();
            cond = condition_dropout(cond, cfg.p_drop, rng);
            EpsModel model = [&](const std::vector<Tensor>& z_t, std::size_t t,
                                 const ConditionBundle& c) {
                return denoiser_forward(models.dn, z_t, t, c, rf, lc.masks[id], {});
            };
            loss = add(loss, training_loss({zc[target]}, cond, sched, model, rng));
        }
        loss = scale(loss, 1.0 / double(cfg.batch_size));
        double v = loss.item();
        detail_pipeline::check_finite_loss(v, step, "train_stage1");
        log.losses.push_back(v);
        loss.backward();
        sgd_step(trainables, cfg.learning_rate);
        // drop the tape between steps
        for (const auto& [n, t] : all) {
            Tensor tt = t;
            tt.zero_grad();
        }
    }
    if (!cfg.checkpoint_out.empty())
        save_checkpoint(cfg.checkpoint_out, denoiser_params(models), config_hash(cfg), cfg.seed);
    return log;
}

// Stage 2: HADVS and temporal blocks on S-frame clips with 2 ground-truth
// motion frames; spatial modules frozen.
inline TrainLog train_stage2(const RunConfig& cfg, const std::vector<CorpusIdentity>& corpus,
                             Models& models) {
    cfg.validate();
    require(!cfg.vae_checkpoint.empty(), "train_stage2: vae_checkpoint required");
    require(!cfg.checkpoint_in.empty(), "train_stage2: stage-1 checkpoint required");
    load_checkpoint(cfg.vae_checkpoint, encoder_params(models));
    load_checkpoint(cfg.checkpoint_in, denoiser_params(models));
    LatentCorpus lc = encode_corpus(cfg, models, corpus);

    models.dn.cfg.use_temporal = true;
    models.dn.cfg.use_hadvs = true;
    ParamMap all = denoiser_params(models);
    std::vector<Tensor> trainables;
    for (const auto& [n, t] : all)
        if (is_stage2_param(n)) trainables.push_back(t);
    require(!trainables.empty(), "train_stage2: no stage-2 parameters found");

    std::size_t k = cfg.dn.motion_frames;
    NoiseSchedule sched = cfg.schedule();
    Rng rng(cfg.seed ^ 0x737432ull);
    TrainLog log;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Tensor loss = Tensor::scalar(0.0);
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            std::size_t id = rng.index(corpus.size());
            const auto& clips = lc.latents[id];
            require(clips.size() >= 2, "train_stage2: need at least 2 clips per identity");
            std::size_t clip = 1 + rng.index(clips.size() - 1);
            const auto& zc = clips[clip];
            std::size_t s = zc.size();
            std::vector<Tensor> motion;
            for (std::size_t j = k; j-- > 0;)
                motion.push_back(clips[clip - 1][clips[clip - 1].size() - 1 - j]);
            std::size_t refi = rng.index(s);
            ReferenceFeatures rf = reference_forward(models.ref, cfg.dn, cfg.spec, zc[refi]);
            ConditionBundle cond;
            cond.c_exp = lc.cexp[id][clip][refi];
            std::size_t start = clip * s;
            cond.c_audio = slice_rows(lc.audio_emb[id], start, start + s).detach();
            cond = condition_dropout(cond, cfg.p_drop, rng);
            EpsModel model = [&](const std::vector<Tensor>& z_t, std::size_t t,
                                 const ConditionBundle& c) {
                return denoiser_forward(models.dn, z_t, t, c, rf, lc.masks[id], motion);
            };
            loss = add(loss, training_loss(zc, cond, sched, model, rng));
        }
        loss = scale(loss, 1.0 / double(cfg.batch_size));
        double v = loss.item();
        detail_pipeline::check_finite_loss(v, step, "train_stage2");
        log.losses.push_back(v);
        loss.backward();
        sgd_step(trainables, cfg.learning_rate);
        for (const auto& [n, t] : all) {
            Tensor tt = t;
            tt.zero_grad();
        }
    }
    if (!cfg.checkpoint_out.empty())
        save_checkpoint(cfg.checkpoint_out, denoiser_params(models), config_hash(cfg), cfg.seed);
    return log;
}

// ---- inference ----

struct AnimateResult {
    std::vector<std::filesystem::path> frame_paths;
    std::vector<std::vector<Tensor>> clip_latents;   // per clip, S latents
    std::vector<std::vector<Tensor>> motion_inputs;  // per clip, k latents (empty for clip 0)
    std::filesystem::path manifest;
};

inline AnimateResult animate(const RunConfig& cfg, Models& models, const Tensor& ref_image,
                             const LandmarkSet& landmarks, const Tensor& raw_audio,
                             std::size_t total_frames, bool pad_audio = false,
                             const RegionMasks* mask_override = nullptr,
                             bool load_checkpoints = true) {
    cfg.validate();
    require(total_frames >= 1, "animate: total_frames must be >= 1");
    if (load_checkpoints) {
        require(!cfg.vae_checkpoint.empty() && !cfg.checkpoint_in.empty(),
                "animate: vae_checkpoint and checkpoint_in required");
        load_checkpoint(cfg.vae_checkpoint, encoder_params(models));
        load_checkpoint(cfg.checkpoint_in, denoiser_params(models));
    }
    Tensor audio = raw_audio;
    require(audio.rank() == 2 && audio.extent(1) == cfg.raw_width,
            "animate: audio features must be [L, " + std::to_string(cfg.raw_width) + "]");
    if (audio.extent(0) < total_frames) {
        require(pad_audio, "animate: audio timeline (" + std::to_string(audio.extent(0)) +
                               " frames) shorter than requested video (" +
                               std::to_string(total_frames) + "); pass --pad-audio to zero-pad");
        Tensor padded = Tensor::zeros({total_frames, cfg.raw_width});
        std::copy(audio.data().begin(), audio.data().end(), padded.mutable_data().begin());
        audio = padded;
    }

    Tensor z_ref = vae_encode(models.vae, cfg.spec, ref_image).detach();
    Tensor c_exp = face_encode(models.face, cfg.spec, ref_image).detach();
    RegionMasks masks = mask_override ? *mask_override : masks_for(cfg, landmarks);
    ReferenceFeatures rf = reference_forward(models.ref, cfg.dn, cfg.spec, z_ref);
    NoiseSchedule sched = cfg.schedule();
    std::size_t s = cfg.clip_frames;
    std::size_t k = cfg.dn.motion_frames;
    std::size_t n_clips = (total_frames + s - 1) / s;

    namespace fs = std::filesystem;
    fs::path out = cfg.out_dir.empty() ? fs::path("animate_out") : fs::path(cfg.out_dir);
    fs::create_directories(out);

    AnimateResult res;
    std::vector<std::pair<std::size_t, std::size_t>> boundaries;
    std::size_t emitted = 0;
    for (std::size_t clip = 0; clip < n_clips; ++clip) {
        std::size_t start = clip * s;
        Tensor seg = audio_segment(audio, std::int64_t(start), s, cfg.fps);
        ConditionBundle cond;
        cond.c_exp = c_exp;
        cond.c_audio = audio_project(models.audio, seg).detach();

        std::vector<Tensor> motion;
        if (clip > 0 && k > 0) {
            const auto& prev = res.clip_latents[clip - 1];
            for (std::size_t j = k; j-- > 0;) motion.push_back(prev[prev.size() - 1 - j]);
        }
        res.motion_inputs.push_back(motion);

        EpsModel model = [&](const std::vector<Tensor>& z_t, std::size_t t,
                             const ConditionBundle& c) {
            return denoiser_forward(models.dn, z_t, t, c, rf, masks, motion);
        };
        std::uint64_t clip_seed = cfg.seed + 7919 * (clip + 1);
        std::vector<Tensor> lat = ddim_sample(model, cond, sched, cfg.scales,
                                              {cfg.spec.d_z, cfg.spec.h_z, cfg.spec.w_z}, s,
                                              clip_seed);
        for (std::size_t j = 0; j < lat.size(); ++j) lat[j] = lat[j].detach();
        res.clip_latents.push_back(lat);
        boundaries.emplace_back(start, std::min(start + s, total_frames));

        char buf[64];
        for (std::size_t j = 0; j < lat.size(); ++j) {
            std::snprintf(buf, sizeof buf, "clip%03zu_latent%03zu.htns", clip, j);
            save_htns(out / buf, lat[j]);
        }
        for (std::size_t j = 0; j < motion.size(); ++j) {
            std::snprintf(buf, sizeof buf, "clip%03zu_motion%zu.htns", clip, j);
            save_htns(out / buf, motion[j]);
        }
        for (std::size_t j = 0; j < lat.size() && emitted < total_frames; ++j, ++emitted) {
            Tensor img = vae_decode(models.vae, cfg.spec, lat[j]).detach();
            std::snprintf(buf, sizeof buf, "frame%04zu.ppm", emitted);
            fs::path fp = out / buf;
            save_ppm(fp, img);
            res.frame_paths.push_back(fp);
        }
    }
    require(res.frame_paths.size() == total_frames, "animate: frame count mismatch");

    res.manifest = out / "manifest.txt";
    std::ofstream mf(res.manifest);
    mf << "config_hash " << config_hash(cfg) << "\nseed " << cfg.seed << "\ngit_revision "
       << read_git_revision(".") << "\nframes " << total_frames << "\nclips " << n_clips
       << "\nclip_frames " << s << "\nmotion_frames " << k << "\n";
    for (std::size_t c = 0; c < n_clips; ++c) {
        mf << "clip " << c << " " << boundaries[c].first << " " << boundaries[c].second;
        mf << " seed " << (cfg.seed + 7919 * (c + 1)) << "\n";
        char buf[64];
        for (std::size_t j = 0; j < res.motion_inputs[c].size(); ++j) {
            std::snprintf(buf, sizeof buf, "clip%03zu_motion%zu.htns", c, j);
            mf << "motion " << c << " " << j << " " << file_digest(out / buf) << "\n";
        }
        for (std::size_t j = 0; j < res.clip_latents[c].size(); ++j) {
            std::snprintf(buf, sizeof buf, "clip%03zu_latent%03zu.htns", c, j);
            mf << "latent " << c << " " << j << " " << file_digest(out / buf) << "\n";
        }
    }
    return res;
}

// ---- ablation grid ----

struct AblationRow {
    std::string cell;
    std::map<std::string, double> metrics;
};

// grid = regions | fusion | weights | cfg
inline std::vector<AblationRow> ablation_grid(const RunConfig& base, Models& models,
                                              const Tensor& ref_image,
                                              const LandmarkSet& landmarks,
                                              const Tensor& raw_audio, const std::string& grid) {
    struct Cell {
        std::string name;
        RunConfig cfg;
        bool mask_override = false;
    };
    std::vector<Cell> cells;
    auto with_weights = [&](const std::string& name, double lip, double exp, double pose) {
        Cell c{name, base, false};
        c.cfg.dn.region_weights = {lip, exp, pose};
        cells.push_back(c);
    };
    if (grid == "regions") {
        Cell full{"full_only", base, false};
        full.cfg.mask_mode = "full";
        full.cfg.dn.region_weights = {0.0, 0.0, 1.0};
        cells.push_back(full);
        with_weights("plus_lip", 1.0, 0.0, 0.0);
        with_weights("plus_exp", 1.0, 1.0, 0.0);
        with_weights("plus_pose", 1.0, 1.0, 1.0);
        Cell all{"all", base, false};
        cells.push_back(all);
    } else if (grid == "fusion") {
        for (FusionMode m : {FusionMode::direct_addition, FusionMode::self_attention,
                             FusionMode::zero_convolution}) {
            Cell c{fusion_mode_name(m), base, false};
            c.cfg.dn.fusion = m;
            cells.push_back(c);
        }
    } else if (grid == "weights") {
        with_weights("w_0_0_0", 0.0, 0.0, 0.0);
        with_weights("w_1_0_0", 1.0, 0.0, 0.0);
        with_weights("w_0_1_0", 0.0, 1.0, 0.0);
        with_weights("w_0_0_1", 0.0, 0.0, 1.0);
        with_weights("w_1_1_1", 1.0, 1.0, 1.0);
    } else if (grid == "cfg") {
        // the five (lambda_a, lambda_i) settings
        const double grid_la[] = {1.0, 1.0, 1.0, 3.5, 6.0};
        const double grid_li[] = {1.0, 3.5, 6.0, 3.5, 3.5};
        for (int i = 0; i < 5; ++i) {
            Cell c{"la" + std::to_string(grid_la[i]) + "_li" + std::to_string(grid_li[i]), base,
                   false};
            c.cfg.scales = {grid_la[i], grid_li[i]};
            cells.push_back(c);
        }
    } else {
        fail("ablation_grid: unknown grid key '" + grid + "'");
    }

    // Each cell copies every parameter it shares (by name and shape) with the
    // trained bundle; cells whose fusion mode introduces extra parameters keep
    // those at their seeded initialization.
    std::map<std::string, Tensor> trained;
    for (const auto& [n, t] : encoder_params(models)) trained.emplace(n, t);
    for (const auto& [n, t] : denoiser_params(models)) trained.emplace(n, t);

    std::vector<AblationRow> rows;
    RegionMasks lip_masks = derive_region_masks(landmarks, base.spec.h_z, base.spec.w_z);
    for (Cell& cell : cells) {
        cell.cfg.out_dir = (std::filesystem::path(base.out_dir.empty() ? "ablate_out" : base.out_dir) /
                            (grid + "_" + cell.name))
                               .string();
        RegionMasks override_masks = full_attention_masks(base.spec.h_z, base.spec.w_z);
        Models local = init_models(cell.cfg);
        ParamMap local_params = encoder_params(local);
        for (const auto& kv : denoiser_params(local)) local_params.push_back(kv);
        for (const auto& [name, t] : local_params) {
            auto it = trained.find(name);
            if (it == trained.end() || it->second.shape() != t.shape()) continue;
            Tensor dst = t;
            dst.mutable_data() = it->second.data();
        }
        AnimateResult ar = animate(cell.cfg, local, ref_image, landmarks, raw_audio,
                                   cell.cfg.clip_frames, true,
                                   cell.mask_override ? &override_masks : nullptr,
                                   /*load_checkpoints=*/false);
        std::vector<Tensor> frames;
        for (const auto& fp : ar.frame_paths) frames.push_back(load_ppm(fp));
        AblationRow row;
        row.cell = cell.name;
        Tensor seg = audio_segment(raw_audio, 0, frames.size(), cell.cfg.fps);
        SyncScores sync = sync_proxy(seg, frames, lip_masks.m_lip);
        row.metrics["sync_c_proxy"] = sync.sync_c;
        row.metrics["sync_d_proxy"] = sync.sync_d;
        double fused_mag = 0.0;
        for (const auto& lat : ar.clip_latents)
            for (const Tensor& t : lat)
                for (std::size_t i = 0; i < t.size(); ++i) fused_mag += std::abs(t[i]);
        row.metrics["latent_l1"] = fused_mag;
        rows.push_back(row);
    }
    return rows;
}

inline void write_ablation_csv(const std::filesystem::path& path,
                               const std::vector<AblationRow>& rows, const std::string& cfg_hash) {
    std::ofstream os(path);
    require(bool(os), "ablation: cannot write '" + path.string() + "'");
    os << "# sync values are correlation proxies; not comparable to SyncNet Sync-C/Sync-D\n";
    os << "cell,metric,value,config_hash\n";
    os.precision(17);
    for (const AblationRow& r : rows)
        for (const auto& [k, v] : r.metrics) os << r.cell << "," << k << "," << v << "," << cfg_hash << "\n";
}

// ---- profiling ----

struct ProfileRow {
    std::size_t resolution;
    bool hadvs;
    double seconds;
    std::size_t peak_bytes;
};

// one inference clip per (resolution, hadvs) cell with freshly seeded weights
inline std::vector<ProfileRow> profile_run(const RunConfig& base,
                                           const std::vector<std::size_t>& resolutions) {
    std::vector<ProfileRow> rows;
    for (std::size_t r : resolutions) {
        for (bool hadvs : {false, true}) {
            RunConfig cfg = base;
            cfg.spec.h_z = cfg.spec.w_z = r;
            cfg.spec.h_i = cfg.spec.w_i = r * 4;
            cfg.dn.use_hadvs = hadvs;
            Models models = init_models(cfg);
            LandmarkSet lm;
            lm.image_h = cfg.spec.h_i;
            lm.image_w = cfg.spec.w_i;
            double c = double(cfg.spec.w_i);
            lm.lip_points = {{0.4 * c, 0.6 * c}, {0.6 * c, 0.8 * c}};
            lm.exp_points = {{0.25 * c, 0.25 * c}, {0.75 * c, 0.8 * c}};
            RegionMasks masks = derive_region_masks(lm, r, r);
            ReferenceFeatures rf =
                reference_forward(models.ref, cfg.dn, cfg.spec,
                                  Tensor::zeros({cfg.spec.d_z, r, r}));
            ConditionBundle cond;
            Rng rng(cfg.seed + r);
            cond.c_exp = l2_normalize(Tensor::randn({cfg.dn.d_f}, rng)).detach();
            cond.c_audio = Tensor::randn({cfg.clip_frames, cfg.dn.d_a}, rng);
            EpsModel model = [&](const std::vector<Tensor>& z_t, std::size_t t,
                                 const ConditionBundle& cb) {
                return denoiser_forward(models.dn, z_t, t, cb, rf, masks, {});
            };
            MemStats::reset_peak();
            auto t0 = std::chrono::steady_clock::now();
            ddim_sample(model, cond, cfg.schedule(), cfg.scales, {cfg.spec.d_z, r, r},
                        cfg.clip_frames, cfg.seed);
            auto t1 = std::chrono::steady_clock::now();
            ProfileRow row;
            row.resolution = r;
            row.hadvs = hadvs;
            row.seconds = std::chrono::duration<double>(t1 - t0).count();
            row.peak_bytes = std::size_t(MemStats::peak().load());
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_profile_csv(const std::filesystem::path& path,
                              const std::vector<ProfileRow>& rows) {
    std::ofstream os(path);
    require(bool(os), "profile: cannot write '" + path.string() + "'");
    os << "resolution,hadvs,seconds,peak_bytes\n";
    os.precision(17);
    for (const ProfileRow& r : rows)
        os << r.resolution << "," << (r.hadvs ? 1 : 0) << "," << r.seconds << "," << r.peak_bytes
           << "\n";
}

// ---- metrics report ----

inline std::vector<Tensor> load_frames_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    require(fs::is_directory(dir), "metrics: '" + dir.string() + "' is not a directory");
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".ppm") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    require(paths.size() >= 2, "metrics: need at least 2 frames in '" + dir.string() + "'");
    std::vector<Tensor> frames;
    for (const auto& p : paths) frames.push_back(load_ppm(p));
    return frames;
}

inline void write_metrics_csv(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, double>>& rows,
                              const std::string& cfg_hash) {
    std::ofstream os(path);
    require(bool(os), "metrics: cannot write '" + path.string() + "'");
    os << "# sync values are correlation proxies; not comparable to SyncNet Sync-C/Sync-D\n";
    os << "metric,value,config_hash\n";
    os.precision(17);
    for (const auto& [k, v] : rows) os << k << "," << v << "," << cfg_hash << "\n";
}

}  // namespace hallo
