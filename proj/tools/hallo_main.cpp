#include <CLI11.hpp>

#include <iostream>

#include "hallo/pipeline.hpp"

using namespace hallo;
namespace fs = std::filesystem;

namespace {

RunConfig load_cfg(const std::string& path) {
    RunConfig cfg = load_run_config(path);
    cfg.validate();
    return cfg;
}

// Every run leaves a manifest next to its outputs.
void write_run_manifest(const fs::path& dir, const RunConfig& cfg,
                        const std::vector<std::pair<std::string, fs::path>>& inputs) {
    fs::create_directories(dir);
    std::ofstream os(dir / "run_manifest.txt");
    os << "config_hash " << config_hash(cfg) << "\nseed " << cfg.seed << "\ngit_revision "
       << read_git_revision(".") << "\n";
    for (const auto& [name, p] : inputs)
        if (fs::is_regular_file(p)) os << "input " << name << " " << file_digest(p) << "\n";
}

int run_synth(const std::string& out, const SynthConfig& sc) {
    write_corpus(out, sc);
    std::cout << "wrote " << sc.ids << " identities x " << sc.clips << " clips x " << sc.frames
              << " frames to " << out << "\n";
    return 0;
}

int run_train(const std::string& config_path, int stage_override) {
    RunConfig cfg = load_cfg(config_path);
    if (stage_override == 0) cfg.stage = "vae";
    if (stage_override == 1) cfg.stage = "stage1";
    if (stage_override == 2) cfg.stage = "stage2";
    require(!cfg.data_dir.empty(), "train: config must set data_dir");
    require(!cfg.checkpoint_out.empty(), "train: config must set checkpoint_out");
    std::vector<CorpusIdentity> corpus = load_corpus(cfg.data_dir);
    Models models = init_models(cfg);
    TrainLog log;
    if (cfg.stage == "vae") log = train_vae(cfg, corpus, models);
    else if (cfg.stage == "stage1") log = train_stage1(cfg, corpus, models);
    else if (cfg.stage == "stage2") log = train_stage2(cfg, corpus, models);
    else fail("train: config stage '" + cfg.stage + "' is not a training stage");
    log.write(fs::path(cfg.checkpoint_out) / "train_log.txt");
    write_run_manifest(cfg.checkpoint_out, cfg, {{"config", config_path}});
    std::cout << cfg.stage << ": " << log.losses.size() << " steps, smoothed loss "
              << log.smoothed_initial() << " -> " << log.smoothed_final() << "\ncheckpoint: "
              << cfg.checkpoint_out << "\n";
    return 0;
}

int run_animate(const std::string& config_path, const std::string& ref, const std::string& lm_path,
                const std::string& audio_path, std::size_t frames, bool pad_audio,
                const std::string& out_override) {
    RunConfig cfg = load_cfg(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    Models models = init_models(cfg);
    AnimateResult r = animate(cfg, models, load_ppm(ref), load_landmarks(lm_path),
                              load_htns(audio_path), frames, pad_audio);
    std::cout << "wrote " << r.frame_paths.size() << " frames, manifest " << r.manifest << "\n";
    return 0;
}

int run_masks(const std::string& lm_path, std::size_t h, std::size_t w, const std::string& out) {
    LandmarkSet lm = load_landmarks(lm_path);
    RegionMasks rm = derive_region_masks(lm, h, w);
    fs::create_directories(out);
    fs::path dir(out);
    for (const auto& [name, t] : std::initializer_list<std::pair<const char*, Tensor>>{
             {"y_lip", rm.y_lip}, {"y_exp", rm.y_exp}, {"m_lip", rm.m_lip},
             {"m_exp", rm.m_exp}, {"m_pose", rm.m_pose}}) {
        save_htns(dir / (std::string(name) + ".htns"), t);
        save_pgm(dir / (std::string(name) + ".pgm"), t);
    }
    std::cout << "wrote 5 region masks (" << h << "x" << w << ") to " << out << "\n";
    return 0;
}

int run_ablate(const std::string& config_path, const std::string& grid, const std::string& ref,
               const std::string& lm_path, const std::string& audio_path, const std::string& out) {
    RunConfig cfg = load_cfg(config_path);
    Models models = init_models(cfg);
    if (!cfg.vae_checkpoint.empty()) load_checkpoint(cfg.vae_checkpoint, encoder_params(models));
    if (!cfg.checkpoint_in.empty()) load_checkpoint(cfg.checkpoint_in, denoiser_params(models));
    std::vector<AblationRow> rows = ablation_grid(cfg, models, load_ppm(ref),
                                                  load_landmarks(lm_path), load_htns(audio_path),
                                                  grid);
    write_ablation_csv(out, rows, config_hash(cfg));
    std::cout << "wrote " << rows.size() << " grid cells to " << out << "\n";
    return 0;
}

int run_profile(const std::string& config_path, std::vector<std::size_t> resolutions,
                const std::string& out) {
    RunConfig cfg = load_cfg(config_path);
    if (resolutions.empty()) resolutions = {8, 16, 32};
    std::vector<ProfileRow> rows = profile_run(cfg, resolutions);
    write_profile_csv(out, rows);
    for (const ProfileRow& r : rows)
        std::cout << r.resolution << "x" << r.resolution << " hadvs=" << r.hadvs << " "
                  << r.seconds << "s peak=" << r.peak_bytes << "B\n";
    std::cout << "wrote " << rows.size() << " rows to " << out << "\n";
    return 0;
}

int run_metrics(const std::string& config_path, const std::string& gen_dir,
                const std::string& ref_dir, const std::string& audio_path,
                const std::string& lm_path, const std::string& out) {
    RunConfig cfg = load_cfg(config_path);
    std::vector<Tensor> gen = load_frames_dir(gen_dir);
    std::vector<std::pair<std::string, double>> rows;
    if (!ref_dir.empty()) {
        std::vector<Tensor> ref = load_frames_dir(ref_dir);
        rows.emplace_back("frame_fid",
                          frechet_distance(clip_features(gen), clip_features(ref)));
    }
    if (!audio_path.empty()) {
        require(!lm_path.empty(), "metrics: --landmarks required together with --audio");
        LandmarkSet lm = load_landmarks(lm_path);
        RegionMasks rm = derive_region_masks(lm, cfg.spec.h_z, cfg.spec.w_z);
        Tensor audio = load_htns(audio_path);
        require(audio.rank() == 2 && audio.extent(0) >= gen.size(),
                "metrics: audio timeline shorter than the frame sequence");
        Tensor seg = slice_rows(audio, 0, gen.size()).detach();
        SyncScores sync = sync_proxy(seg, gen, rm.m_lip);
        rows.emplace_back("sync_c_proxy", sync.sync_c);
        rows.emplace_back("sync_d_proxy", sync.sync_d);
        rows.emplace_back("sync_best_offset", double(sync.best_offset));
    }
    require(!rows.empty(), "metrics: nothing to compute (need --reference and/or --audio)");
    write_metrics_csv(out, rows, config_hash(cfg));
    for (const auto& [k, v] : rows) std::cout << k << " = " << v << "\n";
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"audio-driven portrait animation, desk scale"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
    SynthConfig sc;
    std::string synth_out = "data";
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--ids", sc.ids, "identity count");
    synth->add_option("--clips", sc.clips, "clips per identity");
    synth->add_option("--frames", sc.frames, "frames per clip");
    synth->add_option("--image", sc.image, "image side length");
    synth->add_option("--raw-width", sc.raw_width, "raw audio feature width");
    synth->add_option("--seed", sc.seed, "corpus seed");

    // train-vae / train
    std::string cfg_path;
    auto* train_vae_cmd = app.add_subcommand("train-vae", "train the frozen encoders");
    train_vae_cmd->add_option("--config", cfg_path, "run config file")->required();
    int stage = 1;
    auto* train_cmd = app.add_subcommand("train", "train denoiser stage 1 or 2");
    train_cmd->add_option("--config", cfg_path, "run config file")->required();
    train_cmd->add_option("--stage", stage, "1 (spatial) or 2 (audio+temporal)")
        ->check(CLI::Range(1, 2))
        ->required();

    // animate
    std::string ref_path, lm_path, audio_path, out_path;
    std::size_t frames = 14;
    bool pad_audio = false;
    auto* anim = app.add_subcommand("animate", "generate a video from a reference portrait");
    anim->add_option("--config", cfg_path, "run config file")->required();
    anim->add_option("--ref", ref_path, "reference portrait (PPM)")->required();
    anim->add_option("--landmarks", lm_path, "landmark file")->required();
    anim->add_option("--audio", audio_path, "audio features (HTNS [L, raw_width])")->required();
    anim->add_option("--frames", frames, "total output frames")->required();
    anim->add_flag("--pad-audio", pad_audio, "zero-pad audio shorter than the video");
    anim->add_option("--out", out_path, "output directory (overrides config out_dir)");

    // masks
    std::size_t mh = 16, mw = 16;
    auto* masks = app.add_subcommand("masks", "rasterize region masks from landmarks");
    masks->add_option("--landmarks", lm_path, "landmark file")->required();
    masks->add_option("--height", mh, "latent grid height");
    masks->add_option("--width", mw, "latent grid width");
    masks->add_option("--out", out_path, "output directory")->required();

    // ablate
    std::string grid;
    auto* ablate = app.add_subcommand("ablate", "run an ablation grid");
    ablate->add_option("--config", cfg_path, "run config file")->required();
    ablate->add_option("--grid", grid, "regions | fusion | weights | cfg")->required();
    ablate->add_option("--ref", ref_path, "reference portrait (PPM)")->required();
    ablate->add_option("--landmarks", lm_path, "landmark file")->required();
    ablate->add_option("--audio", audio_path, "audio features (HTNS)")->required();
    ablate->add_option("--out", out_path, "output CSV")->required();

    // profile
    std::vector<std::size_t> resolutions;
    auto* prof = app.add_subcommand("profile", "wall-time / peak-memory sweep");
    prof->add_option("--config", cfg_path, "run config file")->required();
    prof->add_option("--resolutions", resolutions, "latent sides, default 8 16 32");
    prof->add_option("--out", out_path, "output CSV")->required();

    // metrics
    std::string gen_dir, ref_dir;
    auto* met = app.add_subcommand("metrics", "distribution and sync metrics");
    met->add_option("--config", cfg_path, "run config file")->required();
    met->add_option("--generated", gen_dir, "generated frame directory")->required();
    met->add_option("--reference", ref_dir, "reference frame directory");
    met->add_option("--audio", audio_path, "audio features (HTNS)");
    met->add_option("--landmarks", lm_path, "landmark file (needed with --audio)");
    met->add_option("--out", out_path, "output CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return run_synth(synth_out, sc);
        if (*train_vae_cmd) return run_train(cfg_path, 0);
        if (*train_cmd) return run_train(cfg_path, stage);
        if (*anim)
            return run_animate(cfg_path, ref_path, lm_path, audio_path, frames, pad_audio,
                               out_path);
        if (*masks) return run_masks(lm_path, mh, mw, out_path);
        if (*ablate) return run_ablate(cfg_path, grid, ref_path, lm_path, audio_path, out_path);
        if (*prof) return run_profile(cfg_path, resolutions, out_path);
        if (*met)
            return run_metrics(cfg_path, gen_dir, ref_dir, audio_path, lm_path, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
