#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hallo/denoiser.hpp"
#include "hallo/diffusion.hpp"

namespace hallo {

struct RunConfig {
    std::string stage = "stage1";  // vae | stage1 | stage2 | infer
    double learning_rate = 1e-5;
    std::size_t batch_size = 4;
    std::size_t steps = 500;
    std::uint64_t seed = 0;
    bool seed_set = false;  // seed is mandatory
    LatentSpec spec;
    DenoiserConfig dn;
    std::size_t t_total = 100;
    std::size_t ddim_steps = 10;
    double beta_start = 1e-4, beta_end = 2e-2;
    GuidanceScales scales;
    double p_drop = 0.05;
    std::size_t clip_frames = 14;  // S
    double fps = 14.0 / 5.0;
    // "regions": masks derived from landmarks; "full": M_pose = 1 everywhere
    // (the full-attention-only baseline of the region ablation)
    std::string mask_mode = "regions";
    std::size_t raw_width = 96;  // 12 * D_raw
    std::string data_dir, vae_checkpoint, checkpoint_in, checkpoint_out, out_dir;

    NoiseSchedule schedule() const {
        return NoiseSchedule::make(t_total, ddim_steps, beta_start, beta_end);
    }

    void validate() const {
        require(stage == "vae" || stage == "stage1" || stage == "stage2" || stage == "infer",
                "config: unknown stage '" + stage + "'");
        require(seed_set, "config: seed is mandatory");
        require(learning_rate > 0.0 && std::isfinite(learning_rate), "config: bad learning_rate");
        require(batch_size >= 1, "config: batch_size must be >= 1");
        require(clip_frames >= 1, "config: clip_frames must be >= 1");
        require(p_drop >= 0.0 && p_drop <= 1.0, "config: p_drop outside [0,1]");
        require(mask_mode == "regions" || mask_mode == "full",
                "config: mask_mode must be 'regions' or 'full', got '" + mask_mode + "'");
        spec.validate();
        dn.validate();
        scales.validate();
        (void)schedule();
    }
};

namespace detail_config {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    fail("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::vector<std::size_t> parse_size_list(const std::string& v, const std::string& key) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            fail("config: key '" + key + "' has a non-integer element '" + item + "'");
        }
    require(!out.empty(), "config: key '" + key + "' is empty");
    return out;
}

}  // namespace detail_config

// One `key value` pair per line; '#' starts a comment; unknown keys error.
inline RunConfig parse_config_text(const std::string& text) {
    RunConfig c;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::stringstream ls(line);
        std::string key, value;
        if (!(ls >> key)) continue;
        if (!(ls >> value)) fail("config:" + std::to_string(lineno) + ": key '" + key + "' has no value");
        auto num = [&]() -> double {
            try {
                return std::stod(value);
            } catch (const std::exception&) {
                fail("config:" + std::to_string(lineno) + ": key '" + key +
                     "' expects a number, got '" + value + "'");
            }
        };
        auto uns = [&]() -> std::size_t {
            try {
                return std::stoull(value);
            } catch (const std::exception&) {
                fail("config:" + std::to_string(lineno) + ": key '" + key +
                     "' expects an integer, got '" + value + "'");
            }
        };
        if (key == "stage") c.stage = value;
        else if (key == "learning_rate") c.learning_rate = num();
        else if (key == "batch_size") c.batch_size = uns();
        else if (key == "steps") c.steps = uns();
        else if (key == "seed") { c.seed = uns(); c.seed_set = true; }
        else if (key == "latent_h") c.spec.h_z = uns();
        else if (key == "latent_w") c.spec.w_z = uns();
        else if (key == "latent_d") c.spec.d_z = uns();
        else if (key == "image_h") c.spec.h_i = uns();
        else if (key == "image_w") c.spec.w_i = uns();
        else if (key == "channels") {
            c.dn.channels = detail_config::parse_size_list(value, key);
            c.dn.levels = c.dn.channels.size();
        } else if (key == "temb_width") c.dn.temb_width = uns();
        else if (key == "motion_frames") c.dn.motion_frames = uns();
        else if (key == "d_f") c.dn.d_f = uns();
        else if (key == "d_a") c.dn.d_a = uns();
        else if (key == "audio_context") c.dn.audio_context = uns();
        else if (key == "max_timestep") c.dn.max_timestep = uns();
        else if (key == "use_temporal") c.dn.use_temporal = detail_config::parse_bool(value, key);
        else if (key == "use_hadvs") c.dn.use_hadvs = detail_config::parse_bool(value, key);
        else if (key == "fusion") c.dn.fusion = parse_fusion_mode(value);
        else if (key == "w_lip") c.dn.region_weights.lip = num();
        else if (key == "w_exp") c.dn.region_weights.exp = num();
        else if (key == "w_pose") c.dn.region_weights.pose = num();
        else if (key == "t_total") { c.t_total = uns(); c.dn.max_timestep = c.t_total; }
        else if (key == "ddim_steps") c.ddim_steps = uns();
        else if (key == "beta_start") c.beta_start = num();
        else if (key == "beta_end") c.beta_end = num();
        else if (key == "lambda_a") c.scales.lambda_a = num();
        else if (key == "lambda_i") c.scales.lambda_i = num();
        else if (key == "p_drop") c.p_drop = num();
        else if (key == "clip_frames") c.clip_frames = uns();
        else if (key == "fps") c.fps = num();
        else if (key == "mask_mode") c.mask_mode = value;
        else if (key == "raw_width") c.raw_width = uns();
        else if (key == "data_dir") c.data_dir = value;
        else if (key == "vae_checkpoint") c.vae_checkpoint = value;
        else if (key == "checkpoint_in") c.checkpoint_in = value;
        else if (key == "checkpoint_out") c.checkpoint_out = value;
        else if (key == "out_dir") c.out_dir = value;
        else fail("config:" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(bool(is), "config: cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

// canonical serialization; the config hash is FNV-1a over this text
inline std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "stage " << c.stage << "\nlearning_rate " << c.learning_rate << "\nbatch_size "
       << c.batch_size << "\nsteps " << c.steps << "\nseed " << c.seed << "\nlatent_h "
       << c.spec.h_z << "\nlatent_w " << c.spec.w_z << "\nlatent_d " << c.spec.d_z << "\nimage_h "
       << c.spec.h_i << "\nimage_w " << c.spec.w_i << "\nchannels ";
    for (std::size_t i = 0; i < c.dn.channels.size(); ++i)
        os << (i ? "," : "") << c.dn.channels[i];
    os << "\ntemb_width " << c.dn.temb_width << "\nmotion_frames " << c.dn.motion_frames
       << "\nd_f " << c.dn.d_f << "\nd_a " << c.dn.d_a << "\naudio_context " << c.dn.audio_context
       << "\nmax_timestep " << c.dn.max_timestep << "\nuse_temporal " << c.dn.use_temporal
       << "\nuse_hadvs " << c.dn.use_hadvs << "\nfusion " << fusion_mode_name(c.dn.fusion)
       << "\nw_lip " << c.dn.region_weights.lip << "\nw_exp " << c.dn.region_weights.exp
       << "\nw_pose " << c.dn.region_weights.pose << "\nt_total " << c.t_total << "\nddim_steps "
       << c.ddim_steps << "\nbeta_start " << c.beta_start << "\nbeta_end " << c.beta_end
       << "\nlambda_a " << c.scales.lambda_a << "\nlambda_i " << c.scales.lambda_i << "\np_drop "
       << c.p_drop << "\nclip_frames " << c.clip_frames << "\nfps " << c.fps << "\nmask_mode "
       << c.mask_mode << "\nraw_width " << c.raw_width << "\n";
    return os.str();
}

inline std::string config_hash(const RunConfig& c) {
    std::string s = serialize_config(c);
    return hex64(fnv1a(s.data(), s.size()));
}

// ---- checkpoints: one HTNS file per named parameter plus a manifest ----

inline void save_checkpoint(const std::filesystem::path& dir, const ParamMap& params,
                            const std::string& cfg_hash, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    require(bool(manifest), "checkpoint: cannot write manifest in '" + dir.string() + "'");
    manifest << "config_hash " << cfg_hash << "\nseed " << seed << "\nparams " << params.size()
             << "\n";
    for (const auto& [name, t] : params) {
        std::string fname = name + ".htns";
        save_htns(dir / fname, t);
        manifest << "param " << name << " " << file_digest(dir / fname) << "\n";
    }
}

// loads values into the existing (already shaped) parameter tensors
inline void load_checkpoint(const std::filesystem::path& dir, const ParamMap& params) {
    for (const auto& [name, t] : params) {
        std::filesystem::path p = dir / (name + ".htns");
        Tensor loaded = load_htns(p);
        require(loaded.shape() == t.shape(),
                "checkpoint: parameter '" + name + "' has shape " + shape_str(loaded.shape()) +
                    " on disk, expected " + shape_str(t.shape()));
        Tensor dst = t;
        dst.mutable_data() = loaded.data();
    }
}

inline std::string read_git_revision(const std::filesystem::path& repo_root) {
    std::ifstream head(repo_root / ".git" / "HEAD");
    if (!head) return "unknown";
    std::string line;
    std::getline(head, line);
    const std::string prefix = "ref: ";
    if (line.rfind(prefix, 0) == 0) {
        std::ifstream ref(repo_root / ".git" / line.substr(prefix.size()));
        if (!ref) return "unknown";
        std::string sha;
        ref >> sha;
        return sha.empty() ? "unknown" : sha;
    }
    return line.empty() ? "unknown" : line;
}

}  // namespace hallo
