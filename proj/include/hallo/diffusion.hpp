#pragma once

#include <filesystem>
#include <functional>

#include "hallo/encoders.hpp"
#include "hallo/io.hpp"

namespace hallo {

struct NoiseSchedule {
    std::size_t t_total = 100;
    double beta_start = 1e-4, beta_end = 2e-2;
    std::size_t ddim_steps = 10;
    std::vector<double> betas;       // linear beta_start -> beta_end
    std::vector<double> alpha_bars;  // cumulative products of (1 - beta)

    static NoiseSchedule make(std::size_t t_total = 100, std::size_t ddim_steps = 10,
                              double beta_start = 1e-4, double beta_end = 2e-2) {
        NoiseSchedule s;
        s.t_total = t_total;
        s.beta_start = beta_start;
        s.beta_end = beta_end;
        s.ddim_steps = ddim_steps;
        require(t_total >= 1, "schedule: T must be >= 1");
        require(ddim_steps >= 1 && ddim_steps <= t_total, "schedule: ddim_steps must be in [1, T]");
        require(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end,
                "schedule: betas must satisfy 0 < start <= end < 1");
        s.betas.resize(t_total);
        s.alpha_bars.resize(t_total);
        double cum = 1.0;
        for (std::size_t t = 0; t < t_total; ++t) {
            double frac = t_total == 1 ? 0.0 : double(t) / double(t_total - 1);
            s.betas[t] = beta_start + (beta_end - beta_start) * frac;
            cum *= 1.0 - s.betas[t];
            s.alpha_bars[t] = cum;
        }
        s.validate();
        return s;
    }

    void validate() const {
        require(betas.size() == t_total && alpha_bars.size() == t_total, "schedule: length mismatch");
        for (std::size_t t = 0; t < t_total; ++t) {
            require(betas[t] > 0.0 && betas[t] < 1.0, "schedule: beta out of (0,1)");
            require(alpha_bars[t] > 0.0 && alpha_bars[t] < 1.0, "schedule: alpha_bar out of (0,1)");
            if (t > 0)
                require(alpha_bars[t] < alpha_bars[t - 1], "schedule: alpha_bars must decrease");
        }
    }

    // strictly increasing sub-sequence ending at T-1
    std::vector<std::size_t> ddim_sequence() const {
        std::vector<std::size_t> seq(ddim_steps);
        for (std::size_t i = 0; i < ddim_steps; ++i)
            seq[i] = (i + 1) * t_total / ddim_steps - 1;
        for (std::size_t i = 1; i < seq.size(); ++i)
            require(seq[i] > seq[i - 1], "schedule: ddim sub-sequence not strictly increasing");
        require(seq.back() == t_total - 1, "schedule: ddim sub-sequence must end at T-1");
        return seq;
    }
};

struct GuidanceScales {
    double lambda_a = 3.5;
    double lambda_i = 3.5;

    void validate() const {
        require(std::isfinite(lambda_a) && std::isfinite(lambda_i) && lambda_a >= 0.0 &&
                    lambda_i >= 0.0,
                "guidance scales must be finite and non-negative");
    }
};

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) noise
inline Tensor forward_diffuse(const Tensor& z0, std::size_t t, const Tensor& noise,
                              const NoiseSchedule& sched) {
    require(t < sched.t_total, "forward_diffuse: timestep " + std::to_string(t) +
                                   " outside [0, " + std::to_string(sched.t_total) + ")");
    require(noise.shape() == z0.shape(), "forward_diffuse: noise shape " +
                                             shape_str(noise.shape()) + " != z0 shape " +
                                             shape_str(z0.shape()));
    double ab = sched.alpha_bars[t];
    return add(scale(z0, std::sqrt(ab)), scale(noise, std::sqrt(1.0 - ab)));
}

// x0_hat = (x_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t)
inline Tensor invert_diffuse(const Tensor& z_t, std::size_t t, const Tensor& eps,
                             const NoiseSchedule& sched) {
    require(t < sched.t_total, "invert_diffuse: timestep out of range");
    double ab = sched.alpha_bars[t];
    return scale(sub(z_t, scale(eps, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
}

// mean squared error between predicted and true noise across frames
inline Tensor epsilon_mse(const std::vector<Tensor>& eps_hat, const std::vector<Tensor>& eps) {
    require(!eps_hat.empty() && eps_hat.size() == eps.size(), "epsilon_mse: frame count mismatch");
    Tensor acc = Tensor::scalar(0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        Tensor d = sub(eps_hat[i], eps[i]);
        acc = add(acc, sum(hadamard(d, d)));
        n += eps[i].size();
    }
    return scale(acc, 1.0 / double(n));
}

// model callback: predicted noise for a noisy frame block under a condition
using EpsModel = std::function<std::vector<Tensor>(const std::vector<Tensor>& z_t, std::size_t t,
                                                   const ConditionBundle& cond)>;

// Eq. 2 estimator for one clip: shared t ~ U[0, T), fresh standard-normal eps
inline Tensor training_loss(const std::vector<Tensor>& z0_frames, const ConditionBundle& cond,
                            const NoiseSchedule& sched, const EpsModel& model, Rng& rng,
                            std::size_t* t_out = nullptr) {
    require(!z0_frames.empty(), "training_loss: empty clip");
    std::size_t t = rng.index(sched.t_total);
    std::vector<Tensor> noise, z_t;
    noise.reserve(z0_frames.size());
    for (const Tensor& z0 : z0_frames) {
        Tensor n = Tensor::randn(z0.shape(), rng);
        noise.push_back(n);
        z_t.push_back(forward_diffuse(z0.detach(), t, n, sched));
    }
    if (t_out) *t_out = t;
    return epsilon_mse(model(z_t, t, cond), noise);
}

// Each of {reference/face, audio, motion} independently dropped with p_drop.
inline ConditionBundle condition_dropout(const ConditionBundle& cond, double p_drop, Rng& rng) {
    require(p_drop >= 0.0 && p_drop <= 1.0, "condition_dropout: p_drop outside [0,1]");
    ConditionBundle out = cond;
    out.drop_face = cond.drop_face || rng.uniform() < p_drop;
    out.drop_audio = cond.drop_audio || rng.uniform() < p_drop;
    out.drop_motion = cond.drop_motion || rng.uniform() < p_drop;
    return out;
}

// eps_hat = eps_uu + lambda_i (eps_iu - eps_uu) + lambda_a (eps_ia - eps_iu)
// where subscripts are (image-reference, audio) conditioning, u = null.
inline std::vector<Tensor> cfg_epsilon(const EpsModel& model, const std::vector<Tensor>& z_t,
                                       std::size_t t, const ConditionBundle& cond,
                                       const GuidanceScales& scales) {
    scales.validate();
    ConditionBundle ia = cond;
    if (scales.lambda_a == 1.0 && scales.lambda_i == 1.0) return model(z_t, t, ia);
    ConditionBundle uu = cond, iu = cond;
    uu.drop_face = uu.drop_audio = true;
    iu.drop_audio = true;
    std::vector<Tensor> e_uu = model(z_t, t, uu);
    if (scales.lambda_a == 0.0 && scales.lambda_i == 0.0) return e_uu;
    std::vector<Tensor> e_iu = model(z_t, t, iu);
    std::vector<Tensor> e_ia = model(z_t, t, ia);
    std::vector<Tensor> out(z_t.size());
    for (std::size_t j = 0; j < z_t.size(); ++j)
        out[j] = add(e_uu[j], add(scale(sub(e_iu[j], e_uu[j]), scales.lambda_i),
                                  scale(sub(e_ia[j], e_iu[j]), scales.lambda_a)));
    return out;
}

// Deterministic DDIM (eta = 0) from a seeded z_T over the sub-sequence.
// Optionally dumps each step's latents as HTNS files.
inline std::vector<Tensor> ddim_sample(const EpsModel& model, const ConditionBundle& cond,
                                       const NoiseSchedule& sched, const GuidanceScales& scales,
                                       const Shape& frame_shape, std::size_t s_frames,
                                       std::uint64_t seed,
                                       const std::filesystem::path& dump_dir = {}) {
    sched.validate();
    require(s_frames >= 1, "ddim_sample: need at least one frame");
    Rng rng(seed);
    std::vector<Tensor> x(s_frames);
    for (std::size_t j = 0; j < s_frames; ++j) x[j] = Tensor::randn(frame_shape, rng);

    std::vector<std::size_t> seq = sched.ddim_sequence();
    for (std::size_t i = seq.size(); i-- > 0;) {
        std::size_t t = seq[i];
        std::vector<Tensor> eps = cfg_epsilon(model, x, t, cond, scales);
        std::vector<Tensor> x0(s_frames), xn(s_frames);
        for (std::size_t j = 0; j < s_frames; ++j)
            x0[j] = invert_diffuse(x[j], t, eps[j], sched).detach();
        if (i == 0) {
            x = x0;
        } else {
            double ab_prev = sched.alpha_bars[seq[i - 1]];
            for (std::size_t j = 0; j < s_frames; ++j)
                xn[j] = add(scale(x0[j], std::sqrt(ab_prev)),
                            scale(eps[j], std::sqrt(1.0 - ab_prev)))
                            .detach();
            x = xn;
        }
        if (!dump_dir.empty()) {
            std::filesystem::create_directories(dump_dir);
            for (std::size_t j = 0; j < s_frames; ++j)
                save_htns(dump_dir / ("step" + std::to_string(t) + "_frame" + std::to_string(j) +
                                      ".htns"),
                          x[j]);
        }
    }
    return x;
}

}  // namespace hallo
