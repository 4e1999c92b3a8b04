#pragma once

#include "hallo/tensor.hpp"

namespace hallo {

// ---- dense symmetric eigendecomposition (cyclic Jacobi) ----

namespace detail_eig {

// A is n*n row-major symmetric; on return eigvals holds the spectrum and
// vecs the eigenvectors as columns (vecs[i*n+k] = component i of vector k).
inline void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& eigvals,
                         std::vector<double>& vecs) {
    vecs.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) vecs[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (std::abs(apq) < 1e-18) continue;
                double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = vecs[k * n + p], vkq = vecs[k * n + q];
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
    }
    eigvals.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = a[i * n + i];
}

inline std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b,
                                     std::size_t n) {
    std::vector<double> c(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            double aik = a[i * n + k];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aik * b[k * n + j];
        }
    return c;
}

// principal square root of a symmetric PSD matrix; eigenvalues below 0 clamped
inline std::vector<double> psd_sqrt(const std::vector<double>& a, std::size_t n) {
    std::vector<double> w, v;
    jacobi_eigen(a, n, w, v);
    std::vector<double> r(n * n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double s = w[k] > 0.0 ? std::sqrt(w[k]) : 0.0;
        if (s == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) r[i * n + j] += s * v[i * n + k] * v[j * n + k];
    }
    return r;
}

}  // namespace detail_eig

// ---- feature distributions ----

struct FeatureSet {
    Tensor features;    // [N, D]
    Tensor mean;        // [D]
    Tensor covariance;  // [D, D], unbiased

    static FeatureSet from_features(const Tensor& f) {
        require(f.rank() == 2, "FeatureSet: expected [N, D] features, got " + shape_str(f.shape()));
        std::size_t n = f.extent(0), d = f.extent(1);
        require(n >= 2, "FeatureSet: need at least 2 samples, got " + std::to_string(n));
        require(f.all_finite(), "FeatureSet: non-finite features");
        FeatureSet fs;
        fs.features = f;
        fs.mean = Tensor::zeros({d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) fs.mean.mutable_data()[j] += f[i * d + j];
        for (std::size_t j = 0; j < d; ++j) fs.mean.mutable_data()[j] /= double(n);
        fs.covariance = Tensor::zeros({d, d});
        auto& cov = fs.covariance.mutable_data();
        std::vector<double> cen(n * d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) cen[i * d + j] = f[i * d + j] - fs.mean[j];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double cij = cen[i * d + j];
                if (cij == 0.0) continue;
                for (std::size_t k = j; k < d; ++k) cov[j * d + k] += cij * cen[i * d + k];
            }
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = j; k < d; ++k) {
                cov[j * d + k] /= double(n - 1);
                cov[k * d + j] = cov[j * d + k];
            }
        return fs;
    }

    std::size_t dim() const { return mean.extent(0); }

    // eigenvalues must sit above -1e-8
    void check_psd() const {
        std::size_t d = dim();
        std::vector<double> a(covariance.data().begin(), covariance.data().end());
        std::vector<double> w, v;
        detail_eig::jacobi_eigen(a, d, w, v);
        for (double e : w)
            require(e > -1e-8, "FeatureSet: covariance not PSD (eigenvalue " + std::to_string(e) + ")");
    }
};

// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)
inline double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    require(a.dim() == b.dim(), "frechet_distance: dimension mismatch " +
                                    std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    std::size_t d = a.dim();
    double md = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double diff = a.mean[j] - b.mean[j];
        md += diff * diff;
    }
    std::vector<double> sa(a.covariance.data().begin(), a.covariance.data().end());
    std::vector<double> sb(b.covariance.data().begin(), b.covariance.data().end());
    double tr = 0.0;
    for (std::size_t j = 0; j < d; ++j) tr += sa[j * d + j] + sb[j * d + j];
    std::vector<double> ra = detail_eig::psd_sqrt(sa, d);
    std::vector<double> m = detail_eig::matmul_sq(detail_eig::matmul_sq(ra, sb, d), ra, d);
    // symmetrize against round-off before taking the spectrum
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            double s = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = m[j * d + i] = s;
        }
    std::vector<double> w, v;
    detail_eig::jacobi_eigen(m, d, w, v);
    double cross = 0.0;
    for (double e : w) cross += e > 0.0 ? std::sqrt(e) : 0.0;
    double fd = md + tr - 2.0 * cross;
    return fd > 0.0 ? fd : 0.0;
}

// ---- hand-crafted feature extractors (documented; comparable only within
// this artifact) ----

// per-frame D = 64: 4x4 RGB block means (48), 2x2 luminance stds (4), global
// channel means (3), global channel stds (3), 6 horizontal luminance bands
inline std::vector<double> frame_feature(const Tensor& img) {
    require(img.rank() == 3 && img.extent(0) == 3, "frame_feature: expected [3,H,W] image");
    std::size_t h = img.extent(1), w = img.extent(2);
    std::vector<double> f;
    f.reserve(64);
    auto block_mean = [&](std::size_t c, std::size_t by, std::size_t bx, std::size_t grid) {
        std::size_t y0 = by * h / grid, y1 = (by + 1) * h / grid;
        std::size_t x0 = bx * w / grid, x1 = (bx + 1) * w / grid;
        double s = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) s += img[c * h * w + y * w + x];
        return s / double((y1 - y0) * (x1 - x0));
    };
    auto lum = [&](std::size_t y, std::size_t x) {
        std::size_t i = y * w + x;
        return (img[i] + img[h * w + i] + img[2 * h * w + i]) / 3.0;
    };
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t by = 0; by < 4; ++by)
            for (std::size_t bx = 0; bx < 4; ++bx) f.push_back(block_mean(c, by, bx, 4));
    for (std::size_t by = 0; by < 2; ++by)
        for (std::size_t bx = 0; bx < 2; ++bx) {
            std::size_t y0 = by * h / 2, y1 = (by + 1) * h / 2;
            std::size_t x0 = bx * w / 2, x1 = (bx + 1) * w / 2;
            double m = 0.0, m2 = 0.0, cnt = double((y1 - y0) * (x1 - x0));
            for (std::size_t y = y0; y < y1; ++y)
                for (std::size_t x = x0; x < x1; ++x) {
                    double v = lum(y, x);
                    m += v;
                    m2 += v * v;
                }
            m /= cnt;
            f.push_back(std::sqrt(std::max(0.0, m2 / cnt - m * m)));
        }
    for (std::size_t c = 0; c < 3; ++c) f.push_back(block_mean(c, 0, 0, 1));
    for (std::size_t c = 0; c < 3; ++c) {
        double m = block_mean(c, 0, 0, 1), m2 = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) m2 += img[c * h * w + i] * img[c * h * w + i];
        m2 /= double(h * w);
        f.push_back(std::sqrt(std::max(0.0, m2 - m * m)));
    }
    for (std::size_t band = 0; band < 6; ++band) {
        std::size_t y0 = band * h / 6, y1 = (band + 1) * h / 6;
        double s = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = 0; x < w; ++x) s += lum(y, x);
        f.push_back(s / double((y1 - y0) * w));
    }
    require(f.size() == 64, "frame_feature: internal dimension error");
    return f;
}

inline FeatureSet clip_features(const std::vector<Tensor>& frames) {
    require(frames.size() >= 2, "clip_features: need at least 2 frames, got " +
                                    std::to_string(frames.size()));
    Tensor f = Tensor::zeros({frames.size(), 64});
    for (std::size_t i = 0; i < frames.size(); ++i) {
        std::vector<double> row = frame_feature(frames[i]);
        std::copy(row.begin(), row.end(), f.mutable_data().begin() + std::ptrdiff_t(i * 64));
    }
    return FeatureSet::from_features(f);
}

// video variant: one 64-D vector per clip — 48 RGB block means of the
// temporal mean frame plus 16 luminance block means of the mean absolute
// temporal difference image
inline std::vector<double> video_feature(const std::vector<Tensor>& frames) {
    require(frames.size() >= 2, "video_feature: need at least 2 frames per clip");
    std::size_t h = frames[0].extent(1), w = frames[0].extent(2);
    Tensor meanf = Tensor::zeros({3, h, w});
    Tensor diff = Tensor::zeros({3, h, w});
    for (std::size_t i = 0; i < frames.size(); ++i) {
        require(frames[i].shape() == frames[0].shape(), "video_feature: frame shape mismatch");
        for (std::size_t j = 0; j < meanf.size(); ++j) {
            meanf.mutable_data()[j] += frames[i][j] / double(frames.size());
            if (i > 0)
                diff.mutable_data()[j] +=
                    std::abs(frames[i][j] - frames[i - 1][j]) / double(frames.size() - 1);
        }
    }
    std::vector<double> mf = frame_feature(meanf);
    std::vector<double> out(mf.begin(), mf.begin() + 48);
    auto lum_block = [&](std::size_t by, std::size_t bx) {
        std::size_t y0 = by * h / 4, y1 = (by + 1) * h / 4;
        std::size_t x0 = bx * w / 4, x1 = (bx + 1) * w / 4;
        double s = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) {
                std::size_t i = y * w + x;
                s += (diff[i] + diff[h * w + i] + diff[2 * h * w + i]) / 3.0;
            }
        return s / double((y1 - y0) * (x1 - x0));
    };
    for (std::size_t by = 0; by < 4; ++by)
        for (std::size_t bx = 0; bx < 4; ++bx) out.push_back(lum_block(by, bx));
    return out;
}

inline FeatureSet video_features(const std::vector<std::vector<Tensor>>& clips) {
    require(clips.size() >= 2, "video_features: need at least 2 clips");
    Tensor f = Tensor::zeros({clips.size(), 64});
    for (std::size_t i = 0; i < clips.size(); ++i) {
        std::vector<double> row = video_feature(clips[i]);
        std::copy(row.begin(), row.end(), f.mutable_data().begin() + std::ptrdiff_t(i * 64));
    }
    return FeatureSet::from_features(f);
}

// ---- lip-sync proxy (NOT comparable to SyncNet scores) ----

struct SyncScores {
    double sync_c;  // max offset-correlation, higher better
    double sync_d;  // RMS gap between z-scored sequences at the best offset, lower better
    int best_offset;
};

namespace detail_sync {

// Pearson correlation of x[i+off] vs y[i] over the overlapping range
inline bool offset_corr(const std::vector<double>& x, const std::vector<double>& y, int off,
                        double& corr_out) {
    int n = int(y.size());
    int lo = std::max(0, -off), hi = std::min(n, n - off);
    int m = hi - lo;
    if (m < 3) return false;
    double mx = 0, my = 0;
    for (int i = lo; i < hi; ++i) {
        mx += x[std::size_t(i + off)];
        my += y[std::size_t(i)];
    }
    mx /= m;
    my /= m;
    double num = 0, dx = 0, dy = 0;
    for (int i = lo; i < hi; ++i) {
        double a = x[std::size_t(i + off)] - mx, b = y[std::size_t(i)] - my;
        num += a * b;
        dx += a * a;
        dy += b * b;
    }
    if (dx <= 0.0 || dy <= 0.0) {
        corr_out = 0.0;
        return true;
    }
    corr_out = num / std::sqrt(dx * dy);
    return true;
}

inline double zscore_rms_gap(const std::vector<double>& x, const std::vector<double>& y, int off) {
    int n = int(y.size());
    int lo = std::max(0, -off), hi = std::min(n, n - off);
    int m = hi - lo;
    std::vector<double> a, b;
    for (int i = lo; i < hi; ++i) {
        a.push_back(x[std::size_t(i + off)]);
        b.push_back(y[std::size_t(i)]);
    }
    auto z = [m](std::vector<double>& v) {
        double mu = 0, s2 = 0;
        for (double t : v) mu += t;
        mu /= m;
        for (double t : v) s2 += (t - mu) * (t - mu);
        double sd = std::sqrt(s2 / m);
        for (double& t : v) t = sd > 0.0 ? (t - mu) / sd : 0.0;
    };
    z(a);
    z(b);
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += (a[std::size_t(i)] - b[std::size_t(i)]) * (a[std::size_t(i)] - b[std::size_t(i)]);
    return std::sqrt(s / m);
}

}  // namespace detail_sync

// per-frame audio energy: mean |embedding coordinate|
inline std::vector<double> audio_energy(const Tensor& audio_embed) {
    require(audio_embed.rank() == 2, "audio_energy: expected [S, D_a]");
    std::size_t s = audio_embed.extent(0), d = audio_embed.extent(1);
    std::vector<double> e(s, 0.0);
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < d; ++j) e[i] += std::abs(audio_embed[i * d + j]);
        e[i] /= double(d);
    }
    return e;
}

// per-frame lip motion energy: mean absolute frame difference inside the
// lip mask upsampled to the pixel grid (frame 0 reuses the first diff)
inline std::vector<double> lip_motion_energy(const std::vector<Tensor>& frames,
                                             const Tensor& lip_mask) {
    require(frames.size() >= 2, "lip_motion_energy: need at least 2 frames");
    require(lip_mask.rank() == 2, "lip_motion_energy: expected [h,w] mask");
    std::size_t h = frames[0].extent(1), w = frames[0].extent(2);
    std::size_t mh = lip_mask.extent(0), mw = lip_mask.extent(1);
    require(h % mh == 0 && w % mw == 0, "lip_motion_energy: mask does not divide the image grid");
    std::size_t fy = h / mh, fx = w / mw;
    double area = 0.0;
    for (std::size_t i = 0; i < lip_mask.size(); ++i) area += lip_mask[i];
    require(area > 0.0, "lip_motion_energy: empty lip mask");
    std::vector<double> e(frames.size());
    for (std::size_t t = 1; t < frames.size(); ++t) {
        double s = 0.0, cnt = 0.0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                if (lip_mask[(y / fy) * mw + x / fx] == 0.0) continue;
                for (std::size_t c = 0; c < 3; ++c) {
                    std::size_t i = c * h * w + y * w + x;
                    s += std::abs(frames[t][i] - frames[t - 1][i]);
                }
                cnt += 3.0;
            }
        e[t] = s / cnt;
    }
    e[0] = e[1];
    return e;
}

inline SyncScores sync_scores(const std::vector<double>& audio, const std::vector<double>& lip) {
    require(audio.size() == lip.size(), "sync_scores: sequence length mismatch");
    require(audio.size() >= 5, "sync_scores: need at least 5 frames");
    // offset k > 0 means the lip sequence lags the audio by k frames
    SyncScores out{-2.0, 0.0, 0};
    for (int off = -5; off <= 5; ++off) {
        double c;
        if (!detail_sync::offset_corr(audio, lip, -off, c)) continue;
        if (c > out.sync_c) {
            out.sync_c = c;
            out.best_offset = off;
        }
    }
    require(out.sync_c > -2.0, "sync_scores: sequences too short for any offset");
    out.sync_d = detail_sync::zscore_rms_gap(audio, lip, -out.best_offset);
    return out;
}

inline SyncScores sync_proxy(const Tensor& audio_embed, const std::vector<Tensor>& frames,
                             const Tensor& lip_mask) {
    return sync_scores(audio_energy(audio_embed), lip_motion_energy(frames, lip_mask));
}

}  // namespace hallo
