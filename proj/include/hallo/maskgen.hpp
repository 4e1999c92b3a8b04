#pragma once

#include <filesystem>
#include <fstream>

#include "hallo/tensor.hpp"

namespace hallo {

struct Landmark {
    double x = 0.0;
    double y = 0.0;
};

struct LandmarkSet {
    std::vector<Landmark> lip_points;
    std::vector<Landmark> exp_points;
    std::size_t image_h = 0;
    std::size_t image_w = 0;

    void validate() const {
        require(image_h > 0 && image_w > 0, "landmarks: image size must be positive");
        require(!lip_points.empty(), "landmarks: lip point list is empty");
        require(!exp_points.empty(), "landmarks: exp point list is empty");
        auto check = [&](const std::vector<Landmark>& pts, const char* name) {
            for (const Landmark& p : pts)
                require(p.x >= 0.0 && p.x < double(image_w) && p.y >= 0.0 && p.y < double(image_h),
                        std::string("landmarks: ") + name + " coordinate (" +
                            std::to_string(p.x) + "," + std::to_string(p.y) +
                            ") outside [0," + std::to_string(image_w) + ")x[0," +
                            std::to_string(image_h) + ")");
        };
        check(lip_points, "lip");
        check(exp_points, "exp");
    }
};

// Lip/expression/pose mask triple on the latent grid, plus the raw boxes.
struct RegionMasks {
    Tensor y_lip, y_exp;           // [H_z, W_z], values exactly 0 or 1
    Tensor m_lip, m_exp, m_pose;   // [H_z, W_z]
};

// Axis-aligned bounding box of the points, scaled to latent coordinates.
// A cell is set when its center lies inside the scaled box (boundary
// inclusive); additionally the cell containing each scaled point is set,
// which keeps degenerate boxes non-empty and makes the mask monotone under
// adding points.
inline Tensor rasterize_box_mask(const std::vector<Landmark>& points, std::size_t image_h,
                                 std::size_t image_w, std::size_t latent_h,
                                 std::size_t latent_w) {
    require(!points.empty(), "rasterize_box_mask: empty point list");
    require(latent_h > 0 && latent_w > 0, "rasterize_box_mask: degenerate latent size");
    require(image_h > 0 && image_w > 0, "rasterize_box_mask: degenerate image size");

    double sx = double(latent_w) / double(image_w);
    double sy = double(latent_h) / double(image_h);

    double xmin = points[0].x, xmax = points[0].x, ymin = points[0].y, ymax = points[0].y;
    for (const Landmark& p : points) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    double bx0 = xmin * sx, bx1 = xmax * sx;
    double by0 = ymin * sy, by1 = ymax * sy;

    Tensor mask = Tensor::zeros({latent_h, latent_w});
    std::vector<double>& m = mask.mutable_data();
    for (std::size_t i = 0; i < latent_h; ++i)
        for (std::size_t j = 0; j < latent_w; ++j) {
            double cx = (double(j) + 0.5);
            double cy = (double(i) + 0.5);
            if (cx >= bx0 && cx <= bx1 && cy >= by0 && cy <= by1) m[i * latent_w + j] = 1.0;
        }
    auto clamp_cell = [](double v, std::size_t extent) {
        auto c = std::int64_t(std::floor(v));
        if (c < 0) c = 0;
        if (c >= std::int64_t(extent)) c = std::int64_t(extent) - 1;
        return std::size_t(c);
    };
    for (const Landmark& p : points) {
        std::size_t j = clamp_cell(p.x * sx, latent_w);
        std::size_t i = clamp_cell(p.y * sy, latent_h);
        m[i * latent_w + j] = 1.0;
    }
    return mask;
}

// M_lip = Y_lip; M_exp = (1 - M_lip) o Y_exp; M_pose = 1 - M_exp.
inline RegionMasks derive_region_masks(const LandmarkSet& lm, std::size_t latent_h,
                                       std::size_t latent_w) {
    lm.validate();
    RegionMasks rm;
    rm.y_lip = rasterize_box_mask(lm.lip_points, lm.image_h, lm.image_w, latent_h, latent_w);
    rm.y_exp = rasterize_box_mask(lm.exp_points, lm.image_h, lm.image_w, latent_h, latent_w);
    std::size_t n = latent_h * latent_w;
    rm.m_lip = rm.y_lip.detach();
    rm.m_exp = Tensor::zeros({latent_h, latent_w});
    rm.m_pose = Tensor::zeros({latent_h, latent_w});
    for (std::size_t i = 0; i < n; ++i) {
        double me = (1.0 - rm.m_lip[i]) * rm.y_exp[i];
        rm.m_exp.mutable_data()[i] = me;
        rm.m_pose.mutable_data()[i] = 1.0 - me;
    }
    return rm;
}

// Max-pool downsampling to an interior denoiser resolution: a coarse cell
// is 1 if any covered fine cell is 1.
inline Tensor downsample_mask(const Tensor& mask, std::size_t out_h, std::size_t out_w) {
    require(mask.rank() == 2, "downsample_mask: need [H,W] mask");
    std::size_t h = mask.extent(0), w = mask.extent(1);
    require(out_h > 0 && out_w > 0 && h % out_h == 0 && w % out_w == 0,
            "downsample_mask: " + shape_str(mask.shape()) + " not divisible to [" +
                std::to_string(out_h) + "," + std::to_string(out_w) + "]");
    std::size_t fh = h / out_h, fw = w / out_w;
    Tensor out = Tensor::zeros({out_h, out_w});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
            if (mask[i * w + j] != 0.0) out.mutable_data()[(i / fh) * out_w + (j / fw)] = 1.0;
    return out;
}

// Complement mask kept consistent under max-pooling: M_pose at a coarse
// resolution is recomputed as 1 - M_exp_coarse so the partition invariant
// survives downsampling.
inline RegionMasks downsample_region_masks(const RegionMasks& rm, std::size_t out_h,
                                           std::size_t out_w) {
    RegionMasks out;
    out.y_lip = downsample_mask(rm.y_lip, out_h, out_w);
    out.y_exp = downsample_mask(rm.y_exp, out_h, out_w);
    out.m_lip = downsample_mask(rm.m_lip, out_h, out_w);
    out.m_exp = downsample_mask(rm.m_exp, out_h, out_w);
    // re-impose disjointness (a coarse cell can cover both lip and exp cells)
    std::size_t n = out_h * out_w;
    out.m_pose = Tensor::zeros({out_h, out_w});
    for (std::size_t i = 0; i < n; ++i) {
        double me = (1.0 - out.m_lip[i]) * out.m_exp[i];
        out.m_exp.mutable_data()[i] = me;
        out.m_pose.mutable_data()[i] = 1.0 - me;
    }
    return out;
}

// Landmark text format:
//   # comment lines and blank lines are ignored
//   image_size <W> <H>
//   lip <N>
//   <x> <y>          (N lines)
//   exp <M>
//   <x> <y>          (M lines)
inline LandmarkSet load_landmarks(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(bool(is), "load_landmarks: cannot open " + path.string());
    LandmarkSet lm;
    std::string line;
    std::size_t lineno = 0;
    std::vector<Landmark>* pending = nullptr;
    std::size_t pending_count = 0;
    bool have_size = false;
    while (std::getline(is, line)) {
        ++lineno;
        std::string trimmed = line;
        auto pos = trimmed.find('#');
        if (pos != std::string::npos) trimmed = trimmed.substr(0, pos);
        std::istringstream ls(trimmed);
        std::string first;
        if (!(ls >> first)) continue;
        auto parse_fail = [&](const std::string& what) {
            fail("load_landmarks: " + path.string() + ":" + std::to_string(lineno) + ": " + what);
        };
        if (pending && pending_count > 0) {
            double x, y;
            std::istringstream ps(trimmed);
            if (!(ps >> x >> y)) parse_fail("expected '<x> <y>' point line");
            pending->push_back({x, y});
            if (--pending_count == 0) pending = nullptr;
            continue;
        }
        if (first == "image_size") {
            long w, h;
            if (!(ls >> w >> h) || w <= 0 || h <= 0) parse_fail("expected 'image_size <W> <H>'");
            lm.image_w = std::size_t(w);
            lm.image_h = std::size_t(h);
            have_size = true;
        } else if (first == "lip" || first == "exp") {
            long n;
            if (!(ls >> n) || n < 0) parse_fail("expected '" + first + " <count>'");
            pending = first == "lip" ? &lm.lip_points : &lm.exp_points;
            pending_count = std::size_t(n);
            if (pending_count == 0) pending = nullptr;
        } else {
            parse_fail("unknown field '" + first + "'");
        }
    }
    require(have_size, "load_landmarks: " + path.string() + ": missing image_size");
    require(pending == nullptr, "load_landmarks: " + path.string() + ": truncated point list");
    lm.validate();
    return lm;
}

inline void save_landmarks(const std::filesystem::path& path, const LandmarkSet& lm) {
    std::ofstream os(path);
    require(bool(os), "save_landmarks: cannot open " + path.string());
    os << "image_size " << lm.image_w << " " << lm.image_h << "\n";
    os << "lip " << lm.lip_points.size() << "\n";
    for (const Landmark& p : lm.lip_points) os << p.x << " " << p.y << "\n";
    os << "exp " << lm.exp_points.size() << "\n";
    for (const Landmark& p : lm.exp_points) os << p.x << " " << p.y << "\n";
}

}  // namespace hallo
