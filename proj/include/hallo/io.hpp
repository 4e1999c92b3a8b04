#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "hallo/tensor.hpp"

namespace hallo {

// HTNS tensor file: magic "HTNS", u32 LE rank, rank x u64 LE extents,
// row-major f32 LE payload. Values are widened to f64 on load.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline void save_htns(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    require(bool(os), "save_htns: cannot open " + path.string());
    os.write("HTNS", 4);
    detail::put_u32(os, std::uint32_t(t.rank()));
    for (std::size_t e : t.shape()) detail::put_u64(os, e);
    static_assert(sizeof(float) == 4);
    std::vector<float> payload(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) payload[i] = float(t[i]);
    // f32 is little-endian on every supported target
    os.write(reinterpret_cast<const char*>(payload.data()),
             std::streamsize(payload.size() * sizeof(float)));
    require(bool(os), "save_htns: write failed for " + path.string());
}

inline Tensor load_htns(const std::filesystem::path& path, bool requires_grad = false) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), "load_htns: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    require(bool(is) && std::string(magic, 4) == "HTNS",
            "load_htns: bad magic in " + path.string());
    std::uint32_t rank = detail::get_u32(is);
    require(rank <= 8, "load_htns: implausible rank in " + path.string());
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = std::size_t(detail::get_u64(is));
    std::vector<float> payload(numel(shape));
    is.read(reinterpret_cast<char*>(payload.data()),
            std::streamsize(payload.size() * sizeof(float)));
    require(bool(is), "load_htns: truncated payload in " + path.string());
    std::vector<double> data(payload.begin(), payload.end());
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

// PPM (P6) image ingestion; values mapped to [0,1], returned as [3,H,W].
inline Tensor load_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), "load_ppm: cannot open " + path.string());
    std::string magic;
    is >> magic;
    require(magic == "P6", "load_ppm: not a P6 file: " + path.string());
    auto skip_ws_comments = [&is]() {
        while (true) {
            int c = is.peek();
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
    };
    skip_ws_comments();
    std::size_t w, h;
    int maxval;
    is >> w;
    skip_ws_comments();
    is >> h;
    skip_ws_comments();
    is >> maxval;
    require(maxval == 255, "load_ppm: only maxval 255 supported: " + path.string());
    is.get();  // single whitespace before payload
    std::vector<unsigned char> raw(w * h * 3);
    is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    require(bool(is), "load_ppm: truncated payload in " + path.string());
    std::vector<double> data(3 * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                data[c * h * w + y * w + x] = double(raw[(y * w + x) * 3 + c]) / 255.0;
    return Tensor({3, h, w}, std::move(data));
}

// [3,H,W] in [0,1] -> PPM P6
inline void save_ppm(const std::filesystem::path& path, const Tensor& img) {
    require(img.rank() == 3 && img.extent(0) == 3,
            "save_ppm: need [3,H,W] tensor, got " + shape_str(img.shape()));
    std::size_t h = img.extent(1), w = img.extent(2);
    std::ofstream os(path, std::ios::binary);
    require(bool(os), "save_ppm: cannot open " + path.string());
    os << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(w * h * 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double v = std::clamp(img[c * h * w + y * w + x], 0.0, 1.0);
                raw[(y * w + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
    os.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
}

// [H,W] in [0,1] -> PGM P5, used for mask overlays
inline void save_pgm(const std::filesystem::path& path, const Tensor& img) {
    require(img.rank() == 2, "save_pgm: need [H,W] tensor, got " + shape_str(img.shape()));
    std::size_t h = img.extent(0), w = img.extent(1);
    std::ofstream os(path, std::ios::binary);
    require(bool(os), "save_pgm: cannot open " + path.string());
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(w * h);
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw[i] = static_cast<unsigned char>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
    os.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
}

inline std::uint64_t file_digest(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), "file_digest: cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
        h = fnv1a(buf, std::size_t(is.gcount()), h);
    return h;
}

}  // namespace hallo
