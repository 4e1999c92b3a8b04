#pragma once

#include <map>
#include <tuple>

#include "hallo/tensor.hpp"

namespace hallo {

// 3x3 convolution expressed through the engine primitives: an im2col gather
// (zero padding via index -1) followed by a matmul against the flattened
// kernel. Weight layout is [C_out, C_in * 9].
struct ConvParams {
    Tensor weight;  // [C_out, C_in*9]
    Tensor bias;    // [C_out]
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;

    static ConvParams init(std::size_t out_c, std::size_t in_c, Rng& rng, double gain = 1.0) {
        ConvParams p;
        p.weight = Tensor::randn({out_c, in_c * 9}, rng, gain / std::sqrt(double(in_c * 9)), true);
        p.bias = Tensor::zeros({out_c}, true);
        p.in_channels = in_c;
        p.out_channels = out_c;
        return p;
    }
};

namespace detail_conv {

inline const std::vector<std::int64_t>& im2col_indices(std::size_t c, std::size_t h, std::size_t w,
                                                       std::size_t stride) {
    using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;
    thread_local std::map<Key, std::vector<std::int64_t>> cache;
    Key key{c, h, w, stride};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    std::size_t ho = (h + 2 - 3) / stride + 1;
    std::size_t wo = (w + 2 - 3) / stride + 1;
    std::vector<std::int64_t> idx;
    idx.reserve(ho * wo * c * 9);
    for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox)
            for (std::size_t ci = 0; ci < c; ++ci)
                for (int ky = -1; ky <= 1; ++ky)
                    for (int kx = -1; kx <= 1; ++kx) {
                        std::int64_t iy = std::int64_t(oy * stride) + ky;
                        std::int64_t ix = std::int64_t(ox * stride) + kx;
                        if (iy < 0 || ix < 0 || iy >= std::int64_t(h) || ix >= std::int64_t(w))
                            idx.push_back(-1);
                        else
                            idx.push_back(std::int64_t(ci * h * w) + iy * std::int64_t(w) + ix);
                    }
    return cache.emplace(key, std::move(idx)).first->second;
}

}  // namespace detail_conv

// padding 1, kernel 3; stride 1 preserves the spatial size, stride 2 halves it
inline Tensor conv3x3_forward(const ConvParams& p, const Tensor& x, std::size_t stride = 1) {
    require(x.rank() == 3, "conv3x3: need [C,H,W] input, got " + shape_str(x.shape()));
    require(x.extent(0) == p.in_channels,
            "conv3x3: channel mismatch, input has " + std::to_string(x.extent(0)) +
                ", weight expects " + std::to_string(p.in_channels));
    std::size_t h = x.extent(1), w = x.extent(2);
    std::size_t ho = (h + 2 - 3) / stride + 1;
    std::size_t wo = (w + 2 - 3) / stride + 1;
    const auto& idx = detail_conv::im2col_indices(x.extent(0), h, w, stride);
    Tensor cols = index_select_flat(x, idx, {ho * wo, x.extent(0) * 9});
    Tensor y = matmul(cols, transpose(p.weight));  // [Ho*Wo, C_out]
    Tensor y3 = reshape(transpose(y), {p.out_channels, ho, wo});
    return add_channel_bias(y3, p.bias);
}

// nearest-neighbour 2x upsampling of [C,H,W]
inline Tensor upsample_nearest2(const Tensor& x) {
    require(x.rank() == 3, "upsample_nearest2: need [C,H,W] input");
    std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    std::vector<std::int64_t> idx(c * 4 * h * w);
    std::size_t pos = 0;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t xp = 0; xp < 2 * w; ++xp)
                idx[pos++] = std::int64_t(ci * h * w + (y / 2) * w + xp / 2);
    return index_select_flat(x, idx, {c, 2 * h, 2 * w});
}

// mean over the spatial axes of [C,H,W] -> [C]
inline Tensor spatial_mean(const Tensor& x) {
    require(x.rank() == 3, "spatial_mean: need [C,H,W] input");
    std::size_t c = x.extent(0), hw = x.extent(1) * x.extent(2);
    Tensor flat = reshape(x, {c, hw});
    Tensor ones = Tensor::full({hw, 1}, 1.0 / double(hw));
    return reshape(matmul(flat, ones), {c});
}

}  // namespace hallo
