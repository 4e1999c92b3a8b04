#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "hallo/io.hpp"
#include "hallo/maskgen.hpp"

using namespace hallo;
namespace fs = std::filesystem;

namespace {

LandmarkSet random_landmarks(Rng& rng, std::size_t h = 16, std::size_t w = 16) {
    LandmarkSet lm;
    lm.image_h = h;
    lm.image_w = w;
    std::size_t nl = 1 + rng.index(4), ne = 1 + rng.index(5);
    for (std::size_t i = 0; i < nl; ++i)
        lm.lip_points.push_back({rng.uniform(0, double(w) - 1e-9), rng.uniform(0, double(h) - 1e-9)});
    for (std::size_t i = 0; i < ne; ++i)
        lm.exp_points.push_back({rng.uniform(0, double(w) - 1e-9), rng.uniform(0, double(h) - 1e-9)});
    return lm;
}

}  // namespace

TEST_CASE("rasterize: single point sets exactly the containing cell") {
    std::vector<Landmark> pts = {{5.0, 9.0}};
    Tensor m = rasterize_box_mask(pts, 16, 16, 4, 4);
    std::size_t count = 0, hit = 0;
    for (std::size_t i = 0; i < 16; ++i)
        if (m[i] != 0.0) {
            ++count;
            hit = i;
        }
    REQUIRE(count == 1);
    // scaled coordinate (5/4, 9/4) lies in cell (row 2, col 1)
    REQUIRE(hit == 2 * 4 + 1);
}

TEST_CASE("rasterize: points spanning the full image give an all-ones mask") {
    std::vector<Landmark> pts = {{0.0, 0.0}, {15.999, 15.999}};
    Tensor m = rasterize_box_mask(pts, 16, 16, 4, 4);
    for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(m[i] == 1.0);
}

TEST_CASE("rasterize: 4x4 grid over 16x16 image, enumerated cell centers") {
    std::vector<Landmark> pts = {{4, 4}, {11, 11}};
    Tensor m = rasterize_box_mask(pts, 16, 16, 4, 4);
    // oracle: enumerate all 16 cell centers against the scaled box [1,2.75]^2,
    // plus the cells containing the scaled points themselves
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double cx = double(j) + 0.5, cy = double(i) + 0.5;
            bool inside = cx >= 1.0 && cx <= 2.75 && cy >= 1.0 && cy <= 2.75;
            bool point_cell = (i == 1 && j == 1) || (i == 2 && j == 2);
            REQUIRE(m[i * 4 + j] == ((inside || point_cell) ? 1.0 : 0.0));
        }
    // the spec's enumeration: cells (1,1),(1,2),(2,1),(2,2)
    REQUIRE(m[1 * 4 + 1] == 1.0);
    REQUIRE(m[1 * 4 + 2] == 1.0);
    REQUIRE(m[2 * 4 + 1] == 1.0);
    REQUIRE(m[2 * 4 + 2] == 1.0);
}

TEST_CASE("rasterize errors") {
    REQUIRE_THROWS_AS(rasterize_box_mask({}, 16, 16, 4, 4), Error);
    REQUIRE_THROWS_AS(rasterize_box_mask({{1, 1}}, 16, 16, 0, 4), Error);
}

TEST_CASE("rasterize monotonicity: adding points never shrinks the mask") {
    Rng rng(99);
    for (int trial = 0; trial < 500; ++trial) {
        std::size_t n = 1 + rng.index(5);
        std::vector<Landmark> pts;
        for (std::size_t i = 0; i < n; ++i)
            pts.push_back({rng.uniform(0, 15.999), rng.uniform(0, 15.999)});
        Tensor base = rasterize_box_mask(pts, 16, 16, 4, 4);
        pts.push_back({rng.uniform(0, 15.999), rng.uniform(0, 15.999)});
        Tensor bigger = rasterize_box_mask(pts, 16, 16, 4, 4);
        for (std::size_t i = 0; i < base.size(); ++i)
            if (base[i] == 1.0) REQUIRE(bigger[i] == 1.0);
    }
}

TEST_CASE("derive_region_masks forced cases") {
    // Y_exp covers everything, Y_lip a single cell
    LandmarkSet lm;
    lm.image_h = lm.image_w = 16;
    lm.exp_points = {{0, 0}, {15.999, 15.999}};
    lm.lip_points = {{6, 6}};
    RegionMasks rm = derive_region_masks(lm, 4, 4);
    for (std::size_t i = 0; i < 16; ++i) {
        if (rm.m_lip[i] == 1.0) {
            REQUIRE(rm.m_exp[i] == 0.0);
            REQUIRE(rm.m_pose[i] == 1.0);
        } else {
            REQUIRE(rm.m_exp[i] == 1.0);
            REQUIRE(rm.m_pose[i] == 0.0);
        }
    }

    // Y_lip == Y_exp -> M_exp = 0, M_pose all ones
    LandmarkSet same;
    same.image_h = same.image_w = 16;
    same.lip_points = same.exp_points = {{2, 2}, {9, 9}};
    RegionMasks rs = derive_region_masks(same, 4, 4);
    for (std::size_t i = 0; i < 16; ++i) {
        REQUIRE(rs.m_exp[i] == 0.0);
        REQUIRE(rs.m_pose[i] == 1.0);
    }
}

TEST_CASE("region mask invariants against boolean oracle, randomized") {
    Rng rng(123);
    for (int trial = 0; trial < 2000; ++trial) {
        LandmarkSet lm = random_landmarks(rng);
        RegionMasks rm = derive_region_masks(lm, 4, 4);
        for (std::size_t i = 0; i < 16; ++i) {
            bool ylip = rm.y_lip[i] == 1.0;
            bool yexp = rm.y_exp[i] == 1.0;
            bool mlip = rm.m_lip[i] == 1.0;
            bool mexp = rm.m_exp[i] == 1.0;
            bool mpose = rm.m_pose[i] == 1.0;
            REQUIRE(mlip == ylip);
            REQUIRE(mexp == (yexp && !ylip));   // direct boolean oracle
            REQUIRE(mpose == !mexp);
            REQUIRE(!(mexp && mlip));
            REQUIRE(rm.m_exp[i] + rm.m_pose[i] == 1.0);
            if (mlip) REQUIRE(mpose);
        }
    }
}

TEST_CASE("masks are bit-reproducible through HTNS") {
    Rng rng(7);
    LandmarkSet lm = random_landmarks(rng, 64, 64);
    RegionMasks a = derive_region_masks(lm, 16, 16);
    RegionMasks b = derive_region_masks(lm, 16, 16);
    fs::path dir = fs::temp_directory_path() / "hallo_mask_test";
    fs::create_directories(dir);
    save_htns(dir / "a.htns", a.m_exp);
    save_htns(dir / "b.htns", b.m_exp);
    std::ifstream fa(dir / "a.htns", std::ios::binary), fb(dir / "b.htns", std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    REQUIRE(sa == sb);
    Tensor back = load_htns(dir / "a.htns");
    for (std::size_t i = 0; i < back.size(); ++i) {
        REQUIRE((back[i] == 0.0 || back[i] == 1.0));
        REQUIRE(back[i] == a.m_exp[i]);
    }
}

TEST_CASE("max-pool downsampling keeps the partition invariants") {
    Rng rng(55);
    for (int trial = 0; trial < 200; ++trial) {
        LandmarkSet lm = random_landmarks(rng, 64, 64);
        RegionMasks rm = derive_region_masks(lm, 16, 16);
        RegionMasks small = downsample_region_masks(rm, 8, 8);
        for (std::size_t i = 0; i < 64; ++i) {
            REQUIRE(small.m_exp[i] * small.m_lip[i] == 0.0);
            REQUIRE(small.m_exp[i] + small.m_pose[i] == 1.0);
            if (small.m_lip[i] == 1.0) REQUIRE(small.m_pose[i] == 1.0);
        }
        // any-covered-cell rule for the lip mask
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
                bool any = false;
                for (std::size_t di = 0; di < 2; ++di)
                    for (std::size_t dj = 0; dj < 2; ++dj)
                        any = any || rm.m_lip[(2 * i + di) * 16 + (2 * j + dj)] == 1.0;
                REQUIRE((small.m_lip[i * 8 + j] == 1.0) == any);
            }
    }
}

TEST_CASE("landmark loader") {
    fs::path dir = fs::temp_directory_path() / "hallo_lm_test";
    fs::create_directories(dir);

    fs::path good = dir / "good.txt";
    {
        std::ofstream os(good);
        os << "# synthetic\nimage_size 16 16\nlip 2\n3 4\n5 6\nexp 3\n1 1\n8 8\n14 2\n";
    }
    LandmarkSet lm = load_landmarks(good);
    REQUIRE(lm.lip_points.size() == 2);
    REQUIRE(lm.exp_points.size() == 3);
    REQUIRE(lm.image_w == 16);

    fs::path range = dir / "range.txt";
    {
        std::ofstream os(range);
        os << "image_size 16 16\nlip 1\n-1 3\nexp 1\n1 1\n";
    }
    REQUIRE_THROWS_WITH(load_landmarks(range), Catch::Matchers::ContainsSubstring("outside"));

    fs::path empty = dir / "empty.txt";
    {
        std::ofstream os(empty);
        os << "image_size 16 16\nlip 0\nexp 1\n1 1\n";
    }
    REQUIRE_THROWS_WITH(load_landmarks(empty), Catch::Matchers::ContainsSubstring("empty"));

    fs::path garbled = dir / "garbled.txt";
    {
        std::ofstream os(garbled);
        os << "image_size 16 16\nlip 2\n3 x\n5 6\nexp 1\n1 1\n";
    }
    REQUIRE_THROWS_WITH(load_landmarks(garbled), Catch::Matchers::ContainsSubstring(":3"));

    // round trip
    fs::path rt = dir / "rt.txt";
    save_landmarks(rt, lm);
    LandmarkSet lm2 = load_landmarks(rt);
    REQUIRE(lm2.lip_points.size() == lm.lip_points.size());
    REQUIRE(lm2.lip_points[1].y == lm.lip_points[1].y);
}
