#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "hallo/io.hpp"

using namespace hallo;
namespace fs = std::filesystem;

TEST_CASE("HTNS layout is bit-exact") {
    fs::path dir = fs::temp_directory_path() / "hallo_io_test";
    fs::create_directories(dir);
    Tensor t({2, 3}, {1.0, -2.5, 0.0, 3.25, 1e-3, 7.0});
    fs::path p = dir / "t.htns";
    save_htns(p, t);

    std::ifstream is(p, std::ios::binary);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
    // magic + u32 rank + 2 * u64 extents + 6 * f32
    REQUIRE(raw.size() == 4 + 4 + 16 + 24);
    REQUIRE(std::string(raw.begin(), raw.begin() + 4) == "HTNS");
    REQUIRE(raw[4] == 2);  // rank, little-endian
    REQUIRE(raw[5] == 0);
    REQUIRE(raw[8] == 2);   // extent 0
    REQUIRE(raw[16] == 3);  // extent 1
    float f0;
    std::memcpy(&f0, raw.data() + 24, 4);
    REQUIRE(f0 == 1.0f);
    float f1;
    std::memcpy(&f1, raw.data() + 28, 4);
    REQUIRE(f1 == -2.5f);
}

TEST_CASE("HTNS round trip preserves f32-representable values") {
    Rng rng(42);
    fs::path dir = fs::temp_directory_path() / "hallo_io_test";
    fs::create_directories(dir);
    for (int trial = 0; trial < 20; ++trial) {
        Shape shape;
        std::size_t r = 1 + rng.index(3);
        for (std::size_t i = 0; i < r; ++i) shape.push_back(1 + rng.index(5));
        Tensor t = Tensor::randn(shape, rng);
        // freeze to f32 grid first so the round trip is exact
        for (double& v : t.mutable_data()) v = double(float(v));
        fs::path p = dir / "rt.htns";
        save_htns(p, t);
        Tensor back = load_htns(p);
        REQUIRE(back.shape() == t.shape());
        for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(back[i] == t[i]);
    }
}

TEST_CASE("HTNS rejects malformed files") {
    fs::path dir = fs::temp_directory_path() / "hallo_io_test";
    fs::create_directories(dir);
    fs::path bad = dir / "bad.htns";
    {
        std::ofstream os(bad, std::ios::binary);
        os << "NOPE";
    }
    REQUIRE_THROWS_WITH(load_htns(bad), Catch::Matchers::ContainsSubstring("magic"));
    REQUIRE_THROWS_AS(load_htns(dir / "missing.htns"), Error);

    fs::path trunc = dir / "trunc.htns";
    {
        Tensor t = Tensor::ones({4, 4});
        save_htns(trunc, t);
        fs::resize_file(trunc, 30);
    }
    REQUIRE_THROWS_WITH(load_htns(trunc), Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("PPM round trip") {
    Rng rng(4);
    fs::path dir = fs::temp_directory_path() / "hallo_io_test";
    fs::create_directories(dir);
    Tensor img = Tensor::zeros({3, 5, 7});
    for (double& v : img.mutable_data()) v = rng.uniform();
    fs::path p = dir / "img.ppm";
    save_ppm(p, img);
    Tensor back = load_ppm(p);
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.size(); ++i)
        REQUIRE(back[i] == Catch::Approx(img[i]).margin(0.5 / 255.0 + 1e-9));
}

TEST_CASE("PGM write") {
    fs::path dir = fs::temp_directory_path() / "hallo_io_test";
    fs::create_directories(dir);
    Tensor m({2, 2}, {0.0, 1.0, 1.0, 0.0});
    fs::path p = dir / "m.pgm";
    save_pgm(p, m);
    std::ifstream is(p, std::ios::binary);
    std::string head;
    is >> head;
    REQUIRE(head == "P5");
}
