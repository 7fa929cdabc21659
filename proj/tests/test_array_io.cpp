#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "f2i/core/rng.hpp"
#include "f2i/data/array_io.hpp"

using namespace f2i;
namespace fs = std::filesystem;

namespace {
std::string tmp_path(const std::string& name) {
    auto p = fs::temp_directory_path() / "f2i_array_io";
    fs::create_directories(p);
    return (p / name).string();
}
}  // namespace

TEST_CASE("round-trip is bit-exact for ranks 1..4") {
    Rng rng(11);
    std::vector<std::vector<int64_t>> shapes = {{7}, {3, 5}, {2, 3, 4}, {2, 3, 2, 5}};
    for (const auto& shape : shapes) {
        Tensor t(shape);
        rng.fill_normal(t);
        std::string path = tmp_path("rt" + std::to_string(shape.size()) + ".npb");
        write_array(path, t, "generic");
        std::string role;
        Tensor back = read_array(path, &role);
        CHECK(role == "generic");
        CHECK(back.shape() == shape);
        for (int64_t i = 0; i < t.numel(); ++i)
            CHECK(std::memcmp(&back[i], &t[i], sizeof(float)) == 0);
    }
}

TEST_CASE("2x2 checkerboard survives identically") {
    Tensor t({2, 2}, {0.f, 1.f, 1.f, 0.f});
    std::string path = tmp_path("cb.npb");
    write_array(path, t, "surface_map");
    Tensor back = read_array(path);
    for (int64_t i = 0; i < 4; ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("full-scale latent shape round-trips as written") {
    Tensor t({257, 1024});
    Rng rng(12);
    rng.fill_normal(t);
    std::string path = tmp_path("latent.npb");
    write_array(path, t, "fmri_latent");
    Tensor back = read_array(path);
    CHECK(back.shape() == std::vector<int64_t>{257, 1024});
}

TEST_CASE("header shape [4] with 3 floats of payload is a shape-mismatch error") {
    std::string path = tmp_path("short.npb");
    {
        Tensor t({4}, {1.f, 2.f, 3.f, 4.f});
        write_array(path, t);
        auto sz = fs::file_size(path);
        fs::resize_file(path, sz - sizeof(float));
    }
    CHECK_THROWS_WITH_AS(read_array(path), doctest::Contains("mismatch"), DataError);
}

TEST_CASE("trailing bytes beyond the declared shape are rejected") {
    std::string path = tmp_path("long.npb");
    {
        Tensor t({4}, {1.f, 2.f, 3.f, 4.f});
        write_array(path, t);
        std::ofstream f(path, std::ios::binary | std::ios::app);
        float extra = 9.f;
        f.write(reinterpret_cast<const char*>(&extra), sizeof(float));
    }
    CHECK_THROWS_AS(read_array(path), DataError);
}

TEST_CASE("corrupt header is rejected") {
    std::string path = tmp_path("corrupt.npb");
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        unsigned char len[4] = {5, 0, 0, 0};
        f.write(reinterpret_cast<const char*>(len), 4);
        f << "nope!";
    }
    CHECK_THROWS_WITH_AS(read_array(path), doctest::Contains("corrupt"), DataError);
}

TEST_CASE("non-finite payloads are refused on write and read") {
    Tensor t({2}, {1.f, std::numeric_limits<float>::quiet_NaN()});
    CHECK_THROWS_AS(write_array(tmp_path("nan.npb"), t), DataError);

    // craft a file with an inf payload by hand
    std::string path = tmp_path("inf.npb");
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        std::string header = R"({"dtype":"float32","shape":[1],"role":"generic"})";
        uint32_t n = static_cast<uint32_t>(header.size());
        unsigned char len[4] = {static_cast<unsigned char>(n & 0xff),
                                static_cast<unsigned char>(n >> 8), 0, 0};
        f.write(reinterpret_cast<const char*>(len), 4);
        f << header;
        float inf = std::numeric_limits<float>::infinity();
        f.write(reinterpret_cast<const char*>(&inf), sizeof(float));
    }
    CHECK_THROWS_WITH_AS(read_array(path), doctest::Contains("non-finite"), DataError);
}

TEST_CASE("rank limits enforced") {
    CHECK_NOTHROW(write_array(tmp_path("r4.npb"), Tensor({1, 1, 1, 1})));
    CHECK_THROWS_AS(write_array(tmp_path("r5.npb"), Tensor({1, 1, 1, 1, 1})), DataError);
}
