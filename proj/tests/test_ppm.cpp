#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "signshield/errors.hpp"
#include "signshield/ppm.hpp"
#include "signshield/rng.hpp"

using namespace signshield;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/signshield_test_") + name;
}

void write_raw(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("ppm: write/read round trip is exact on the 255-lattice") {
    Tensor img = Tensor::zeros({5, 7, 3});
    Rng rng(3001);
    for (float& v : img.data) {
        v = static_cast<float>(rng.uniform_int(256)) / 255.0f;
    }
    const std::string path = temp_path("roundtrip.ppm");
    write_ppm(path, img);
    Tensor back = read_ppm(path);
    CHECK(back.shape == img.shape);
    CHECK(max_abs_diff(back, img) == 0.0f);
    std::remove(path.c_str());
}

TEST_CASE("ppm: maxval scaling maps bytes to [0,1]") {
    const std::string path = temp_path("scale.ppm");
    write_raw(path, std::string("P6\n1 1\n255\n") + std::string("\xff\x00\x00", 3));
    Tensor t = read_ppm(path);
    CHECK(t.shape == std::vector<int>{1, 1, 3});
    CHECK(t.data[0] == 1.0f);
    CHECK(t.data[1] == 0.0f);
    CHECK(t.data[2] == 0.0f);

    write_raw(path, std::string("P6\n1 1\n100\n") + std::string("\x64\x32\x00", 3));
    Tensor u = read_ppm(path);
    CHECK(u.data[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(u.data[1] == doctest::Approx(0.5).epsilon(1e-6));
    std::remove(path.c_str());
}

TEST_CASE("ppm: header comments are skipped") {
    const std::string path = temp_path("comment.ppm");
    write_raw(path, std::string("P6\n# a comment\n2 1\n# another\n255\n") +
                        std::string("\x01\x02\x03\x04\x05\x06", 6));
    Tensor t = read_ppm(path);
    CHECK(t.shape == std::vector<int>{1, 2, 3});
    CHECK(t.data[0] == doctest::Approx(1.0f / 255.0f));
    std::remove(path.c_str());
}

TEST_CASE("ppm: malformed files raise format errors") {
    const std::string path = temp_path("bad.ppm");
    write_raw(path, "P5\n1 1\n255\nxxx");
    CHECK_THROWS_AS(read_ppm(path), FormatError);
    write_raw(path, std::string("P6\n2 2\n255\n") + "\x01\x02\x03");  // truncated
    CHECK_THROWS_AS(read_ppm(path), FormatError);
    write_raw(path, "P6\n0 1\n255\n");
    CHECK_THROWS_AS(read_ppm(path), FormatError);
    write_raw(path, std::string("P6\n1 1\n65535\n") + "\x01\x02\x03\x04\x05\x06");
    CHECK_THROWS_AS(read_ppm(path), FormatError);
    write_raw(path, "P6\n1");
    CHECK_THROWS_AS(read_ppm(path), FormatError);
    CHECK_THROWS_AS(read_ppm("/tmp/signshield_nonexistent_dir/x.ppm"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("ppm: write rejects non-image tensors and clamps out-of-range") {
    CHECK_THROWS_AS(write_ppm(temp_path("bad_shape.ppm"), Tensor::zeros({4, 4, 1})), ShapeError);
    Tensor img = Tensor::zeros({1, 1, 3});
    img.data = {1.5f, -0.5f, 0.5f};
    const std::string path = temp_path("clamp.ppm");
    write_ppm(path, img);
    Tensor back = read_ppm(path);
    CHECK(back.data[0] == 1.0f);
    CHECK(back.data[1] == 0.0f);
    CHECK(back.data[2] == doctest::Approx(0.5).epsilon(0.01));
    std::remove(path.c_str());
}
