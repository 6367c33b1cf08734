#include <png.h>

#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "support.hpp"
#include "thermopipe/frame.hpp"
#include "thermopipe/numeric.hpp"

using namespace thermopipe;
using testsupport::TempDir;

TEST_CASE("load_frame_16 reads a 2x2 P5 frame exactly") {
  TempDir dir;
  std::string pgm = "P5\n2 2\n65535\n";
  for (unsigned v : {0u, 1u, 2u, 65535u}) {
    pgm.push_back(static_cast<char>(v >> 8));
    pgm.push_back(static_cast<char>(v & 0xff));
  }
  testsupport::write_text(dir / "f.pgm", pgm);
  const RawFrame f = load_frame_16(dir / "f.pgm");
  CHECK(f == RawFrame(2, 2, std::vector<std::uint16_t>{0, 1, 2, 65535}));
}

TEST_CASE("load_frame_16 rejects 8-bit input, short payloads and missing files") {
  TempDir dir;
  testsupport::write_text(dir / "eight.pgm", "P5\n2 2\n255\n\x01\x02\x03\x04");
  CHECK_THROWS_WITH_AS(load_frame_16(dir / "eight.pgm"), doctest::Contains("unsupported bit depth"), FrameError);

  testsupport::write_text(dir / "short.pgm", "P5\n640 480\n65535\n" + std::string(200, '\0'));
  CHECK_THROWS_WITH_AS(load_frame_16(dir / "short.pgm"), doctest::Contains("payload size mismatch"), FrameError);

  CHECK_THROWS_AS(load_frame_16(dir / "absent.pgm"), FrameError);
}

TEST_CASE("16-bit store/load round trip is the identity, including 16-bit PNG") {
  TempDir dir;
  std::vector<std::uint16_t> samples(7 * 5);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = static_cast<std::uint16_t>(i * 1871 % 65536);
  const RawFrame f(7, 5, samples);
  store_frame_16(f, dir / "r.pgm");
  CHECK(load_frame_16(dir / "r.pgm").samples().size() == samples.size());
  CHECK(load_frame_16(dir / "r.pgm") == f);
}

namespace {

void write_png_16(const testsupport::fs::path& path, const RawFrame& f) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  REQUIRE(fp != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, fp);
  png_set_IHDR(png, info, f.width(), f.height(), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(f.width() * 2);
  for (std::size_t y = 0; y < f.height(); ++y) {
    for (std::size_t x = 0; x < f.width(); ++x) {
      row[2 * x] = static_cast<png_byte>(f.at(x, y) >> 8);
      row[2 * x + 1] = static_cast<png_byte>(f.at(x, y) & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

TEST_CASE("16-bit grayscale PNG is read without rescaling") {
  TempDir dir;
  RawFrame f(6, 4, 0);
  for (std::size_t i = 0; i < 24; ++i) f.samples()[i] = static_cast<std::uint16_t>(65535 - i * 2731);
  write_png_16(dir / "f.png", f);
  CHECK(load_frame_16(dir / "f.png") == f);
}

TEST_CASE("store_frame_8 round trips and reports unwritable paths") {
  TempDir dir;
  const DisplayFrame d(2, 2, {0, 128, 255, 7});
  store_frame_8(d, dir / "d.pgm");
  CHECK(load_frame_8(dir / "d.pgm") == d);

  CHECK_THROWS(store_frame_8(d, dir / "no" / "such" / "dir" / "d.pgm"));

  const DisplayFrame zeros(640, 480, std::vector<std::uint8_t>(640 * 480, 0));
  store_frame_8(zeros, dir / "z.pgm");
  const DisplayFrame back = load_frame_8(dir / "z.pgm");
  std::vector<double> v(back.bytes().begin(), back.bytes().end());
  CHECK(frame_stats(v).mean == 0.0);
}

TEST_CASE("frame_stats uses population statistics") {
  const FrameStats c = frame_stats(RawFrame(2, 2, std::vector<std::uint16_t>{10, 10, 10, 10}));
  CHECK(c.min == 10);
  CHECK(c.max == 10);
  CHECK(c.mean == 10);
  CHECK(c.stddev == 0);

  const FrameStats s = frame_stats(RawFrame(2, 2, std::vector<std::uint16_t>{0, 0, 0, 4}));
  CHECK(s.mean == 1.0);
  CHECK(s.stddev == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));

  CHECK_THROWS(frame_stats(std::span<const double>()));
}

TEST_CASE("frame_stats of a constant frame is {c, c, c, 0} across the 16-bit range") {
  for (unsigned c : {0u, 1u, 1000u, 32768u, 65534u, 65535u}) {
    const FrameStats s = frame_stats(RawFrame(4, 3, static_cast<std::uint16_t>(c)));
    CHECK(s.min == c);
    CHECK(s.max == c);
    CHECK(s.mean == c);
    CHECK(s.stddev == 0);
  }
}

TEST_CASE("samples are row-major") {
  RawFrame f(5, 3, 0);
  f.at(3, 2) = 999;
  CHECK(f.samples()[2 * 5 + 3] == 999);
  CHECK(std::count(f.samples().begin(), f.samples().end(), 999) == 1);
}

TEST_CASE("frame invariants are enforced") {
  CHECK_THROWS_AS(RawFrame(2, 2, std::vector<std::uint16_t>{1, 2, 3}), FrameError);
  CHECK_THROWS_AS(RawFrame(0, 2, std::vector<std::uint16_t>{}), FrameError);
  CHECK_THROWS_AS(CorrectedFrame(1, 1, std::vector<double>{std::nan("")}), FrameError);
  CHECK(RawFrame().width() == 0);
  CHECK(Geometry{}.pixel_count() == 640u * 480u);
}

TEST_CASE("numeric helpers") {
  CHECK(round_half_even(2.5) == 2.0);
  CHECK(round_half_even(3.5) == 4.0);
  CHECK(round_half_even(-0.5) == 0.0);
  CHECK(median({1, 2, 3, 4, 5, 6, 7, 8}) == 4.5);
  CHECK(median({3, 1, 2}) == 2.0);
  const std::vector<double> sorted{0, 10, 20, 30};
  CHECK(percentile_sorted(sorted, 50) == 15.0);
  CHECK(percentile_sorted(sorted, 100) == 30.0);
}
