#include "thermopipe/frame.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

namespace thermopipe {

namespace {

void check_geometry(std::size_t width, std::size_t height, std::size_t length) {
  if (width == 0 || height == 0) {
    throw FrameError("frame geometry must be non-zero");
  }
  if (length != width * height) {
    throw FrameError("payload size mismatch: expected " + std::to_string(width * height) +
                     " samples, got " + std::to_string(length));
  }
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FrameError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PgmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 0;
  std::size_t data_offset = 0;
};

PgmHeader parse_pgm_header(const std::vector<unsigned char>& bytes, const std::string& name) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FrameError(name + ": not a binary PGM (P5) file");
  }
  std::size_t pos = 2;
  auto next_token = [&]() -> unsigned long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw FrameError(name + ": malformed PGM header");
    }
    unsigned long value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + static_cast<unsigned long>(bytes[pos] - '0');
      if (value > 1'000'000'000UL) throw FrameError(name + ": malformed PGM header");
      ++pos;
    }
    return value;
  };
  PgmHeader header;
  header.width = next_token();
  header.height = next_token();
  header.maxval = static_cast<unsigned>(next_token());
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FrameError(name + ": malformed PGM header");
  }
  header.data_offset = pos + 1;
  if (header.width == 0 || header.height == 0 || header.maxval == 0 || header.maxval > 65535) {
    throw FrameError(name + ": malformed PGM header");
  }
  return header;
}

RawFrame load_pgm_16(const std::vector<unsigned char>& bytes, const std::string& name) {
  const PgmHeader header = parse_pgm_header(bytes, name);
  if (header.maxval < 256) {
    throw FrameError(name + ": unsupported bit depth (8-bit PGM, expected 16-bit)");
  }
  const std::size_t expected = header.width * header.height;
  const std::size_t payload = bytes.size() - header.data_offset;
  if (payload != expected * 2) {
    throw FrameError(name + ": payload size mismatch: header promises " + std::to_string(expected) +
                     " samples, file holds " + std::to_string(payload / 2));
  }
  std::vector<std::uint16_t> samples(expected);
  const unsigned char* p = bytes.data() + header.data_offset;
  for (std::size_t i = 0; i < expected; ++i) {
    samples[i] = static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
  }
  return RawFrame(header.width, header.height, std::move(samples));
}

RawFrame load_png_16(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw FrameError("cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw FrameError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};

  std::vector<std::uint16_t> samples;
  std::vector<png_byte> row;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  // libpng reports errors through longjmp; every object that outlives the jump is declared above.
  if (setjmp(png_jmpbuf(png))) {
    throw FrameError(path.string() + ": corrupt PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    throw FrameError(path.string() + ": PNG must be single-channel grayscale");
  }
  if (bit_depth != 16) {
    throw FrameError(path.string() + ": unsupported bit depth " + std::to_string(bit_depth));
  }
  samples.resize(static_cast<std::size_t>(width) * height);
  row.resize(png_get_rowbytes(png, info));
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < width; ++x) {
      samples[static_cast<std::size_t>(y) * width + x] =
          static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
    }
  }
  return RawFrame(width, height, std::move(samples));
}

void write_bytes(const std::filesystem::path& path, const std::string& header,
                 const std::vector<unsigned char>& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FrameError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  out.flush();
  if (!out) throw FrameError("write failed for " + path.string());
}

}  // namespace

RawFrame::RawFrame(std::size_t width, std::size_t height, std::vector<std::uint16_t> samples,
                   std::uint64_t frame_index)
    : geometry_{width, height}, samples_(std::move(samples)), frame_index_(frame_index) {
  check_geometry(width, height, samples_.size());
}

RawFrame::RawFrame(std::size_t width, std::size_t height, std::uint16_t fill, std::uint64_t frame_index)
    : RawFrame(width, height, std::vector<std::uint16_t>(width * height, fill), frame_index) {}

CorrectedFrame::CorrectedFrame(std::size_t width, std::size_t height, std::vector<double> values)
    : geometry_{width, height}, values_(std::move(values)) {
  check_geometry(width, height, values_.size());
  if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
    throw FrameError("corrected frame contains non-finite values");
  }
}

CorrectedFrame::CorrectedFrame(std::size_t width, std::size_t height, double fill)
    : CorrectedFrame(width, height, std::vector<double>(width * height, fill)) {}

CorrectedFrame CorrectedFrame::from_raw(const RawFrame& raw) {
  std::vector<double> values(raw.samples().begin(), raw.samples().end());
  return CorrectedFrame(raw.width(), raw.height(), std::move(values));
}

DisplayFrame::DisplayFrame(std::size_t width, std::size_t height, std::vector<std::uint8_t> bytes)
    : geometry_{width, height}, bytes_(std::move(bytes)) {
  check_geometry(width, height, bytes_.size());
}

FrameStats frame_stats(std::span<const double> values) {
  if (values.empty()) throw FrameError("statistics of an empty frame");
  FrameStats stats;
  stats.min = values[0];
  stats.max = values[0];
  double sum = 0.0;
  for (double v : values) {
    stats.min = std::min(stats.min, v);
    stats.max = std::max(stats.max, v);
    sum += v;
  }
  const double n = static_cast<double>(values.size());
  stats.mean = sum / n;
  double ss = 0.0;
  for (double v : values) {
    const double d = v - stats.mean;
    ss += d * d;
  }
  stats.stddev = std::sqrt(ss / n);
  // Summation rounding can push the mean a hair outside [min, max] on constant frames.
  stats.mean = std::clamp(stats.mean, stats.min, stats.max);
  return stats;
}

FrameStats frame_stats(const RawFrame& frame) {
  std::vector<double> values(frame.samples().begin(), frame.samples().end());
  return frame_stats(std::span<const double>(values));
}

FrameStats frame_stats(const CorrectedFrame& frame) { return frame_stats(frame.values()); }

RawFrame load_frame_16(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw FrameError("missing file " + path.string());
  }
  const auto bytes = read_all(path);
  static constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) {
    return load_png_16(path);
  }
  return load_pgm_16(bytes, path.string());
}

void store_frame_16(const RawFrame& frame, const std::filesystem::path& path) {
  const std::string header =
      "P5\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) + "\n65535\n";
  std::vector<unsigned char> payload;
  payload.reserve(frame.samples().size() * 2);
  for (std::uint16_t s : frame.samples()) {
    payload.push_back(static_cast<unsigned char>(s >> 8));
    payload.push_back(static_cast<unsigned char>(s & 0xff));
  }
  write_bytes(path, header, payload);
}

void store_frame_8(const DisplayFrame& frame, const std::filesystem::path& path) {
  const std::string header =
      "P5\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) + "\n255\n";
  write_bytes(path, header, {frame.bytes().begin(), frame.bytes().end()});
}

DisplayFrame load_frame_8(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw FrameError("missing file " + path.string());
  }
  const auto bytes = read_all(path);
  const PgmHeader header = parse_pgm_header(bytes, path.string());
  if (header.maxval > 255) {
    throw FrameError(path.string() + ": unsupported bit depth (16-bit PGM, expected 8-bit)");
  }
  const std::size_t expected = header.width * header.height;
  if (bytes.size() - header.data_offset != expected) {
    throw FrameError(path.string() + ": payload size mismatch");
  }
  return DisplayFrame(header.width, header.height,
                      {bytes.begin() + static_cast<std::ptrdiff_t>(header.data_offset), bytes.end()});
}

}  // namespace thermopipe
