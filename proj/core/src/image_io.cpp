#include "wildgs/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "wildgs/errors.hpp"

namespace wildgs {

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

ad::Tensor read_image(const std::string& path, int channels) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read image " + path + ": " + img.message);
  }
  if (channels == 0) channels = (img.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  if (channels != 1 && channels != 3) {
    png_image_free(&img);
    throw ContractViolation("read_image: channels must be 1 or 3");
  }
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    throw IoError("cannot decode image " + path + ": " + img.message);
  }
  const int H = static_cast<int>(img.height), W = static_cast<int>(img.width);
  std::vector<double> data(static_cast<std::size_t>(channels) * H * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < channels; ++c)
        data[(static_cast<std::size_t>(c) * H + y) * W + x] = buffer[(static_cast<std::size_t>(y) * W + x) * channels + c] / 255.0;
  return ad::Tensor({1, channels, H, W}, std::move(data));
}

void write_image(const std::string& path, const ad::Tensor& image) {
  if (image.rank() != 4 || image.size(0) != 1 || (image.size(1) != 1 && image.size(1) != 3)) {
    throw ContractViolation("write_image expects 1 x {1,3} x H x W, got " + ad::shape_str(image.shape()));
  }
  const int C = image.size(1), H = image.size(2), W = image.size(3);
  std::vector<png_byte> buffer(static_cast<std::size_t>(C) * H * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c)
        buffer[(static_cast<std::size_t>(y) * W + x) * C + c] = to_byte(image[(static_cast<std::size_t>(c) * H + y) * W + x]);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = W;
  img.height = H;
  img.format = C == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write image " + path + ": " + img.message);
  }
}

namespace {

// Next whitespace-separated PGM header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::string& path) {
  std::string tok;
  while (in) {
    const int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!tok.empty()) return tok;
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError("truncated PGM header in " + path);
  return tok;
}

}  // namespace

ad::Tensor read_depth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open depth " + path);
  if (header_token(in, path) != "P5") throw IoError("depth " + path + " is not a binary PGM");
  int W = 0, H = 0, maxval = 0;
  try {
    W = std::stoi(header_token(in, path));
    H = std::stoi(header_token(in, path));
    maxval = std::stoi(header_token(in, path));
  } catch (const std::logic_error&) {
    throw IoError("malformed PGM header in " + path);
  }
  if (W <= 0 || H <= 0 || maxval != 65535) throw IoError("depth " + path + " must be a 16-bit PGM");
  std::vector<unsigned char> raw(static_cast<std::size_t>(W) * H * 2);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError("truncated depth data in " + path);
  std::vector<double> data(static_cast<std::size_t>(W) * H);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = ((raw[2 * i] << 8) | raw[2 * i + 1]) / 1000.0;
  return ad::Tensor({1, 1, H, W}, std::move(data));
}

void write_depth(const std::string& path, const ad::Tensor& depth) {
  if (depth.rank() != 4 || depth.size(0) != 1 || depth.size(1) != 1) {
    throw ContractViolation("write_depth expects 1 x 1 x H x W");
  }
  const int H = depth.size(2), W = depth.size(3);
  std::vector<unsigned char> raw(static_cast<std::size_t>(W) * H * 2);
  for (std::size_t i = 0; i < depth.numel(); ++i) {
    const double mm = std::floor(depth[i] * 1000.0 + 0.5);
    if (!(mm >= 0.0 && mm <= 65535.0)) throw ContractViolation("write_depth: value outside the 16-bit millimetre range");
    const auto q = static_cast<std::uint16_t>(mm);
    raw[2 * i] = static_cast<unsigned char>(q >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write depth " + path);
  out << "P5\n" << W << ' ' << H << "\n65535\n";
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("cannot write depth " + path);
}

}  // namespace wildgs
