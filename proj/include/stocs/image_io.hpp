#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <png.h>

#include <nlohmann/json.hpp>

#include "stocs/binary_io.hpp"
#include "stocs/camera.hpp"
#include "stocs/error.hpp"

namespace stocs {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Writes a 16-bit single-channel PNG.
inline void write_depth_png(const std::filesystem::path& path, const DepthImage& depth) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(depth.width), static_cast<png_uint_32>(depth.height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(depth.width) * 2);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const std::uint16_t d = depth.at(u, v);
      row[2 * u] = static_cast<png_byte>(d >> 8);  // PNG is big-endian
      row[2 * u + 1] = static_cast<png_byte>(d & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(fp.get()) != 0) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

/// Reads a 16-bit grayscale PNG (8-bit grayscale is widened).
inline DepthImage read_depth_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorCode::IoError, path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "PNG decoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int bits = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, path.string() + " is not a single-channel depth image");
  }
  if (bits < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  DepthImage img(static_cast<int>(png_get_image_width(png, info)), static_cast<int>(png_get_image_height(png, info)));
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  const bool wide = bits == 16;
  for (int v = 0; v < img.height; ++v) {
    png_read_row(png, row.data(), nullptr);
    for (int u = 0; u < img.width; ++u) {
      img.at(u, v) = wide ? static_cast<std::uint16_t>((row[2 * u] << 8) | row[2 * u + 1]) : row[u];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline nlohmann::json intrinsics_to_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"depth_scale", k.depth_scale}};
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.depth_scale = j.at("depth_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("bad intrinsics document: ") + e.what());
  }
  k.validate();
  return k;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  const auto raw = detail::read_file(path);
  try {
    return nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  detail::write_text_file(path, j.dump(2) + "\n");
}

inline CameraIntrinsics read_intrinsics(const std::filesystem::path& path) {
  return intrinsics_from_json(read_json(path));
}

inline void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k) {
  write_json(path, intrinsics_to_json(k));
}

}  // namespace stocs
