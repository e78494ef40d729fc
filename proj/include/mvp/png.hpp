// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvp/data.hpp"
#include "mvp/linalg.hpp"

namespace mvp {

namespace detail {

/// Encodes a single-channel buffer with libpng's simplified API.
inline std::string encode_png(int width, int height, std::uint32_t format, const void* pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw std::runtime_error(std::string("png encoding failed: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw std::runtime_error(std::string("png encoding failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace detail

/// Image values in [0, 1] as 16-bit linear grayscale.
inline void write_png16(const Matrix& image, const std::filesystem::path& path) {
  std::vector<png_uint_16> px;
  px.reserve(image.size());
  for (double v : image.values()) px.push_back(static_cast<png_uint_16>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0)));
  write_file_atomic(path, detail::encode_png(static_cast<int>(image.cols()), static_cast<int>(image.rows()),
                                             PNG_FORMAT_LINEAR_Y, px.data()));
}

/// Binary mask as 8-bit grayscale (0 or 255).
inline void write_mask_png(const std::vector<std::uint8_t>& mask, int width, int height,
                           const std::filesystem::path& path) {
  if (mask.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("mask size does not match the image size");
  }
  std::vector<png_byte> px;
  px.reserve(mask.size());
  for (auto m : mask) px.push_back(m ? 255 : 0);
  write_file_atomic(path, detail::encode_png(width, height, PNG_FORMAT_GRAY, px.data()));
}

}  // namespace mvp
