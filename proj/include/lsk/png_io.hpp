#pragma once

// 8-bit gray/RGB PNG reading and writing through libpng's simplified API.

#include <lsk/error.hpp>
#include <lsk/imaging.hpp>

#include <png.h>

#include <filesystem>
#include <string>
#include <system_error>
#include <vector>

namespace lsk {

/// Reads an 8-bit gray or RGB PNG. An alpha channel is dropped; 16-bit and
/// palette images are rejected.
inline ImageU8 load_png(const std::filesystem::path& path) {
  std::error_code ec;
  require(std::filesystem::is_regular_file(path, ec), Errc::io_error, "cannot open " + path.string());

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    fail(Errc::unsupported_format, path.string() + ": " + image.message);

  const png_uint_32 fmt = image.format;
  if (fmt & (PNG_FORMAT_FLAG_LINEAR | PNG_FORMAT_FLAG_COLORMAP)) {
    png_image_free(&image);
    fail(Errc::unsupported_format, path.string() + ": only 8-bit gray/RGB PNGs are supported");
  }
  const bool color = fmt & PNG_FORMAT_FLAG_COLOR;
  const bool alpha = fmt & PNG_FORMAT_FLAG_ALPHA;
  image.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB) : (alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);

  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(Errc::unsupported_format, path.string() + ": " + msg);
  }

  ImageU8 out;
  out.w = image.width;
  out.h = image.height;
  out.channels = color ? 3 : 1;
  const std::size_t stride = out.channels + (alpha ? 1 : 0);
  out.data.resize(out.w * out.h * out.channels);
  for (std::size_t i = 0; i < out.w * out.h; ++i)
    for (std::size_t c = 0; c < out.channels; ++c) out.data[i * out.channels + c] = raw[i * stride + c];
  return out;
}

/// Writes to a sibling temporary file, then renames over `path`.
inline void save_png(const ImageU8& img, const std::filesystem::path& path) {
  require(img.channels == 1 || img.channels == 3, Errc::unsupported_format, "save_png expects 1 or 3 channels");
  require(img.w >= 1 && img.h >= 1 && img.data.size() == img.w * img.h * img.channels, Errc::invalid_shape,
          "image data length does not match dims");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.w);
  image.height = static_cast<png_uint_32>(img.h);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  if (!png_image_write_to_file(&image, tmp.c_str(), 0, img.data.data(), 0, nullptr)) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    fail(Errc::io_error, path.string() + ": " + image.message);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::io_error, path.string() + ": " + ec.message());
}

}  // namespace lsk
