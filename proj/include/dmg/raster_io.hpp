#pragma once

#include <png.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "dmg/error.hpp"
#include "dmg/mask.hpp"

namespace dmg {

// Decoded 8-bit raster: one channel (codes or palette indices) or three (RGB).
struct RasterImage {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
  // Present when the file was a palette PNG; `data` then holds indices.
  std::optional<std::vector<Rgb>> colormap;

  Rgb rgb_at(std::size_t pixel) const {
    if (channels == 3) {
      return Rgb{data[3 * pixel], data[3 * pixel + 1], data[3 * pixel + 2]};
    }
    if (colormap) {
      auto idx = data[pixel];
      if (idx >= colormap->size()) {
        throw MaskFormatError("palette index " + std::to_string(idx) + " beyond colormap");
      }
      return (*colormap)[idx];
    }
    return Rgb{data[pixel], data[pixel], data[pixel]};
  }
};

enum class MaskEncoding {
  RawIndexed,  // 8-byte header (H, W as LE uint32) then H*W code bytes
  PngIndexed,  // 8-bit grayscale PNG of category codes
  PngPalette,  // RGB PNG using the palette colors
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MaskFormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw MaskFormatError("error reading " + path.string());
  return bytes;
}

inline bool has_png_signature(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::array<std::uint8_t, 8> kSig = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::equal(kSig.begin(), kSig.end(), bytes.begin());
}

inline std::uint32_t read_le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline void write_le32(std::vector<std::uint8_t>& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((x >> (8 * i)) & 0xff));
}

inline RasterImage decode_raw(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (bytes.size() < 8) throw MaskFormatError(name + ": raw mask shorter than its 8-byte header");
  auto h = read_le32(bytes.data());
  auto w = read_le32(bytes.data() + 4);
  if (h == 0 || w == 0 || h > 1u << 20 || w > 1u << 20) {
    throw MaskFormatError(name + ": implausible raw dimensions " + std::to_string(h) + "x" +
                          std::to_string(w));
  }
  auto expected = std::uint64_t(h) * w + 8;
  if (bytes.size() != expected) {
    throw MaskFormatError(name + ": raw mask has " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(expected));
  }
  RasterImage img;
  img.height = static_cast<int>(h);
  img.width = static_cast<int>(w);
  img.channels = 1;
  img.data.assign(bytes.begin() + 8, bytes.end());
  return img;
}

inline RasterImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  // IHDR is always the first chunk: bit depth at byte 24, color type at 25.
  if (bytes.size() < 33) throw MaskFormatError(name + ": truncated PNG header");
  const int bit_depth = bytes[24];
  const int color_type = bytes[25];
  if (bit_depth == 16) throw MaskFormatError(name + ": 16-bit PNG masks are not supported");

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw MaskFormatError(name + ": " + image.message);
  }
  RasterImage img;
  img.height = static_cast<int>(image.height);
  img.width = static_cast<int>(image.width);
  const std::size_t pixels = std::size_t(image.height) * image.width;
  png_color black{0, 0, 0};  // transparency composites onto black

  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    image.format = PNG_FORMAT_RGB_COLORMAP;
    img.channels = 1;
    img.data.resize(pixels);
    std::vector<std::uint8_t> cmap(PNG_IMAGE_COLORMAP_SIZE(image));
    if (!png_image_finish_read(&image, &black, img.data.data(), 0, cmap.data())) {
      throw MaskFormatError(name + ": " + image.message);
    }
    std::vector<Rgb> colors(image.colormap_entries);
    for (std::size_t i = 0; i < colors.size(); ++i) {
      colors[i] = Rgb{cmap[3 * i], cmap[3 * i + 1], cmap[3 * i + 2]};
    }
    img.colormap = std::move(colors);
  } else if (image.format & PNG_FORMAT_FLAG_COLOR) {
    image.format = PNG_FORMAT_RGB;
    img.channels = 3;
    img.data.resize(3 * pixels);
    if (!png_image_finish_read(&image, &black, img.data.data(), 0, nullptr)) {
      throw MaskFormatError(name + ": " + image.message);
    }
  } else {
    image.format = PNG_FORMAT_GRAY;
    img.channels = 1;
    img.data.resize(pixels);
    if (!png_image_finish_read(&image, &black, img.data.data(), 0, nullptr)) {
      throw MaskFormatError(name + ": " + image.message);
    }
    // Low bit-depth gray is scaled up to 0..255 by the reader; undo that so
    // codes stay codes.
    if (bit_depth < 8) {
      const int max_value = (1 << bit_depth) - 1;
      for (auto& px : img.data) px = static_cast<std::uint8_t>(px * max_value / 255);
    }
  }
  return img;
}

}  // namespace detail

inline RasterImage read_raster(const std::filesystem::path& path) {
  auto bytes = detail::read_file_bytes(path);
  return detail::has_png_signature(bytes) ? detail::decode_png(bytes, path.string())
                                          : detail::decode_raw(bytes, path.string());
}

inline void write_raster_png(const std::filesystem::path& path, const RasterImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.data.data(), 0, nullptr)) {
    throw MaskFormatError("cannot write " + path.string() + ": " + image.message);
  }
}

enum class LoadMode {
  Indexed,  // single-channel values are category codes
  Palette,  // RGB colors looked up in the palette
  Auto,     // Indexed for single-channel rasters, Palette otherwise
};

struct LoadOptions {
  LoadMode mode = LoadMode::Auto;
  Palette palette;
  int tolerance = 0;
};

inline SegmentationMask decode_mask(const RasterImage& img, const LoadOptions& options) {
  LoadMode mode = options.mode;
  if (mode == LoadMode::Auto) {
    mode = (img.channels == 1 && !img.colormap) ? LoadMode::Indexed : LoadMode::Palette;
  }
  if (mode == LoadMode::Indexed) {
    if (img.channels != 1) {
      throw MaskFormatError("indexed mode needs a single-channel raster, got " +
                            std::to_string(img.channels) + " channels");
    }
    return SegmentationMask::from_codes(img.height, img.width, img.data);
  }
  if (options.tolerance < 0) throw InvalidArgument("palette tolerance must be >= 0");
  const std::size_t pixels = std::size_t(img.height) * img.width;
  std::vector<DamageCategory> labels(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    const Rgb px = img.rgb_at(i);
    auto c = options.palette.decode(px, options.tolerance);
    if (!c) {
      throw MaskFormatError("color " + to_string(px) + " has no palette mapping at (" +
                            std::to_string(i % img.width) + "," + std::to_string(i / img.width) +
                            ")");
    }
    labels[i] = *c;
  }
  return SegmentationMask(img.height, img.width, std::move(labels));
}

inline SegmentationMask load_mask(const std::filesystem::path& path,
                                  const LoadOptions& options = {}) {
  try {
    return decode_mask(read_raster(path), options);
  } catch (const MaskFormatError& e) {
    std::string what = e.what();
    if (what.find(path.string()) == std::string::npos) what = path.string() + ": " + what;
    throw MaskFormatError(what);
  }
}

inline RasterImage encode_mask(const SegmentationMask& mask, MaskEncoding encoding,
                               const Palette& palette = {}) {
  RasterImage img;
  img.height = mask.height();
  img.width = mask.width();
  if (encoding == MaskEncoding::PngPalette) {
    img.channels = 3;
    img.data.reserve(3 * mask.size());
    for (auto c : mask.labels()) {
      const Rgb& rgb = palette.color_of(c);
      img.data.insert(img.data.end(), {rgb.r, rgb.g, rgb.b});
    }
  } else {
    img.channels = 1;
    img.data.reserve(mask.size());
    for (auto c : mask.labels()) img.data.push_back(static_cast<std::uint8_t>(code_of(c)));
  }
  return img;
}

inline void save_mask(const std::filesystem::path& path, const SegmentationMask& mask,
                      MaskEncoding encoding, const Palette& palette = {}) {
  auto img = encode_mask(mask, encoding, palette);
  if (encoding != MaskEncoding::RawIndexed) {
    write_raster_png(path, img);
    return;
  }
  std::vector<std::uint8_t> out;
  out.reserve(8 + img.data.size());
  detail::write_le32(out, static_cast<std::uint32_t>(mask.height()));
  detail::write_le32(out, static_cast<std::uint32_t>(mask.width()));
  out.insert(out.end(), img.data.begin(), img.data.end());
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw MaskFormatError("cannot write " + path.string());
}

}  // namespace dmg
