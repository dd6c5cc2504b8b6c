#include "gleason/image.hpp"

#include <png.h>

#include <cstring>

#include "gleason/errors.hpp"

namespace gleason {

Image8 Image8::crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const {
  if (x0 + w > width || y0 + h > height) throw DimensionError("crop out of bounds");
  Image8 out(w, h, channels);
  for (std::size_t y = 0; y < h; ++y) {
    std::memcpy(&out.pixels[y * w * channels], &pixels[((y0 + y) * width + x0) * channels], w * channels);
  }
  return out;
}

Image8 read_png(const std::string& path, std::size_t channels) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("read_png: channels must be 1 or 3");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw InputError("cannot read PNG " + path + ": " + image.message);
  }
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out(image.width, image.height, channels);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw InputError("cannot decode PNG " + path + ": " + image.message);
  }
  return out;
}

void write_png(const std::string& path, const Image8& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw InputError("cannot write PNG " + path + ": " + image.message);
  }
}

Image8 downsample(const Image8& img, std::size_t factor) {
  if (factor == 0 || img.width % factor != 0 || img.height % factor != 0) {
    throw ConfigError("cannot downsample " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                      " by " + std::to_string(factor));
  }
  if (factor == 1) return img;
  Image8 out(img.width / factor, img.height / factor, img.channels);
  const std::size_t area = factor * factor;
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        std::size_t s = 0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx) s += img.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = static_cast<std::uint8_t>((s + area / 2) / area);
      }
  return out;
}

Tensor image_to_tensor(const Image8& img) {
  Tensor t({img.channels, img.height, img.width});
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        t[(c * img.height + y) * img.width + x] = (img.at(x, y, c) / 255.0 - 0.5) / 0.25;
  return t;
}

}  // namespace gleason
