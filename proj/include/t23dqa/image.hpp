#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace t23dqa {

// RGB float image, row-major interleaved (HWC), nominal range [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  static constexpr int kChannels = 3;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * kChannels, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }
  float& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  float at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  bool operator==(const Image&) const = default;
};

// Frames stacked as N x C x H x W, the layout the encoders consume.
struct FrameBatch {
  int frames = 0;
  int channels = Image::kChannels;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t frame_size() const { return plane_size() * channels; }
  std::span<const float> frame(int i) const {
    return {values.data() + frame_size() * static_cast<std::size_t>(i), frame_size()};
  }
  std::span<const float> plane(int i, int c) const {
    return {values.data() + frame_size() * static_cast<std::size_t>(i) +
                plane_size() * static_cast<std::size_t>(c),
            plane_size()};
  }
  bool operator==(const FrameBatch&) const = default;
};

// Bilinear resampling with half-pixel centres and edge clamping. A resize to
// the source size returns the source unchanged.
Image resize_bilinear(const Image& src, int width, int height);

// HSV (h in degrees, s and v in [0,1]) to RGB in [0,1].
std::array<float, 3> hsv_to_rgb(double h_deg, double s, double v);

}  // namespace t23dqa
