#pragma once

// Decoding and encoding of frames. Backed by OpenCV (FFmpeg for video
// containers); nothing outside this file touches OpenCV types.

#include <filesystem>
#include <span>
#include <string>

#include "t23dqa/image.hpp"
#include "t23dqa/projection.hpp"

namespace t23dqa {

// Reads every frame of a video file, or every image of a directory in
// lexicographic file-name order.
ProjectionClip decode_clip(const std::filesystem::path& path, const std::string& asset_id);

Image read_image(const std::filesystem::path& path);

// Lossless PNG, 8 bits per channel.
void write_png(const std::filesystem::path& path, const Image& image);

// Encodes frames into a video container chosen by extension (.avi uses
// MJPG, .mp4 uses mp4v).
void write_video(const std::filesystem::path& path, std::span<const Image> frames,
                 double fps);

}  // namespace t23dqa
