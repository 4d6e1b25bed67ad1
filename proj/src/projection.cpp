#include "t23dqa/projection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "t23dqa/random.hpp"
#include "t23dqa/video_io.hpp"

namespace t23dqa {

void validate(const ProjectionClip& clip) {
  if (clip.frames.empty())
    throw ValidationError("clip '" + clip.asset_id + "' has no frames");
  const int w = clip.frames.front().width;
  const int h = clip.frames.front().height;
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    const Image& f = clip.frames[i];
    if (f.empty() || f.width != w || f.height != h)
      throw ValidationError("clip '" + clip.asset_id + "': frame " + std::to_string(i) +
                            " does not share the clip resolution");
  }
}

ProjectionClip render_orbit(const OrbitRenderer& renderer, std::string asset_id,
                            int n_frames, int width, int height, CameraOrbit orbit,
                            double fps) {
  if (n_frames < 1) throw ValidationError("n_frames must be >= 1");
  if (width <= 0 || height <= 0) throw ValidationError("resolution must be positive");
  orbit.n_steps = n_frames;
  ProjectionClip clip;
  clip.asset_id = std::move(asset_id);
  clip.fps = fps;
  clip.orbit = orbit;
  clip.frames.reserve(static_cast<std::size_t>(n_frames));
  for (int k = 0; k < n_frames; ++k) {
    const double azimuth = 360.0 * k / n_frames;
    try {
      Image frame = renderer.render_view(azimuth, orbit, width, height);
      if (frame.width != width || frame.height != height)
        throw Error("renderer returned " + std::to_string(frame.width) + "x" +
                    std::to_string(frame.height));
      clip.frames.push_back(std::move(frame));
    } catch (const RenderError&) {
      throw;
    } catch (const std::exception& e) {
      throw RenderError(e.what(), k);
    }
  }
  return clip;
}

namespace {

// Deterministic value in [-1, 1] for a surface cell.
double cell_noise(std::uint64_t seed, int u, int v) {
  const std::uint64_t h =
      mix_seed(seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(u)),
               static_cast<std::uint64_t>(static_cast<std::int64_t>(v)));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

}  // namespace

Image SyntheticRenderer::render_view(double azimuth_deg, const CameraOrbit& orbit,
                                     int width, int height) const {
  Image img(width, height, kBackground);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double elev = orbit.elevation_deg * std::numbers::pi / 180.0;
  const double hue = asset_.base_hue_deg + asset_.hue_sweep * azimuth_deg;
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double half = std::min(width, height) / 2.0;
  const double scale = orbit.radius > 0 ? 2.5 / orbit.radius : 1.0;
  const double r0 = asset_.size * half * scale;
  // Higher cameras see a flatter silhouette.
  const double squash = 1.0 - 0.3 * std::sin(elev);
  constexpr int kCellsAround = 16;
  constexpr int kCellsRadial = 6;

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = x - cx;
      const double dy = (y - cy) / squash;
      const double r = std::hypot(dx, dy);
      const double phi = std::atan2(dy, dx);
      const double edge =
          r0 * (1.0 + asset_.wobble * std::sin(asset_.lobes * (phi + az)) *
                          (0.6 + 0.4 * std::cos(2.0 * az)));
      if (r > edge) continue;
      const double rel = edge > 0 ? r / edge : 0.0;
      double shade = 0.7 + 0.3 * (1.0 - rel * rel);
      if (asset_.speckle > 0.0) {
        // Surface cells are fixed on the asset, so they rotate with the camera.
        double u = std::fmod(phi + az, kTwoPi);
        if (u < 0) u += kTwoPi;
        const int cu = static_cast<int>(u / kTwoPi * kCellsAround);
        const int cr = static_cast<int>(rel * kCellsRadial);
        shade *= 1.0 + asset_.speckle * cell_noise(asset_.seed, cu, cr);
      }
      const double v = std::clamp(asset_.value * shade, 0.02, 1.0);
      const auto rgb = hsv_to_rgb(hue, asset_.saturation, v);
      for (int c = 0; c < Image::kChannels; ++c) img.at(x, y, c) = rgb[c];
    }
  }
  return img;
}

std::pair<int, int> segment_bounds(int n_frames, int n_segments, int i) {
  const int base = n_frames / n_segments;
  const int extra = n_frames % n_segments;
  const int begin = i * base + std::min(i, extra);
  return {begin, begin + base + (i < extra ? 1 : 0)};
}

FrameSample sample_frames(int n_frames, SampleMode mode, int n_segments,
                          std::uint64_t seed) {
  if (n_segments < 1) throw ValidationError("n_segments must be >= 1");
  if (n_frames < n_segments)
    throw ValidationError("clip has " + std::to_string(n_frames) + " frames, fewer than " +
                          std::to_string(n_segments) + " segments");
  FrameSample sample;
  sample.mode = mode;
  sample.n_segments = n_segments;
  sample.indices.reserve(static_cast<std::size_t>(n_segments));
  Rng rng(mix_seed(seed, 0x5e9u));
  for (int i = 0; i < n_segments; ++i) {
    const auto [begin, end] = segment_bounds(n_frames, n_segments, i);
    if (mode == SampleMode::kTest) {
      sample.indices.push_back(begin);
    } else {
      sample.indices.push_back(
          begin + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(end - begin))));
    }
  }
  return sample;
}

FrameSample sample_frames(const ProjectionClip& clip, SampleMode mode, int n_segments,
                          std::uint64_t seed) {
  return sample_frames(clip.frame_count(), mode, n_segments, seed);
}

std::pair<int, int> front_back_indices(int n_frames) {
  if (n_frames < 2 || n_frames % 2 != 0)
    throw ValidationError("front/back pairing needs an even frame count, got " +
                          std::to_string(n_frames));
  return {0, n_frames / 2};
}

std::pair<const Image*, const Image*> front_back_frames(const ProjectionClip& clip) {
  const auto [front, back] = front_back_indices(clip.frame_count());
  return {&clip.frames[static_cast<std::size_t>(front)],
          &clip.frames[static_cast<std::size_t>(back)]};
}

FrameBatch preprocess(std::span<const Image* const> images, const PreprocessConfig& config) {
  if (images.empty()) throw ValidationError("preprocess needs at least one image");
  FrameBatch batch;
  batch.frames = static_cast<int>(images.size());
  batch.height = config.height;
  batch.width = config.width;
  batch.values.resize(batch.frame_size() * images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& src = *images[i];
    if (src.empty()) throw ValidationError("preprocess: image " + std::to_string(i) +
                                           " has zero size");
    const Image resized = resize_bilinear(src, config.width, config.height);
    float* out = batch.values.data() + batch.frame_size() * i;
    for (int c = 0; c < Image::kChannels; ++c) {
      const float mean = config.norm.mean[c];
      const float inv = 1.0f / config.norm.std[c];
      float* plane = out + batch.plane_size() * static_cast<std::size_t>(c);
      for (int y = 0; y < config.height; ++y)
        for (int x = 0; x < config.width; ++x)
          plane[static_cast<std::size_t>(y) * config.width + x] =
              (resized.at(x, y, c) - mean) * inv;
    }
  }
  return batch;
}

FrameBatch preprocess(std::span<const Image> images, const PreprocessConfig& config) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return preprocess(std::span<const Image* const>(ptrs), config);
}

std::shared_ptr<const ProjectionClip> VideoClipSource::load(const AssetRecord& asset) const {
  std::filesystem::path path = asset.video_path;
  if (path.is_relative() && !base_dir_.empty()) path = base_dir_ / path;
  auto clip = std::make_shared<ProjectionClip>(decode_clip(path, asset.asset_id));
  validate(*clip);
  return clip;
}

std::shared_ptr<const ProjectionClip> SyntheticClipSource::load(
    const AssetRecord& asset) const {
  auto it = assets_.find(asset.asset_id);
  if (it == assets_.end())
    throw NotFoundError("no synthetic asset registered for '" + asset.asset_id + "'");
  return std::make_shared<ProjectionClip>(render_orbit(SyntheticRenderer(it->second),
                                                       asset.asset_id, asset.frame_count,
                                                       asset.width, asset.height, orbit_));
}

std::shared_ptr<const ProjectionClip> CachedClipSource::load(const AssetRecord& asset) const {
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(asset.asset_id);
    if (it != cache_.end()) return it->second;
  }
  auto loaded = inner_.load(asset);
  if (max_side_ > 0 && !loaded->frames.empty()) {
    const Image& f0 = loaded->frames.front();
    const int side = std::max(f0.width, f0.height);
    if (side > max_side_) {
      auto small = std::make_shared<ProjectionClip>(*loaded);
      const double s = static_cast<double>(max_side_) / side;
      const int w = std::max(1, static_cast<int>(std::lround(f0.width * s)));
      const int h = std::max(1, static_cast<int>(std::lround(f0.height * s)));
      for (auto& f : small->frames) f = resize_bilinear(f, w, h);
      loaded = std::move(small);
    }
  }
  std::lock_guard lock(mutex_);
  return cache_.emplace(asset.asset_id, std::move(loaded)).first->second;
}

}  // namespace t23dqa
