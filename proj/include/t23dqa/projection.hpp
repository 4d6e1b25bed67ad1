#pragma once

// Orbit projection clips and the frame selection rules applied to them.
//
// A clip holds K frames rendered at equal azimuth steps over one full orbit.
// Training draws one random frame from each of n contiguous segments, testing
// takes the first frame of each segment; the texture branch looks at the
// front view (frame 0) and the back view (frame K/2). Indices are 0-based.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "t23dqa/dataset.hpp"
#include "t23dqa/errors.hpp"
#include "t23dqa/image.hpp"

namespace t23dqa {

struct CameraOrbit {
  int n_steps = 120;
  double elevation_deg = 15.0;
  double radius = 2.5;  // frames a unit-radius asset
};

struct ProjectionClip {
  std::string asset_id;
  std::vector<Image> frames;
  double fps = 30.0;
  CameraOrbit orbit;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

// Throws ValidationError for an empty clip or mixed resolutions.
void validate(const ProjectionClip& clip);

class RenderError : public Error {
 public:
  RenderError(const std::string& what, int frame_index)
      : Error("frame " + std::to_string(frame_index) + ": " + what),
        frame_index_(frame_index) {}
  int frame_index() const { return frame_index_; }

 private:
  int frame_index_;
};

// A renderable 3D source: produces the view from a camera on the orbit.
class OrbitRenderer {
 public:
  virtual ~OrbitRenderer() = default;
  virtual Image render_view(double azimuth_deg, const CameraOrbit& orbit, int width,
                            int height) const = 0;
};

// K frames at azimuth 360 * k / K, k = 0..K-1. Exceptions thrown by the
// renderer are rethrown as RenderError carrying the frame index.
ProjectionClip render_orbit(const OrbitRenderer& renderer, std::string asset_id,
                            int n_frames, int width, int height,
                            CameraOrbit orbit = {}, double fps = 30.0);

// Procedural stand-in for a generated asset: a blob whose silhouette,
// colour and surface speckle depend on the viewing azimuth. Used for tests
// and for synthetic studies where no real renders exist.
struct SyntheticAsset {
  double base_hue_deg = 0.0;
  double hue_sweep = 0.0;  // hue advances hue_sweep * azimuth
  double saturation = 0.85;
  double value = 0.9;
  double size = 0.55;      // silhouette radius as a fraction of half the frame
  double wobble = 0.0;     // relative silhouette irregularity
  int lobes = 3;
  double speckle = 0.0;    // amplitude of per-pixel brightness noise
  std::uint64_t seed = 0;
};

class SyntheticRenderer final : public OrbitRenderer {
 public:
  explicit SyntheticRenderer(SyntheticAsset asset) : asset_(asset) {}
  Image render_view(double azimuth_deg, const CameraOrbit& orbit, int width,
                    int height) const override;
  const SyntheticAsset& asset() const { return asset_; }

  static constexpr float kBackground = 0.08f;

 private:
  SyntheticAsset asset_;
};

enum class SampleMode { kTrain, kTest };

struct FrameSample {
  SampleMode mode = SampleMode::kTest;
  int n_segments = 12;
  std::vector<int> indices;
  int crop_width = 224;
  int crop_height = 224;
};

// Boundaries [begin, end) of segment i when K frames are cut into n
// contiguous segments; the first K mod n segments hold one extra frame.
std::pair<int, int> segment_bounds(int n_frames, int n_segments, int i);

// Throws ValidationError when the clip has fewer frames than segments. The
// seed only matters in train mode.
FrameSample sample_frames(int n_frames, SampleMode mode, int n_segments = 12,
                          std::uint64_t seed = 0);
FrameSample sample_frames(const ProjectionClip& clip, SampleMode mode,
                          int n_segments = 12, std::uint64_t seed = 0);

// 0-based indices of the front and back views: 0 and K/2. Odd K throws.
std::pair<int, int> front_back_indices(int n_frames);
std::pair<const Image*, const Image*> front_back_frames(const ProjectionClip& clip);

// Per-channel normalisation expected by the encoders.
struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
  bool operator==(const Normalization&) const = default;
};

struct PreprocessConfig {
  int width = 224;
  int height = 224;
  Normalization norm;
  bool operator==(const PreprocessConfig&) const = default;
};

// Resize every image and normalise per channel into an N x C x H x W batch.
FrameBatch preprocess(std::span<const Image> images, const PreprocessConfig& config = {});
FrameBatch preprocess(std::span<const Image* const> images,
                      const PreprocessConfig& config = {});

// Where clips come from: decoded videos on disk, or synthetic renders.
class ClipSource {
 public:
  virtual ~ClipSource() = default;
  virtual std::shared_ptr<const ProjectionClip> load(const AssetRecord& asset) const = 0;
};

// Decodes asset.video_path (a video file or a directory of frame images),
// resolved against base_dir when relative.
class VideoClipSource final : public ClipSource {
 public:
  explicit VideoClipSource(std::filesystem::path base_dir = {})
      : base_dir_(std::move(base_dir)) {}
  std::shared_ptr<const ProjectionClip> load(const AssetRecord& asset) const override;

 private:
  std::filesystem::path base_dir_;
};

// Renders SyntheticAssets by asset id.
class SyntheticClipSource final : public ClipSource {
 public:
  SyntheticClipSource(std::map<std::string, SyntheticAsset> assets, CameraOrbit orbit = {})
      : assets_(std::move(assets)), orbit_(orbit) {}
  std::shared_ptr<const ProjectionClip> load(const AssetRecord& asset) const override;

 private:
  std::map<std::string, SyntheticAsset> assets_;
  CameraOrbit orbit_;
};

// Keeps decoded clips in memory, optionally downscaled first; loads each
// asset once. Safe to share between threads.
class CachedClipSource final : public ClipSource {
 public:
  explicit CachedClipSource(const ClipSource& inner, int max_side = 0)
      : inner_(inner), max_side_(max_side) {}
  std::shared_ptr<const ProjectionClip> load(const AssetRecord& asset) const override;

 private:
  const ClipSource& inner_;
  int max_side_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const ProjectionClip>> cache_;
};

}  // namespace t23dqa
