#pragma once

// Synthetic studies: procedural assets whose latent quality, authenticity and
// correspondence drive both their look and a panel of simulated raters.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "t23dqa/dataset.hpp"
#include "t23dqa/projection.hpp"

namespace t23dqa {

struct SyntheticStudyOptions {
  int n_assets = 12;
  int n_subjects = 15;
  int n_frames = 120;
  int width = 64;
  int height = 64;
  double rater_noise = 0.25;  // std of per-rating noise, in rating units
  std::uint64_t seed = 0;
};

struct SyntheticStudy {
  std::vector<AssetRecord> manifest;
  std::map<std::string, SyntheticAsset> assets;
  std::vector<Triple> truth;  // manifest order, on the 0-5 scale
  std::vector<RatingRecord> ratings;
};

SyntheticStudy make_synthetic_study(const SyntheticStudyOptions& options);

// Round to the 0.1 slider grid and clamp to [0, 5].
double snap_rating(double value);

// Renders every asset's orbit into <dir>/<asset_id>/frame_NNNN.png and points
// video_path at the relative directory. Returns the updated manifest.
std::vector<AssetRecord> write_study_frames(const SyntheticStudy& study,
                                            const std::filesystem::path& dir);

}  // namespace t23dqa
