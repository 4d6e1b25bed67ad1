#include "t23dqa/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "t23dqa/errors.hpp"
#include "t23dqa/random.hpp"
#include "t23dqa/video_io.hpp"

namespace t23dqa {

namespace {

struct Colour {
  const char* word;
  double hue;
};
constexpr std::array<Colour, 6> kColours = {{{"red", 0.0},
                                              {"yellow", 60.0},
                                              {"green", 120.0},
                                              {"cyan", 180.0},
                                              {"blue", 240.0},
                                              {"magenta", 300.0}}};
constexpr std::array<const char*, 8> kNouns = {"vase", "teapot", "mushroom", "lantern",
                                               "pumpkin", "robot", "chair", "apple"};
constexpr std::array<const char*, 6> kExtras = {
    "", "on a wooden table", "made of glass", "in the style of a toy", "with intricate detail",
    "covered in moss"};

}  // namespace

double snap_rating(double value) {
  return std::clamp(std::round(value * 10.0) / 10.0, kMinRating, kMaxRating);
}

SyntheticStudy make_synthetic_study(const SyntheticStudyOptions& o) {
  if (o.n_assets < 1 || o.n_subjects < 1) throw ConfigError("synthetic study needs assets and subjects");
  if (o.n_frames < 2 || o.n_frames % 2 != 0) throw ConfigError("frame count must be even and >= 2");
  if (o.width < 8 || o.height < 8) throw ConfigError("synthetic frames must be at least 8x8");

  SyntheticStudy study;
  Rng rng(mix_seed(o.seed, fnv1a("synthetic-study")));
  for (int i = 0; i < o.n_assets; ++i) {
    // Latent scores in [0, 1].
    const double quality = uniform01(rng);
    const double authenticity = uniform01(rng);
    const bool matches = uniform01(rng) < 0.6;

    const auto& named = kColours[uniform_index(rng, kColours.size())];
    const Colour* shown = &named;
    if (!matches) {
      const std::size_t shift = 1 + uniform_index(rng, kColours.size() - 1);
      shown = &kColours[(static_cast<std::size_t>(&named - kColours.data()) + shift) %
                        kColours.size()];
    }
    const double correspondence =
        matches ? 0.65 + 0.35 * uniform01(rng) : 0.35 * uniform01(rng);

    SyntheticAsset a;
    a.base_hue_deg = shown->hue + uniform(rng, -12.0, 12.0);
    a.hue_sweep = uniform(rng, -0.05, 0.05);
    a.saturation = 0.35 + 0.6 * quality;
    a.value = 0.45 + 0.5 * quality;
    a.speckle = 0.3 * (1.0 - quality);
    a.wobble = 0.35 * (1.0 - authenticity);
    a.lobes = 2 + static_cast<int>(uniform_index(rng, 4));
    a.size = uniform(rng, 0.45, 0.7);
    a.seed = mix_seed(o.seed, static_cast<std::uint64_t>(i));

    char id[32];
    std::snprintf(id, sizeof id, "asset_%04d", i);
    AssetRecord rec;
    rec.asset_id = id;
    std::string prompt = std::string("a ") + named.word + " " +
                         kNouns[uniform_index(rng, kNouns.size())];
    const char* extra = kExtras[uniform_index(rng, kExtras.size())];
    if (*extra) prompt += std::string(" ") + extra;
    rec.prompt = prompt;
    rec.generator = std::string(kKnownGenerators[static_cast<std::size_t>(i) % kKnownGenerators.size()]);
    rec.video_path = rec.asset_id;
    rec.frame_count = o.n_frames;
    rec.width = o.width;
    rec.height = o.height;

    study.assets.emplace(rec.asset_id, a);
    study.manifest.push_back(std::move(rec));
    study.truth.push_back({0.5 + 4.0 * quality, 0.5 + 4.0 * authenticity,
                           0.5 + 4.0 * correspondence});
  }

  for (int s = 0; s < o.n_subjects; ++s) {
    char id[32];
    std::snprintf(id, sizeof id, "subject_%03d", s);
    Rng srng(mix_seed(o.seed, fnv1a("rater"), static_cast<std::uint64_t>(s)));
    const double bias = uniform(srng, -0.3, 0.3);
    const double scale = uniform(srng, 0.8, 1.2);
    for (std::size_t i = 0; i < study.manifest.size(); ++i) {
      RatingRecord r;
      r.subject_id = id;
      r.asset_id = study.manifest[i].asset_id;
      r.session = 1 + static_cast<int>(i * 3 / study.manifest.size());
      for (std::size_t d = 0; d < kNumDimensions; ++d)
        r.scores[d] = snap_rating(2.5 + scale * (study.truth[i][d] - 2.5) + bias +
                                  o.rater_noise * normal(srng));
      study.ratings.push_back(std::move(r));
    }
  }
  return study;
}

std::vector<AssetRecord> write_study_frames(const SyntheticStudy& study,
                                            const std::filesystem::path& dir) {
  std::vector<AssetRecord> out = study.manifest;
  for (auto& rec : out) {
    const SyntheticRenderer renderer(study.assets.at(rec.asset_id));
    const ProjectionClip clip =
        render_orbit(renderer, rec.asset_id, rec.frame_count, rec.width, rec.height);
    const auto clip_dir = dir / rec.asset_id;
    std::filesystem::create_directories(clip_dir);
    for (int k = 0; k < clip.frame_count(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04d.png", k);
      write_png(clip_dir / name, clip.frames[static_cast<std::size_t>(k)]);
    }
    rec.video_path = rec.asset_id;
  }
  return out;
}

}  // namespace t23dqa
