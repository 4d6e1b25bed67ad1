#pragma once

// The three-branch quality regressor.
//
//   shape      f_s = E_s(sampled clip)
//   texture    f_t = [E_t^f(front), E_t^b(back)]            (separate weights)
//   alignment  f_c = A([e_i, e_t, e_i * e_t])               (e_i, e_t frozen)
//   fusion     f   = [f_c, f_t, f_s] over the enabled branches
//   head       (q, a, c) = affine(1024) -> relu -> affine(128) -> relu -> affine(3)

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "t23dqa/dataset.hpp"
#include "t23dqa/encoders.hpp"
#include "t23dqa/nn.hpp"
#include "t23dqa/projection.hpp"

namespace t23dqa {

struct BranchSwitches {
  bool use_shape = true;
  bool use_texture = true;
  bool use_align = true;

  bool any() const { return use_shape || use_texture || use_align; }
  bool operator==(const BranchSwitches&) const = default;
};

// Ablation configurations a-g: align only, texture only, shape only,
// no shape, no texture, no align, all branches.
BranchSwitches ablation_switches(char config);
inline constexpr std::string_view kAblationConfigs = "abcdefg";

struct ModelConfig {
  EncoderSpec shape{EncoderKind::kShape, std::string(kTinyTestEncoder), 64, false};
  EncoderSpec texture_front{EncoderKind::kTextureFront, std::string(kTinyTestEncoder), 64,
                            false};
  EncoderSpec texture_back{EncoderKind::kTextureBack, std::string(kTinyTestEncoder), 64,
                           false};
  EncoderSpec align_image{EncoderKind::kAlignImage, std::string(kTinyTestEncoder), 64, true};
  EncoderSpec align_text{EncoderKind::kAlignText, std::string(kTinyTestEncoder), 64, true};
  int align_fusion_dim = 64;
  std::vector<int> head_hidden{1024, 128};
  int output_dim = 3;
  BranchSwitches branches;
  int n_segments = 12;
  int text_context = 77;
  PreprocessConfig preprocess;
  std::uint64_t init_seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

// Throws ConfigError: no branch enabled, output width other than 3, bad
// encoder specs, mismatched image/text alignment widths.
void validate(const ModelConfig& config);

// Widths of f_s, f_t, f_c (0 for disabled branches) and of f.
struct FeatureLayout {
  int shape = 0;
  int texture = 0;
  int align = 0;
  int total() const { return shape + texture + align; }
};
FeatureLayout feature_layout(const ModelConfig& config);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Preprocessed inputs for one asset.
struct AssetInput {
  std::string asset_id;
  FrameBatch clip;   // the n_segments sampled frames
  FrameBatch front;  // frame 0
  FrameBatch back;   // frame K/2
  std::string prompt;
};

AssetInput make_input(const AssetRecord& asset, const ProjectionClip& clip,
                      SampleMode mode, std::uint64_t sample_seed, const ModelConfig& config);

struct FeatureBundle {
  nn::RowVector f_s;
  nn::RowVector f_t;
  nn::RowVector f_c;
  nn::RowVector f;
};

class QualityModel {
 public:
  explicit QualityModel(ModelConfig config);

  // Eval mode: a pure function of inputs and weights. Rows are (q, a, c).
  nn::Matrix predict(std::span<const AssetInput> batch) const;
  std::vector<ScoreTriple> score(std::span<const AssetInput> batch) const;
  std::vector<FeatureBundle> features(std::span<const AssetInput> batch) const;

  // Train mode: caches activations for backward().
  nn::Matrix forward(std::span<const AssetInput> batch);
  // Accumulates gradients of the loss given d loss / d outputs (B x 3).
  void backward(const nn::Matrix& grad_outputs);

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::vector<nn::Parameter*> trainable_parameters();
  std::vector<const nn::Parameter*> frozen_parameters() const;

  const ModelConfig& config() const { return config_; }
  const FeatureLayout& layout() const { return layout_; }
  nn::Mlp& head() { return head_; }
  const nn::Mlp& head() const { return head_; }

  // Prompts truncated to the text context so far.
  std::size_t truncated_prompts() const { return truncated_prompts_; }

 private:
  struct Descriptors {
    nn::Matrix shape, front, back, align_image, align_text;
  };
  Descriptors describe(std::span<const AssetInput> batch) const;
  nn::Matrix fuse_align_inputs(const nn::Matrix& image, const nn::Matrix& text) const;
  nn::Matrix concat_features(const nn::Matrix& f_c, const nn::Matrix& f_t,
                             const nn::Matrix& f_s, Eigen::Index rows) const;

  ModelConfig config_;
  FeatureLayout layout_;
  ShapeEncoder shape_;
  ImageEncoder texture_front_;
  ImageEncoder texture_back_;
  ImageEncoder align_image_;
  TextEncoder align_text_;
  nn::Linear align_fusion_;
  nn::Mlp head_;
  mutable std::size_t truncated_prompts_ = 0;
};

// Weights + config + preprocessing convention (+ free-form metadata).
void save_checkpoint(const std::filesystem::path& path, const QualityModel& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
  QualityModel model;
  nlohmann::json metadata;
};

// When `expected` is given the stored config must equal it.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig* expected = nullptr);

}  // namespace t23dqa
