#pragma once

// Feature encoders for the three branches.
//
// "tiny-test" encoders are small seeded networks: a parameter-free stem
// (per-channel mean and std over a grid of patches) feeding a trainable or
// frozen MLP. They keep the whole pipeline runnable without pretrained
// weights. Named presets for the large pretrained backbones are declared with
// their feature widths but need external weights.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "t23dqa/errors.hpp"
#include "t23dqa/image.hpp"
#include "t23dqa/nn.hpp"

namespace t23dqa {

enum class EncoderKind { kShape, kTextureFront, kTextureBack, kAlignImage, kAlignText };

std::string_view encoder_kind_name(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);

inline constexpr std::string_view kTinyTestEncoder = "tiny-test";

struct EncoderSpec {
  EncoderKind kind = EncoderKind::kShape;
  std::string identifier{kTinyTestEncoder};
  int output_dim = 64;
  bool frozen = false;

  bool operator==(const EncoderSpec&) const = default;
};

struct EncoderPreset {
  std::string_view identifier;
  std::string_view description;
  int output_dim;
};

// Pretrained backbones the architecture is designed around.
std::span<const EncoderPreset> encoder_presets();
std::optional<EncoderPreset> find_preset(std::string_view identifier);

class WeightsUnavailableError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Alignment encoders must be frozen; output_dim positive; identifier known.
// A known preset other than tiny-test raises WeightsUnavailableError.
void validate(const EncoderSpec& spec);

// Per-channel mean and std over a grid x grid tiling of one frame:
// 2 * 3 * grid * grid values.
nn::RowVector patch_statistics(const FrameBatch& batch, int frame, int grid);

// Temporal encoder over the sampled clip. Frame descriptors are concatenated
// in order, so the output depends on frame order.
class ShapeEncoder {
 public:
  static constexpr int kGrid = 4;
  static constexpr int kHidden = 64;

  ShapeEncoder() = default;
  ShapeEncoder(const EncoderSpec& spec, int n_frames, std::uint64_t seed);

  // Throws ValidationError when the clip length differs from n_frames.
  nn::RowVector describe(const FrameBatch& clip) const;
  nn::Matrix forward(const nn::Matrix& descriptors) { return mlp_.forward(descriptors); }
  nn::Matrix apply(const nn::Matrix& descriptors) const { return mlp_.apply(descriptors); }
  void backward(const nn::Matrix& grad) { mlp_.backward(grad); }
  void collect(std::vector<nn::Parameter*>& out) { mlp_.collect(out); }
  void collect(std::vector<const nn::Parameter*>& out) const { mlp_.collect(out); }
  int n_frames() const { return n_frames_; }
  int output_dim() const { return mlp_.out_features(); }

 private:
  int n_frames_ = 0;
  nn::Mlp mlp_;
};

// Single-view encoder. Frozen instances L2-normalise their output.
class ImageEncoder {
 public:
  static constexpr int kGrid = 8;
  static constexpr int kHidden = 64;

  ImageEncoder() = default;
  ImageEncoder(const std::string& name, const EncoderSpec& spec, std::uint64_t seed);

  nn::RowVector describe(const FrameBatch& image) const;
  nn::Matrix forward(const nn::Matrix& descriptors);
  nn::Matrix apply(const nn::Matrix& descriptors) const;
  void backward(const nn::Matrix& grad);
  void collect(std::vector<nn::Parameter*>& out) { mlp_.collect(out); }
  void collect(std::vector<const nn::Parameter*>& out) const { mlp_.collect(out); }
  int output_dim() const { return mlp_.out_features(); }
  bool frozen() const { return frozen_; }

 private:
  bool frozen_ = false;
  nn::Mlp mlp_;
};

// Frozen prompt encoder: signed feature hashing of word unigrams and bigrams
// followed by a fixed projection and L2 normalisation.
class TextEncoder {
 public:
  static constexpr int kBuckets = 1024;

  TextEncoder() = default;
  TextEncoder(const EncoderSpec& spec, int context_length, std::uint64_t seed);

  // Throws ValidationError for an empty prompt. Prompts longer than the
  // context are truncated and *truncated is set.
  nn::RowVector encode(std::string_view prompt, bool* truncated = nullptr) const;
  void collect(std::vector<nn::Parameter*>& out) { out.push_back(&projection_); }
  void collect(std::vector<const nn::Parameter*>& out) const { out.push_back(&projection_); }
  int output_dim() const { return static_cast<int>(projection_.value.cols()); }
  int context_length() const { return context_length_; }

 private:
  int context_length_ = 77;
  nn::Parameter projection_;
};

// Lower-cased alphanumeric words.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace t23dqa
