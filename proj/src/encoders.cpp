#include "t23dqa/encoders.hpp"

#include <array>
#include <cctype>
#include <cmath>

#include "t23dqa/random.hpp"

namespace t23dqa {

namespace {

constexpr std::array<EncoderPreset, 3> kPresets = {{
    {"swin3d-s", "video swin transformer (small), Kinetics pretrained; shape branch", 768},
    {"swin-s", "swin transformer (small), ImageNet-1K pretrained; texture branch", 768},
    {"clip-vit-b-32", "contrastive language-image pair; alignment branch", 512},
}};

nn::Matrix l2_normalize_rows(nn::Matrix m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0.0) m.row(r) /= n;
  }
  return m;
}

}  // namespace

std::string_view encoder_kind_name(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kShape: return "shape";
    case EncoderKind::kTextureFront: return "texture_front";
    case EncoderKind::kTextureBack: return "texture_back";
    case EncoderKind::kAlignImage: return "align_image";
    case EncoderKind::kAlignText: return "align_text";
  }
  return "unknown";
}

EncoderKind parse_encoder_kind(std::string_view name) {
  for (auto k : {EncoderKind::kShape, EncoderKind::kTextureFront, EncoderKind::kTextureBack,
                 EncoderKind::kAlignImage, EncoderKind::kAlignText})
    if (encoder_kind_name(k) == name) return k;
  throw ConfigError("unknown encoder kind '" + std::string(name) + "'");
}

std::span<const EncoderPreset> encoder_presets() { return kPresets; }

std::optional<EncoderPreset> find_preset(std::string_view identifier) {
  for (const auto& p : kPresets)
    if (p.identifier == identifier) return p;
  return std::nullopt;
}

void validate(const EncoderSpec& spec) {
  const auto kind = std::string(encoder_kind_name(spec.kind));
  if (spec.output_dim <= 0) throw ConfigError(kind + " encoder: output_dim must be positive");
  if ((spec.kind == EncoderKind::kAlignImage || spec.kind == EncoderKind::kAlignText) &&
      !spec.frozen)
    throw ConfigError(kind + " encoder must be frozen");
  if (spec.identifier == kTinyTestEncoder) return;
  if (auto preset = find_preset(spec.identifier))
    throw WeightsUnavailableError(kind + " encoder: preset '" + spec.identifier +
                                  "' needs pretrained weights (" +
                                  std::string(preset->description) +
                                  "), which this build cannot load; use tiny-test");
  throw ConfigError(kind + " encoder: unknown identifier '" + spec.identifier + "'");
}

nn::RowVector patch_statistics(const FrameBatch& batch, int frame, int grid) {
  const int h = batch.height;
  const int w = batch.width;
  if (h < grid || w < grid)
    throw ValidationError("frame of " + std::to_string(w) + "x" + std::to_string(h) +
                          " is smaller than the " + std::to_string(grid) + "x" +
                          std::to_string(grid) + " patch grid");
  const int cells = grid * grid;
  nn::RowVector out(2 * batch.channels * cells);
  for (int c = 0; c < batch.channels; ++c) {
    const auto plane = batch.plane(frame, c);
    for (int gy = 0; gy < grid; ++gy) {
      const int y0 = gy * h / grid, y1 = (gy + 1) * h / grid;
      for (int gx = 0; gx < grid; ++gx) {
        const int x0 = gx * w / grid, x1 = (gx + 1) * w / grid;
        double sum = 0.0, sq = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) {
            const double v = plane[static_cast<std::size_t>(y) * w + x];
            sum += v;
            sq += v * v;
          }
        const double n = static_cast<double>((y1 - y0) * (x1 - x0));
        const double mean = sum / n;
        const int slot = c * cells + gy * grid + gx;
        out[slot] = mean;
        out[batch.channels * cells + slot] = std::sqrt(std::max(0.0, sq / n - mean * mean));
      }
    }
  }
  return out;
}

ShapeEncoder::ShapeEncoder(const EncoderSpec& spec, int n_frames, std::uint64_t seed)
    : n_frames_(n_frames) {
  validate(spec);
  if (n_frames < 1) throw ConfigError("shape encoder needs at least one frame");
  const int per_frame = 2 * Image::kChannels * kGrid * kGrid;
  const std::array<int, 3> widths = {n_frames * per_frame, kHidden, spec.output_dim};
  mlp_ = nn::Mlp("shape", widths, seed, spec.frozen);
}

nn::RowVector ShapeEncoder::describe(const FrameBatch& clip) const {
  if (clip.frames != n_frames_)
    throw ValidationError("shape encoder expects " + std::to_string(n_frames_) +
                          " frames, got " + std::to_string(clip.frames));
  const int per_frame = 2 * Image::kChannels * kGrid * kGrid;
  nn::RowVector out(n_frames_ * per_frame);
  for (int t = 0; t < n_frames_; ++t)
    out.segment(t * per_frame, per_frame) = patch_statistics(clip, t, kGrid);
  return out;
}

ImageEncoder::ImageEncoder(const std::string& name, const EncoderSpec& spec,
                           std::uint64_t seed)
    : frozen_(spec.frozen) {
  validate(spec);
  const std::array<int, 3> widths = {2 * Image::kChannels * kGrid * kGrid, kHidden,
                                     spec.output_dim};
  mlp_ = nn::Mlp(name, widths, seed, spec.frozen);
}

nn::RowVector ImageEncoder::describe(const FrameBatch& image) const {
  if (image.frames != 1)
    throw ValidationError("image encoder expects a single frame, got " +
                          std::to_string(image.frames));
  return patch_statistics(image, 0, kGrid);
}

nn::Matrix ImageEncoder::apply(const nn::Matrix& descriptors) const {
  nn::Matrix y = mlp_.apply(descriptors);
  return frozen_ ? l2_normalize_rows(std::move(y)) : y;
}

nn::Matrix ImageEncoder::forward(const nn::Matrix& descriptors) {
  if (frozen_) return apply(descriptors);
  return mlp_.forward(descriptors);
}

void ImageEncoder::backward(const nn::Matrix& grad) {
  if (frozen_) throw Error("backward through a frozen image encoder");
  mlp_.backward(grad);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

TextEncoder::TextEncoder(const EncoderSpec& spec, int context_length, std::uint64_t seed)
    : context_length_(context_length) {
  validate(spec);
  if (context_length < 1) throw ConfigError("text context length must be positive");
  projection_.name = "align_text.projection";
  projection_.frozen = true;
  projection_.value.resize(kBuckets, spec.output_dim);
  Rng rng(mix_seed(seed, fnv1a(projection_.name)));
  for (Eigen::Index i = 0; i < projection_.value.size(); ++i)
    projection_.value.data()[i] = normal(rng);
  projection_.zero_grad();
}

nn::RowVector TextEncoder::encode(std::string_view prompt, bool* truncated) const {
  auto tokens = tokenize(prompt);
  if (tokens.empty()) throw ValidationError("prompt is empty");
  const bool cut = static_cast<int>(tokens.size()) > context_length_;
  if (cut) tokens.resize(static_cast<std::size_t>(context_length_));
  if (truncated) *truncated = cut;

  nn::RowVector hashed = nn::RowVector::Zero(kBuckets);
  auto add = [&](std::string_view feature) {
    const std::uint64_t h = splitmix64(fnv1a(feature));
    hashed[static_cast<Eigen::Index>(h % kBuckets)] += (h >> 63) ? -1.0 : 1.0;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + ' ' + tokens[i + 1]);
  }
  nn::RowVector y = hashed * projection_.value;
  const double n = y.norm();
  if (n > 0.0) y /= n;
  return y;
}

}  // namespace t23dqa
