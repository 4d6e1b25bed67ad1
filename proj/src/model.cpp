#include "t23dqa/model.hpp"

#include <fstream>
#include <map>

#include "t23dqa/random.hpp"

namespace t23dqa {

using nlohmann::json;

BranchSwitches ablation_switches(char config) {
  switch (config) {
    case 'a': return {false, false, true};
    case 'b': return {false, true, false};
    case 'c': return {true, false, false};
    case 'd': return {false, true, true};
    case 'e': return {true, false, true};
    case 'f': return {true, true, false};
    case 'g': return {true, true, true};
    default:
      throw ConfigError(std::string("unknown ablation config '") + config +
                        "' (expected one of a-g)");
  }
}

void validate(const ModelConfig& config) {
  if (!config.branches.any()) throw ConfigError("model config enables no branch");
  if (config.output_dim != 3)
    throw ConfigError("output width must be exactly 3, got " + std::to_string(config.output_dim));
  if (config.n_segments < 1) throw ConfigError("n_segments must be >= 1");
  if (config.head_hidden.empty()) throw ConfigError("head needs at least one hidden layer");
  for (int w : config.head_hidden)
    if (w <= 0) throw ConfigError("head widths must be positive");
  if (config.preprocess.width <= 0 || config.preprocess.height <= 0)
    throw ConfigError("input resolution must be positive");
  auto expect_kind = [](const EncoderSpec& s, EncoderKind k) {
    if (s.kind != k)
      throw ConfigError("encoder slot " + std::string(encoder_kind_name(k)) + " holds a " +
                        std::string(encoder_kind_name(s.kind)) + " spec");
  };
  expect_kind(config.shape, EncoderKind::kShape);
  expect_kind(config.texture_front, EncoderKind::kTextureFront);
  expect_kind(config.texture_back, EncoderKind::kTextureBack);
  expect_kind(config.align_image, EncoderKind::kAlignImage);
  expect_kind(config.align_text, EncoderKind::kAlignText);
  if (config.branches.use_shape) validate(config.shape);
  if (config.branches.use_texture) {
    validate(config.texture_front);
    validate(config.texture_back);
  }
  if (config.branches.use_align) {
    validate(config.align_image);
    validate(config.align_text);
    if (config.align_image.output_dim != config.align_text.output_dim)
      throw ConfigError("alignment image and text features must have the same width");
    if (config.align_fusion_dim <= 0) throw ConfigError("align_fusion_dim must be positive");
  }
}

FeatureLayout feature_layout(const ModelConfig& config) {
  FeatureLayout layout;
  if (config.branches.use_shape) layout.shape = config.shape.output_dim;
  if (config.branches.use_texture)
    layout.texture = config.texture_front.output_dim + config.texture_back.output_dim;
  if (config.branches.use_align) layout.align = config.align_fusion_dim;
  return layout;
}

namespace {

json to_json(const EncoderSpec& s) {
  return {{"kind", std::string(encoder_kind_name(s.kind))},
          {"identifier", s.identifier},
          {"output_dim", s.output_dim},
          {"frozen", s.frozen}};
}

EncoderSpec encoder_from_json(const json& j) {
  EncoderSpec s;
  s.kind = parse_encoder_kind(j.at("kind").get<std::string>());
  s.identifier = j.at("identifier").get<std::string>();
  s.output_dim = j.at("output_dim").get<int>();
  s.frozen = j.at("frozen").get<bool>();
  return s;
}

nn::Matrix rows_of(const std::vector<nn::RowVector>& rows) {
  nn::Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
  return m;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"shape", to_json(c.shape)},
          {"texture_front", to_json(c.texture_front)},
          {"texture_back", to_json(c.texture_back)},
          {"align_image", to_json(c.align_image)},
          {"align_text", to_json(c.align_text)},
          {"align_fusion_dim", c.align_fusion_dim},
          {"head_hidden", c.head_hidden},
          {"output_dim", c.output_dim},
          {"use_shape", c.branches.use_shape},
          {"use_texture", c.branches.use_texture},
          {"use_align", c.branches.use_align},
          {"n_segments", c.n_segments},
          {"text_context", c.text_context},
          {"preprocess",
           {{"width", c.preprocess.width},
            {"height", c.preprocess.height},
            {"mean", c.preprocess.norm.mean},
            {"std", c.preprocess.norm.std}}},
          {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig c;
    c.shape = encoder_from_json(j.at("shape"));
    c.texture_front = encoder_from_json(j.at("texture_front"));
    c.texture_back = encoder_from_json(j.at("texture_back"));
    c.align_image = encoder_from_json(j.at("align_image"));
    c.align_text = encoder_from_json(j.at("align_text"));
    c.align_fusion_dim = j.at("align_fusion_dim").get<int>();
    c.head_hidden = j.at("head_hidden").get<std::vector<int>>();
    c.output_dim = j.at("output_dim").get<int>();
    c.branches = {j.at("use_shape").get<bool>(), j.at("use_texture").get<bool>(),
                  j.at("use_align").get<bool>()};
    c.n_segments = j.at("n_segments").get<int>();
    c.text_context = j.at("text_context").get<int>();
    const json& p = j.at("preprocess");
    c.preprocess.width = p.at("width").get<int>();
    c.preprocess.height = p.at("height").get<int>();
    c.preprocess.norm.mean = p.at("mean").get<std::array<float, 3>>();
    c.preprocess.norm.std = p.at("std").get<std::array<float, 3>>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

AssetInput make_input(const AssetRecord& asset, const ProjectionClip& clip, SampleMode mode,
                      std::uint64_t sample_seed, const ModelConfig& config) {
  validate(clip);
  AssetInput input;
  input.asset_id = asset.asset_id;
  input.prompt = asset.prompt;
  const FrameSample sample = sample_frames(clip, mode, config.n_segments, sample_seed);
  std::vector<const Image*> picked;
  picked.reserve(sample.indices.size());
  for (int i : sample.indices) picked.push_back(&clip.frames[static_cast<std::size_t>(i)]);
  input.clip = preprocess(std::span<const Image* const>(picked), config.preprocess);
  const auto [front, back] = front_back_frames(clip);
  input.front = preprocess(std::span<const Image* const>(&front, 1), config.preprocess);
  input.back = preprocess(std::span<const Image* const>(&back, 1), config.preprocess);
  return input;
}

QualityModel::QualityModel(ModelConfig config) : config_(std::move(config)) {
  validate(config_);
  layout_ = feature_layout(config_);
  const std::uint64_t seed = config_.init_seed;
  const auto& b = config_.branches;
  if (b.use_shape)
    shape_ = ShapeEncoder(config_.shape, config_.n_segments, mix_seed(seed, 1));
  if (b.use_texture) {
    texture_front_ = ImageEncoder("texture_front", config_.texture_front, mix_seed(seed, 2));
    texture_back_ = ImageEncoder("texture_back", config_.texture_back, mix_seed(seed, 3));
  }
  if (b.use_align) {
    align_image_ = ImageEncoder("align_image", config_.align_image, mix_seed(seed, 4));
    align_text_ = TextEncoder(config_.align_text, config_.text_context, mix_seed(seed, 5));
    align_fusion_ = nn::Linear("align_fusion", 3 * config_.align_image.output_dim,
                               config_.align_fusion_dim, mix_seed(seed, 6));
  }
  std::vector<int> widths;
  widths.push_back(layout_.total());
  widths.insert(widths.end(), config_.head_hidden.begin(), config_.head_hidden.end());
  widths.push_back(config_.output_dim);
  head_ = nn::Mlp("head", widths, mix_seed(seed, 7));
}

QualityModel::Descriptors QualityModel::describe(std::span<const AssetInput> batch) const {
  if (batch.empty()) throw ValidationError("empty batch");
  const auto& b = config_.branches;
  std::vector<nn::RowVector> shape, front, back, image, text;
  for (const auto& in : batch) {
    if (b.use_shape) shape.push_back(shape_.describe(in.clip));
    if (b.use_texture) {
      if (in.front.height != in.back.height || in.front.width != in.back.width)
        throw ValidationError("asset '" + in.asset_id +
                              "': front and back views differ in resolution");
      front.push_back(texture_front_.describe(in.front));
      back.push_back(texture_back_.describe(in.back));
    }
    if (b.use_align) {
      image.push_back(align_image_.describe(in.front));
      bool truncated = false;
      text.push_back(align_text_.encode(in.prompt, &truncated));
      if (truncated) ++truncated_prompts_;
    }
  }
  return {rows_of(shape), rows_of(front), rows_of(back), rows_of(image), rows_of(text)};
}

nn::Matrix QualityModel::fuse_align_inputs(const nn::Matrix& image,
                                           const nn::Matrix& text) const {
  nn::Matrix z(image.rows(), image.cols() * 3);
  z << image, text, image.cwiseProduct(text);
  return z;
}

nn::Matrix QualityModel::concat_features(const nn::Matrix& f_c, const nn::Matrix& f_t,
                                         const nn::Matrix& f_s, Eigen::Index rows) const {
  nn::Matrix f(rows, layout_.total());
  Eigen::Index col = 0;
  if (layout_.align) {
    f.middleCols(col, layout_.align) = f_c;
    col += layout_.align;
  }
  if (layout_.texture) {
    f.middleCols(col, layout_.texture) = f_t;
    col += layout_.texture;
  }
  if (layout_.shape) f.middleCols(col, layout_.shape) = f_s;
  return f;
}

std::vector<FeatureBundle> QualityModel::features(std::span<const AssetInput> batch) const {
  const Descriptors d = describe(batch);
  const auto rows = static_cast<Eigen::Index>(batch.size());
  const auto& b = config_.branches;
  nn::Matrix f_s, f_t, f_c;
  if (b.use_shape) f_s = shape_.apply(d.shape);
  if (b.use_texture) {
    f_t.resize(rows, layout_.texture);
    f_t << texture_front_.apply(d.front), texture_back_.apply(d.back);
  }
  if (b.use_align) f_c = align_fusion_.apply(fuse_align_inputs(align_image_.apply(d.align_image),
                                                               d.align_text));
  const nn::Matrix f = concat_features(f_c, f_t, f_s, rows);
  std::vector<FeatureBundle> out(batch.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto& fb = out[static_cast<std::size_t>(r)];
    if (b.use_shape) fb.f_s = f_s.row(r);
    if (b.use_texture) fb.f_t = f_t.row(r);
    if (b.use_align) fb.f_c = f_c.row(r);
    fb.f = f.row(r);
  }
  return out;
}

nn::Matrix QualityModel::predict(std::span<const AssetInput> batch) const {
  const auto bundles = features(batch);
  nn::Matrix f(static_cast<Eigen::Index>(bundles.size()), layout_.total());
  for (std::size_t i = 0; i < bundles.size(); ++i)
    f.row(static_cast<Eigen::Index>(i)) = bundles[i].f;
  return head_.apply(f);
}

std::vector<ScoreTriple> QualityModel::score(std::span<const AssetInput> batch) const {
  const nn::Matrix y = predict(batch);
  std::vector<ScoreTriple> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out[i].asset_id = batch[i].asset_id;
    for (int d = 0; d < 3; ++d) out[i].scores[d] = y(static_cast<Eigen::Index>(i), d);
  }
  return out;
}

nn::Matrix QualityModel::forward(std::span<const AssetInput> batch) {
  const Descriptors d = describe(batch);
  const auto rows = static_cast<Eigen::Index>(batch.size());
  const auto& b = config_.branches;
  nn::Matrix f_s, f_t, f_c;
  if (b.use_shape) f_s = shape_.forward(d.shape);
  if (b.use_texture) {
    f_t.resize(rows, layout_.texture);
    f_t << texture_front_.forward(d.front), texture_back_.forward(d.back);
  }
  if (b.use_align)
    f_c = align_fusion_.forward(fuse_align_inputs(align_image_.apply(d.align_image),
                                                  d.align_text));
  return head_.forward(concat_features(f_c, f_t, f_s, rows));
}

void QualityModel::backward(const nn::Matrix& grad_outputs) {
  const nn::Matrix g = head_.backward(grad_outputs);
  Eigen::Index col = 0;
  if (layout_.align) {
    // The gradient stops at the fusion layer: both alignment encoders are frozen.
    align_fusion_.backward(g.middleCols(col, layout_.align));
    col += layout_.align;
  }
  if (layout_.texture) {
    const int df = config_.texture_front.output_dim;
    texture_front_.backward(g.middleCols(col, df));
    texture_back_.backward(g.middleCols(col + df, layout_.texture - df));
    col += layout_.texture;
  }
  if (layout_.shape) shape_.backward(g.middleCols(col, layout_.shape));
}

std::vector<nn::Parameter*> QualityModel::parameters() {
  std::vector<nn::Parameter*> out;
  const auto& b = config_.branches;
  if (b.use_shape) shape_.collect(out);
  if (b.use_texture) {
    texture_front_.collect(out);
    texture_back_.collect(out);
  }
  if (b.use_align) {
    align_image_.collect(out);
    align_text_.collect(out);
    align_fusion_.collect(out);
  }
  head_.collect(out);
  return out;
}

std::vector<const nn::Parameter*> QualityModel::parameters() const {
  std::vector<const nn::Parameter*> out;
  const auto& b = config_.branches;
  if (b.use_shape) shape_.collect(out);
  if (b.use_texture) {
    texture_front_.collect(out);
    texture_back_.collect(out);
  }
  if (b.use_align) {
    align_image_.collect(out);
    align_text_.collect(out);
    align_fusion_.collect(out);
  }
  head_.collect(out);
  return out;
}

std::vector<nn::Parameter*> QualityModel::trainable_parameters() {
  std::vector<nn::Parameter*> out;
  for (nn::Parameter* p : parameters())
    if (!p->frozen) out.push_back(p);
  return out;
}

std::vector<const nn::Parameter*> QualityModel::frozen_parameters() const {
  std::vector<const nn::Parameter*> out;
  for (const nn::Parameter* p : parameters())
    if (p->frozen) out.push_back(p);
  return out;
}

namespace {
constexpr std::string_view kCheckpointFormat = "t23dqa-checkpoint/1";
}

void save_checkpoint(const std::filesystem::path& path, const QualityModel& model,
                     const json& metadata) {
  json params = json::array();
  for (const nn::Parameter* p : model.parameters()) {
    std::vector<double> values(p->value.data(), p->value.data() + p->value.size());
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"frozen", p->frozen},
                      {"values", std::move(values)}});
  }
  json doc = {{"format", kCheckpointFormat},
              {"config", to_json(model.config())},
              {"parameters", std::move(params)},
              {"metadata", metadata}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << doc.dump();
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig* expected) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("corrupt checkpoint: ") + e.what(), 0);
  }
  if (doc.value("format", "") != kCheckpointFormat)
    throw ConfigError("not a checkpoint file: " + path.string());
  const ModelConfig config = model_config_from_json(doc.at("config"));
  if (expected && !(*expected == config))
    throw ConfigError("checkpoint config does not match the requested architecture");

  QualityModel model(config);
  std::map<std::string, const json*> stored;
  for (const json& p : doc.at("parameters")) stored[p.at("name").get<std::string>()] = &p;
  for (nn::Parameter* p : model.parameters()) {
    auto it = stored.find(p->name);
    if (it == stored.end()) throw ConfigError("checkpoint lacks parameter " + p->name);
    const json& j = *it->second;
    if (j.at("rows").get<Eigen::Index>() != p->value.rows() ||
        j.at("cols").get<Eigen::Index>() != p->value.cols())
      throw ConfigError("checkpoint parameter " + p->name + " has the wrong shape");
    const auto values = j.at("values").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != p->value.size())
      throw ConfigError("checkpoint parameter " + p->name + " has the wrong size");
    std::copy(values.begin(), values.end(), p->value.data());
  }
  return {std::move(model), doc.value("metadata", json::object())};
}

}  // namespace t23dqa
