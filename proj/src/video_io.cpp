#include "t23dqa/video_io.hpp"

#include <algorithm>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>

#include "t23dqa/errors.hpp"

namespace t23dqa {

namespace {

Image from_bgr8(const cv::Mat& mat) {
  cv::Mat bgr;
  if (mat.channels() == 1) {
    cv::Mat tmp[] = {mat, mat, mat};
    cv::merge(tmp, 3, bgr);
  } else if (mat.channels() == 4) {
    std::vector<cv::Mat> planes;
    cv::split(mat, planes);
    planes.resize(3);
    cv::merge(planes, bgr);
  } else {
    bgr = mat;
  }
  if (bgr.depth() != CV_8U) bgr.convertTo(bgr, CV_8U);
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[x][2 - c] / 255.0f;
  }
  return img;
}

cv::Mat to_bgr8(const Image& img) {
  cv::Mat mat(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(x, y, c), 0.0f, 1.0f);
        row[x][2 - c] = static_cast<unsigned char>(v * 255.0f + 0.5f);
      }
  }
  return mat;
}

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" ||
         ext == ".tif" || ext == ".tiff";
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw NotFoundError("cannot read image " + path.string());
  return from_bgr8(mat);
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.empty()) throw ValidationError("cannot write an empty image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), to_bgr8(image)))
    throw Error("cannot write " + path.string());
}

ProjectionClip decode_clip(const std::filesystem::path& path, const std::string& asset_id) {
  ProjectionClip clip;
  clip.asset_id = asset_id;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path))
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) clip.frames.push_back(read_image(f));
  } else {
    if (!std::filesystem::exists(path)) throw NotFoundError("no video at " + path.string());
    cv::VideoCapture cap(path.string());
    if (!cap.isOpened()) throw Error("cannot decode video " + path.string());
    const double fps = cap.get(cv::CAP_PROP_FPS);
    if (fps > 0) clip.fps = fps;
    cv::Mat frame;
    while (cap.read(frame)) clip.frames.push_back(from_bgr8(frame));
  }
  if (clip.frames.empty()) throw ValidationError("no frames decoded from " + path.string());
  clip.orbit.n_steps = clip.frame_count();
  return clip;
}

void write_video(const std::filesystem::path& path, std::span<const Image> frames,
                 double fps) {
  if (frames.empty()) throw ValidationError("cannot write a video without frames");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string ext = path.extension().string();
  const int fourcc = ext == ".mp4" ? cv::VideoWriter::fourcc('m', 'p', '4', 'v')
                                   : cv::VideoWriter::fourcc('M', 'J', 'P', 'G');
  cv::VideoWriter writer(path.string(), fourcc, fps,
                         cv::Size(frames.front().width, frames.front().height));
  if (!writer.isOpened()) throw Error("cannot open video writer for " + path.string());
  for (const auto& f : frames) writer.write(to_bgr8(f));
}

}  // namespace t23dqa
