#include "lexseg/io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lexseg/common.hpp"

namespace lexseg::io {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'L', 'E', 'X', 'T', 'N', 'S', 'R', '1'};

void append_u32(std::string& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.append(b, 4);
}

std::uint32_t read_u32(const std::string& s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

}  // namespace

void atomic_write_file(const std::string& path, const std::string& bytes) {
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ResourceError("cannot open for writing: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ResourceError("short write: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ResourceError("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void save_tensors(const std::string& path, const NamedTensors& bundle) {
  nlohmann::json header;
  header["meta"] = bundle.meta;
  auto& idx = header["arrays"] = nlohmann::json::array();
  for (const auto& [name, t] : bundle.arrays) {
    idx.push_back({{"name", name}, {"dtype", "f64"}, {"shape", t.shape()}});
  }
  std::string hs = header.dump();
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  append_u32(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  for (const auto& [name, t] : bundle.arrays) {
    out.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * 8);
  }
  atomic_write_file(path, out);
}

NamedTensors load_tensors(const std::string& path) {
  std::string s = read_file(path);
  if (s.size() < 12 || std::memcmp(s.data(), kMagic, sizeof(kMagic)) != 0)
    throw ResourceError("not a tensor container: " + path);
  std::uint32_t hlen = read_u32(s, 8);
  if (s.size() < 12 + hlen) throw ResourceError("truncated tensor container: " + path);
  nlohmann::json header = nlohmann::json::parse(s.substr(12, hlen));
  NamedTensors bundle;
  bundle.meta = header.value("meta", nlohmann::json::object());
  std::size_t off = 12 + hlen;
  for (const auto& a : header.at("arrays")) {
    std::string name = a.at("name");
    std::string dtype = a.at("dtype");
    std::vector<int> shape = a.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    const std::size_t n = static_cast<std::size_t>(t.size());
    if (dtype == "f64") {
      if (s.size() < off + n * 8) throw ResourceError("truncated array " + name + " in " + path);
      std::memcpy(t.data(), s.data() + off, n * 8);
      off += n * 8;
    } else if (dtype == "f32") {
      if (s.size() < off + n * 4) throw ResourceError("truncated array " + name + " in " + path);
      std::vector<float> tmp(n);
      std::memcpy(tmp.data(), s.data() + off, n * 4);
      for (std::size_t i = 0; i < n; ++i) t[static_cast<std::int64_t>(i)] = tmp[i];
      off += n * 4;
    } else {
      throw ResourceError("unsupported dtype '" + dtype + "' in " + path);
    }
    bundle.arrays.emplace_back(std::move(name), std::move(t));
  }
  return bundle;
}

ImageU8 read_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw ResourceError("cannot read image: " + path);
  ImageU8 im;
  im.width = bgr.cols;
  im.height = bgr.rows;
  im.rgb.resize(static_cast<std::size_t>(bgr.cols) * bgr.rows * 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      std::uint8_t* p = im.px(x, y);
      p[0] = row[x][2];
      p[1] = row[x][1];
      p[2] = row[x][0];
    }
  }
  return im;
}

void write_image(const std::string& path, const ImageU8& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* p = image.px(x, y);
      row[x] = cv::Vec3b(p[2], p[1], p[0]);
    }
  }
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  if (!cv::imwrite(path, bgr)) throw ResourceError("cannot write image: " + path);
}

void write_mask_png(const std::string& path, const SegmentationMask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      m.at<std::uint8_t>(y, x) = mask.at(x, y) ? 255 : 0;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  if (!cv::imwrite(path, m)) throw ResourceError("cannot write mask: " + path);
}

SegmentationMask read_mask_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw ResourceError("cannot read mask: " + path);
  SegmentationMask mask = SegmentationMask::zeros(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) mask.at(x, y) = m.at<std::uint8_t>(y, x) > 127 ? 1 : 0;
  return mask;
}

void write_annotation_png(const std::string& path, const AnnotationImage& ann) {
  static constexpr std::uint8_t kLevels[4] = {0, 85, 170, 255};
  cv::Mat m(ann.height, ann.width, CV_8UC1);
  for (int y = 0; y < ann.height; ++y)
    for (int x = 0; x < ann.width; ++x)
      m.at<std::uint8_t>(y, x) = kLevels[static_cast<int>(ann.at(x, y))];
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  if (!cv::imwrite(path, m)) throw ResourceError("cannot write annotation: " + path);
}

AnnotationImage read_annotation_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw ResourceError("cannot read annotation: " + path);
  AnnotationImage ann;
  ann.width = m.cols;
  ann.height = m.rows;
  ann.codes.resize(static_cast<std::size_t>(m.cols) * m.rows);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      int v = (m.at<std::uint8_t>(y, x) + 42) / 85;  // nearest of {0,85,170,255}
      if (v > 3) v = 3;
      ann.at(x, y) = static_cast<AnnotationCode>(v);
    }
  }
  return ann;
}

void write_salmap(const std::string& path, const SaliencyMap& map) {
  std::string out = "SALMAP " + std::to_string(map.width) + " " + std::to_string(map.height) + "\n";
  out.append(reinterpret_cast<const char*>(map.values.data()), map.values.size() * 4);
  atomic_write_file(path, out);
}

SaliencyMap read_salmap(const std::string& path) {
  std::string s = read_file(path);
  if (s.rfind("SALMAP ", 0) != 0) throw ResourceError("not a SALMAP file: " + path);
  std::size_t nl = s.find('\n');
  if (nl == std::string::npos) throw ResourceError("malformed SALMAP header: " + path);
  std::istringstream hs(s.substr(7, nl - 7));
  int w = 0, h = 0;
  hs >> w >> h;
  if (w <= 0 || h <= 0) throw ResourceError("bad SALMAP dimensions: " + path);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (s.size() - nl - 1 < n * 4) throw ResourceError("truncated SALMAP payload: " + path);
  SaliencyMap m = SaliencyMap::zeros(w, h, Polarity::kPositive);
  std::memcpy(m.values.data(), s.data() + nl + 1, n * 4);
  return m;
}

}  // namespace lexseg::io
