#pragma once

// Persistence: a little-endian binary tensor archive for weights (and clip
// frames), JSON config with model/training/pipeline sections, COCO-style
// keypoint records, and the newline-delimited metrics / pose-stream writers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ccpose/error.hpp"
#include "ccpose/model.hpp"
#include "ccpose/pipeline.hpp"
#include "ccpose/tensor.hpp"
#include "ccpose/trainer.hpp"

namespace ccpose {

constexpr char kArchiveMagic[4] = {'C', 'C', 'T', 'A'};
constexpr std::uint32_t kArchiveVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  std::string context;

  void need(std::size_t n, const std::string& what) {
    if (pos + n > buf.size()) {
      throw IoError("archive truncated while reading " + what + " (at byte " +
                    std::to_string(pos) + " of " + std::to_string(buf.size()) + ")");
    }
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const std::string& what) { return std::bit_cast<double>(u64(what)); }
};

}  // namespace detail

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline void save_tensor_archive(const std::string& path, const NamedTensors& entries) {
  std::string out;
  out.append(kArchiveMagic, 4);
  detail::put_u32(out, kArchiveVersion);
  detail::put_u64(out, entries.size());
  for (const auto& [name, t] : entries) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) detail::put_u64(out, t.dim(i));
    for (std::size_t i = 0; i < t.size(); ++i) detail::put_f64(out, t[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline NamedTensors load_tensor_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::Reader r{buf};
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kArchiveMagic, 4) != 0) {
    throw IoError("not a tensor archive: " + path);
  }
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != kArchiveVersion) {
    throw IoError("unsupported archive version " + std::to_string(version) +
                  " (want " + std::to_string(kArchiveVersion) + ")");
  }
  const std::uint64_t count = r.u64("entry count");
  NamedTensors entries;
  for (std::uint64_t e = 0; e < count; ++e) {
    const std::string tag = "entry " + std::to_string(e);
    const std::uint32_t name_len = r.u32(tag + " name length");
    r.need(name_len, tag + " name");
    std::string name = buf.substr(r.pos, name_len);
    r.pos += name_len;
    const std::uint32_t ndim = r.u32(name + " rank");
    std::vector<std::size_t> shape(ndim);
    std::size_t total = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      shape[i] = static_cast<std::size_t>(r.u64(name + " dims"));
      total *= shape[i];
    }
    std::vector<double> data(total);
    for (std::size_t i = 0; i < total; ++i) data[i] = r.f64(name + " payload");
    entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return entries;
}

inline NamedTensors collect_model_tensors(PoseModel& m) {
  NamedTensors out;
  auto add = [&](const char* name, Tensor& t, bool) { out.emplace_back(name, t); };
  m.backbone.for_each_param(add);
  m.head.for_each_param(add);
  return out;
}

inline void save_weights(PoseModel& m, const std::string& path) {
  save_tensor_archive(path, collect_model_tensors(m));
}

// Loads an archive into an already-configured model; every parameter must be
// present with a matching shape.
inline void load_weights(PoseModel& m, const std::string& path) {
  NamedTensors entries = load_tensor_archive(path);
  std::map<std::string, Tensor*> by_name;
  for (auto& [name, t] : entries) by_name[name] = &t;
  auto apply = [&](const char* name, Tensor& t, bool) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw IoError("weights file " + path + " is missing entry " + name);
    }
    if (!it->second->same_shape(t)) {
      throw IoError("weights entry " + std::string(name) + " has shape " +
                    it->second->shape_str() + " but the model wants " + t.shape_str());
    }
    t = *it->second;
  };
  m.backbone.for_each_param(apply);
  m.head.for_each_param(apply);
}

// ---- configuration ------------------------------------------------------

struct AppConfig {
  ModelConfig model;
  TrainConfig train;
  AugmentationConfig aug_strong = AugmentationConfig::strong();
  AugmentationConfig aug_weak = AugmentationConfig::weak();
  PipelineConfig pipeline;
  std::size_t detect_interval = 5;
  std::size_t train_samples = 500;
  std::size_t val_samples = 100;
  SynthConfig synth;
};

inline AppConfig config_from_json(const nlohmann::json& j) {
  AppConfig c;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model.input_w = m.value("input_w", c.model.input_w);
    c.model.input_h = m.value("input_h", c.model.input_h);
    c.model.split_k = m.value("split_k", c.model.split_k);
    c.model.k_pts = m.value("k_pts", c.model.k_pts);
    c.model.head.hidden = m.value("hidden", c.model.head.hidden);
    c.model.head.expand = m.value("expand", 2 * c.model.head.hidden);
    c.model.head.attn = m.value("attn", c.model.head.attn);
    c.model.head.conv_kernel = m.value("conv_kernel", c.model.head.conv_kernel);
    c.model.head.use_prenorm = m.value("prenorm", c.model.head.use_prenorm);
    c.model.head.use_residual = m.value("residual", c.model.head.use_residual);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    c.train.base_lr = t.value("base_lr", c.train.base_lr);
    c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    c.train.ema_decay = t.value("ema_decay", c.train.ema_decay);
    c.train.ema_warmup_gamma = t.value("ema_warmup_gamma", c.train.ema_warmup_gamma);
    c.train.epochs_strong = t.value("epochs_strong", c.train.epochs_strong);
    c.train.epochs_weak = t.value("epochs_weak", c.train.epochs_weak);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.tau = t.value("tau", c.train.tau);
    c.train.warmup_iters = t.value("warmup_iters", c.train.warmup_iters);
    c.train.seed.value = t.value("seed", c.train.seed.value);
    const std::string mode = t.value("label_mode", std::string("sord"));
    if (mode == "sord") {
      c.train.label_mode = LabelMode::Sord;
    } else if (mode == "onehot") {
      c.train.label_mode = LabelMode::OneHot;
    } else {
      throw IoError("config: unknown label_mode '" + mode + "'");
    }
    c.train_samples = t.value("train_samples", c.train_samples);
    c.val_samples = t.value("val_samples", c.val_samples);
  }
  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    c.detect_interval = p.value("detect_interval", c.detect_interval);
    c.pipeline.crop_padding = p.value("crop_padding", c.pipeline.crop_padding);
    c.pipeline.nms_threshold = p.value("nms_threshold", c.pipeline.nms_threshold);
    c.pipeline.oks_k = p.value("oks_k", c.pipeline.oks_k);
    c.pipeline.filter_defaults.min_cutoff =
        p.value("min_cutoff", c.pipeline.filter_defaults.min_cutoff);
    c.pipeline.filter_defaults.beta = p.value("beta", c.pipeline.filter_defaults.beta);
    c.pipeline.filter_defaults.d_cutoff =
        p.value("d_cutoff", c.pipeline.filter_defaults.d_cutoff);
    const double rate = p.value("frame_rate", 30.0);
    if (rate <= 0.0) throw IoError("config: frame_rate must be positive");
    c.pipeline.frame_dt = 1.0 / rate;
    c.pipeline.filter_defaults.rate = rate;
  }
  c.pipeline.input_w = c.model.input_w;
  c.pipeline.input_h = c.model.input_h;
  c.synth.width = c.model.input_w;
  c.synth.height = c.model.input_h;
  c.synth.k_pts = c.model.k_pts;
  return c;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---- COCO-style keypoint records -----------------------------------------

struct GtImage {
  long id = 0;
  std::size_t width = 0;
  std::size_t height = 0;
};

struct GtAnnotation {
  long id = 0;
  long image_id = 0;
  std::vector<double> keypoints;  // x, y, v triplets
  double area = 0.0;
};

struct GroundTruth {
  std::vector<GtImage> images;
  std::vector<GtAnnotation> annotations;
};

struct Prediction {
  long image_id = 0;
  std::vector<double> keypoints;  // x, y, score triplets
  double score = 0.0;
};

inline nlohmann::json ground_truth_to_json(const GroundTruth& gt) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const auto& im : gt.images) {
    j["images"].push_back({{"id", im.id}, {"width", im.width}, {"height", im.height}});
  }
  j["annotations"] = nlohmann::json::array();
  for (const auto& a : gt.annotations) {
    j["annotations"].push_back({{"id", a.id},
                                {"image_id", a.image_id},
                                {"keypoints", a.keypoints},
                                {"area", a.area}});
  }
  return j;
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  for (const auto& im : j.at("images")) {
    gt.images.push_back({im.at("id").get<long>(), im.at("width").get<std::size_t>(),
                         im.at("height").get<std::size_t>()});
  }
  for (const auto& a : j.at("annotations")) {
    GtAnnotation ann;
    ann.id = a.at("id").get<long>();
    ann.image_id = a.at("image_id").get<long>();
    ann.keypoints = a.at("keypoints").get<std::vector<double>>();
    ann.area = a.at("area").get<double>();
    if (ann.keypoints.size() % 3 != 0) {
      throw IoError("annotation " + std::to_string(ann.id) +
                    ": keypoints must be x,y,v triplets");
    }
    gt.annotations.push_back(std::move(ann));
  }
  return gt;
}

inline nlohmann::json predictions_to_json(const std::vector<Prediction>& preds) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : preds) {
    j.push_back({{"image_id", p.image_id}, {"keypoints", p.keypoints},
                 {"score", p.score}});
  }
  return j;
}

inline std::vector<Prediction> predictions_from_json(const nlohmann::json& j) {
  std::vector<Prediction> preds;
  for (const auto& p : j) {
    Prediction pr;
    pr.image_id = p.at("image_id").get<long>();
    pr.keypoints = p.at("keypoints").get<std::vector<double>>();
    pr.score = p.at("score").get<double>();
    if (pr.keypoints.size() % 3 != 0) {
      throw IoError("prediction: keypoints must be x,y,score triplets");
    }
    preds.push_back(std::move(pr));
  }
  return preds;
}

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON " + path + ": " + e.what());
  }
  return j;
}

inline void save_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

// ---- newline-delimited streams -------------------------------------------

inline std::string metrics_line(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"stage", r.stage}, {"loss", r.loss},
                   {"pck", r.pck},     {"lr", r.lr}};
  return j.dump();
}

// One frame per line: frame_index plus COCO keypoint-result layout.
inline std::string pose_stream_line(long frame_index,
                                    const std::vector<PoseResult>& poses) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : poses) {
    nlohmann::json kps = nlohmann::json::array();
    for (const auto& kp : p.keypoints) {
      kps.push_back(kp.x);
      kps.push_back(kp.y);
      kps.push_back(kp.score);
    }
    arr.push_back({{"keypoints", std::move(kps)}, {"score", p.instance_score}});
  }
  nlohmann::json j{{"frame_index", frame_index}, {"poses", std::move(arr)}};
  return j.dump();
}

}  // namespace ccpose
