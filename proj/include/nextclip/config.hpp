#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nextclip/error.hpp"
#include "nextclip/model.hpp"
#include "nextclip/trainer.hpp"

namespace nextclip {

/// Flat key=value training config. Blank lines and lines starting with '#'
/// are ignored. Recognised keys:
///
///   seed, data, labels, checkpoint_dir, log
///   model.depth, model.width, model.heads, model.patch, model.classes
///   beta, warmup, weight_decay, threads
///   stages                        number of stages (default: desk schedule)
///   stageN.frames, stageN.clips, stageN.interval (e.g. "1-3"),
///   stageN.steps, stageN.lr, stageN.batch      N counts from 1
///
/// stageN.* keys override the desk schedule entry of the same index.
struct TrainConfig {
  std::uint64_t seed = 0;
  std::string data;
  std::string labels;
  std::string checkpoint_dir = ".";
  std::string log = "train_log.csv";
  ModelConfig model;
  TrainOptions options;
  std::vector<StageConfig> stages = desk_schedule();

  void validate() const {
    model.validate();
    require(!data.empty(), ErrorCode::InvalidConfig, "config needs a data path");
    require(!stages.empty(), ErrorCode::InvalidConfig, "config needs at least one stage");
    require(options.beta >= 0.0f && options.beta <= 1.0f, ErrorCode::InvalidConfig, "beta must lie in [0,1]");
    for (const auto& s : stages) s.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  char extra;
  if (!(is >> v) || (is >> extra)) fail(ErrorCode::InvalidConfig, "bad value for " + key + ": '" + text + "'");
  return v;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::InvalidConfig, "config line " + std::to_string(lineno) + " lacks '='");
    const std::string key = detail::trim(line.substr(0, eq));
    require(!key.empty(), ErrorCode::InvalidConfig, "config line " + std::to_string(lineno) + " has an empty key");
    require(!kv.contains(key), ErrorCode::InvalidConfig, "duplicate config key " + key);
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

inline TrainConfig parse_train_config(std::istream& in) {
  auto kv = parse_key_values(in);
  TrainConfig cfg;
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  using detail::parse_value;
  if (auto v = take("seed")) cfg.seed = parse_value<std::uint64_t>("seed", *v);
  if (auto v = take("data")) cfg.data = *v;
  if (auto v = take("labels")) cfg.labels = *v;
  if (auto v = take("checkpoint_dir")) cfg.checkpoint_dir = *v;
  if (auto v = take("log")) cfg.log = *v;
  if (auto v = take("model.depth")) cfg.model.depth = parse_value<int>("model.depth", *v);
  if (auto v = take("model.width")) cfg.model.width = parse_value<int>("model.width", *v);
  if (auto v = take("model.heads")) cfg.model.heads = parse_value<int>("model.heads", *v);
  if (auto v = take("model.classes")) cfg.model.num_classes = parse_value<int>("model.classes", *v);
  if (auto v = take("model.patch")) cfg.options.patch = parse_value<int>("model.patch", *v);
  if (auto v = take("beta")) cfg.options.beta = parse_value<float>("beta", *v);
  if (auto v = take("warmup")) cfg.options.optimizer.warmup_steps = parse_value<int>("warmup", *v);
  if (auto v = take("weight_decay")) cfg.options.optimizer.weight_decay = parse_value<double>("weight_decay", *v);
  if (auto v = take("threads")) cfg.options.threads = parse_value<int>("threads", *v);
  if (auto v = take("stages")) {
    const int n = parse_value<int>("stages", *v);
    require(n >= 1 && n <= 64, ErrorCode::InvalidConfig, "stages must be in [1, 64]");
    cfg.stages.resize(n, cfg.stages.back());
  }
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const std::string p = "stage" + std::to_string(i + 1) + ".";
    StageConfig& s = cfg.stages[i];
    if (auto v = take(p + "frames")) s.num_frames = parse_value<int>(p + "frames", *v);
    if (auto v = take(p + "clips")) s.clips = parse_value<int>(p + "clips", *v);
    if (auto v = take(p + "steps")) s.steps = parse_value<int>(p + "steps", *v);
    if (auto v = take(p + "lr")) s.learning_rate = parse_value<double>(p + "lr", *v);
    if (auto v = take(p + "batch")) s.batch_size = parse_value<int>(p + "batch", *v);
    if (auto v = take(p + "interval")) {
      const auto dash = v->find('-');
      if (dash == std::string::npos) {
        s.interval_min = s.interval_max = parse_value<int>(p + "interval", *v);
      } else {
        s.interval_min = parse_value<int>(p + "interval", v->substr(0, dash));
        s.interval_max = parse_value<int>(p + "interval", v->substr(dash + 1));
      }
    }
  }
  if (!kv.empty()) fail(ErrorCode::InvalidConfig, "unknown config key " + kv.begin()->first);
  cfg.model.patch_dim = cfg.options.patch * cfg.options.patch;
  cfg.model.seed = cfg.seed;
  return cfg;
}

inline TrainConfig read_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path);
  return parse_train_config(in);
}

}  // namespace nextclip
