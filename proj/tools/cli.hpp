#pragma once

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nextclip/nextclip.hpp"

namespace nextclip::cli {

namespace fs = std::filesystem;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string log_level = "info";

  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

/// Shared state of one dispatch call.
struct Context {
  GlobalOptions global;
  std::ostream& out;
  std::shared_ptr<spdlog::logger> log;
};

// ---------------------------------------------------------------------------
// helpers

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  return parts;
}

template <typename T>
T parse_number(const std::string& what, const std::string& text) {
  std::istringstream is(text);
  T v{};
  char extra;
  if (!(is >> v) || (is >> extra)) fail(ErrorCode::Usage, "bad " + what + " '" + text + "'");
  return v;
}

inline std::pair<int, int> parse_resolution(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) fail(ErrorCode::Usage, "resolution must look like HxW, got '" + text + "'");
  return {parse_number<int>("height", text.substr(0, x)), parse_number<int>("width", text.substr(x + 1))};
}

/// Per-scene values: one entry applies to every scene, otherwise one per scene.
inline std::vector<double> per_scene(const std::string& what, const std::string& text, std::size_t scenes) {
  std::vector<double> v;
  for (const auto& p : split(text, ',')) v.push_back(parse_number<double>(what, p));
  if (v.size() == 1) v.assign(scenes, v.front());
  if (v.size() != scenes) fail(ErrorCode::Usage, "--" + what + " needs one value or one per scene");
  return v;
}

inline void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

inline std::ofstream open_out(const std::string& path) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot write " + path);
  return os;
}

struct LoadedModel {
  ModelParams<float> params;
  int patch = 4;
};

inline LoadedModel load_checkpoint(const std::string& path) {
  const CheckpointFile file = decode_checkpoint(binio::read_file(path));
  LoadedModel m;
  try {
    const ModelConfig cfg = file.header.at("config").get<ModelConfig>();
    m.params = extract_params(file, cfg);
    if (file.header.contains("meta") && file.header["meta"].contains("patch"))
      m.patch = file.header["meta"]["patch"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigMismatch, std::string("checkpoint header unreadable: ") + e.what());
  }
  return m;
}

inline void write_pnm(const std::string& path, const VideoTensor& v, const std::vector<int>& frames) {
  const bool rgb = v.channels == 3;
  require(v.channels == 1 || rgb, ErrorCode::Shape, "render supports 1 or 3 channels");
  const int w = v.width * static_cast<int>(frames.size());
  std::ofstream os = open_out(path);
  os << (rgb ? "P6" : "P5") << '\n' << w << ' ' << v.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * v.channels);
  for (int y = 0; y < v.height; ++y) {
    std::size_t i = 0;
    for (int t : frames)
      for (int x = 0; x < v.width; ++x)
        for (int c = 0; c < v.channels; ++c) {
          const float px = std::clamp(v.at(t, c, y, x), 0.0f, 1.0f);
          row[i++] = static_cast<unsigned char>(std::lround(px * 255.0f));
        }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

inline std::vector<int> read_index_list(const std::string& text) {
  std::vector<int> v;
  for (const auto& p : split(text, ',')) v.push_back(parse_number<int>("clip size", p));
  return v;
}

// ---------------------------------------------------------------------------
// subcommands

struct GenDataArgs {
  std::string scenes = "bouncing_ball";
  int count = 1;
  int frames = 16;
  std::string res = "16x16";
  int channels = 1;
  std::string radius = "2.5";
  std::string speed = "1.5";
  std::string gravity = "0.5";
  std::string out;
  std::string labels_out;
};

/// Video i shows scene i mod S with its own seed drawn from --seed.
inline void run_gen_data(const Context& ctx, const GenDataArgs& a) {
  std::vector<SceneKind> kinds;
  for (const auto& s : split(a.scenes, ',')) kinds.push_back(parse_scene_kind(s));
  require(!kinds.empty(), ErrorCode::Usage, "--scene needs at least one kind");
  require(a.count >= 0, ErrorCode::Usage, "--count must be non-negative");
  const auto [h, w] = parse_resolution(a.res);
  const auto radius = per_scene("radius", a.radius, kinds.size());
  const auto speed = per_scene("speed", a.speed, kinds.size());
  const auto gravity = per_scene("gravity", a.gravity, kinds.size());
  Rng seeds = Rng::derive(ctx.global.seed_or(0), "gen-data");
  std::vector<VideoTensor> videos;
  std::vector<ClassLabel> labels;
  for (int i = 0; i < a.count; ++i) {
    const std::size_t s = static_cast<std::size_t>(i) % kinds.size();
    SceneConfig cfg;
    cfg.kind = kinds[s];
    cfg.height = h;
    cfg.width = w;
    cfg.channels = a.channels;
    cfg.num_frames = a.frames;
    cfg.seed = seeds.next_u64();
    cfg.radius = radius[s];
    cfg.speed = speed[s];
    cfg.gravity = gravity[s];
    videos.push_back(generate_scene(cfg));
    labels.push_back({static_cast<int>(s), std::string(to_string(kinds[s]))});
  }
  ensure_parent(a.out);
  write_dataset(a.out, videos);
  if (!a.labels_out.empty()) {
    ensure_parent(a.labels_out);
    write_labels(a.labels_out, labels);
  }
  ctx.log->info("wrote {} videos to {}", videos.size(), a.out);
}

struct PretrainArgs {
  std::string config;
  std::string resume;
  std::int64_t max_steps = -1;  // stop (and checkpoint) once the global step reaches this
};

inline void run_pretrain(const Context& ctx, const PretrainArgs& a) {
  TrainConfig cfg = read_train_config(a.config);
  if (ctx.global.seed) {
    cfg.seed = *ctx.global.seed;
    cfg.model.seed = cfg.seed;
  }
  cfg.options.threads = ctx.global.threads;
  const fs::path base = fs::path(a.config).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  const auto dataset = read_dataset(resolve(cfg.data));
  require(!dataset.empty(), ErrorCode::InvalidConfig, "training dataset is empty");
  cfg.model.patch_dim = dataset.front().channels * cfg.options.patch * cfg.options.patch;
  cfg.validate();
  std::vector<ClassLabel> labels;
  if (!cfg.labels.empty()) labels = read_labels(resolve(cfg.labels));
  const fs::path ckdir = resolve(cfg.checkpoint_dir);
  fs::create_directories(ckdir);
  const std::string log_path = resolve(cfg.log);

  TrainState state;
  if (!a.resume.empty()) {
    state = load_train_state(a.resume);
    require(state.params.config == cfg.model, ErrorCode::ConfigMismatch,
            "checkpoint model config differs from " + a.config);
  } else {
    state = TrainState::fresh(init_params<float>(cfg.model), cfg.seed);
  }
  ensure_parent(log_path);
  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) fail(ErrorCode::Io, "cannot write " + log_path);
  if (a.resume.empty()) log << "step,stage,loss,wall_ms\n";
  log.precision(9);

  const nlohmann::json meta = {{"patch", cfg.options.patch}, {"seed", cfg.seed}};
  const std::optional<std::int64_t> stop = a.max_steps >= 0 ? std::optional(a.max_steps) : std::nullopt;
  for (; state.stage < static_cast<int>(cfg.stages.size());) {
    run_stage(
        state, cfg.stages[state.stage], dataset, labels.empty() ? nullptr : &labels, cfg.options,
        [&](const StepRecord& r) {
          log << r.step << ',' << r.stage + 1 << ',' << r.loss << ',' << r.wall_ms << '\n';
          ctx.log->debug("step {} stage {} loss {:.6f}", r.step, r.stage + 1, r.loss);
        },
        stop);
    if (state.stage_step < cfg.stages[state.stage].steps) {
      const std::string path = (ckdir / ("step" + std::to_string(state.step) + ".nckp")).string();
      save_train_state(path, state, meta);
      ctx.log->info("stopped at step {}; checkpoint {}", state.step, path);
      return;
    }
    ++state.stage;
    state.stage_step = 0;
    const std::string path = (ckdir / ("stage" + std::to_string(state.stage) + ".nckp")).string();
    save_train_state(path, state, meta);
    ctx.log->info("stage {} done at step {}; checkpoint {}", state.stage, state.step, path);
  }
  save_train_state((ckdir / "final.nckp").string(), state, meta);
}

struct PredictArgs {
  std::string ckpt;
  std::string input;
  int video_index = 0;
  int cond_frames = 4;
  int clips = 3;
  int frames_per_clip = 4;
  int steps = 20;
  double cfg = 3.0;
  int class_id = -1;
  std::string out;
};

/// Writes one video: the conditioning frames followed by the prediction.
inline void run_predict(const Context& ctx, const PredictArgs& a) {
  const LoadedModel model = load_checkpoint(a.ckpt);
  const auto data = read_dataset(a.input);
  require(a.video_index >= 0 && a.video_index < static_cast<int>(data.size()), ErrorCode::Usage,
          "--video-index out of range");
  const VideoTensor& video = data[a.video_index];
  require(a.cond_frames >= 0 && a.cond_frames <= video.frames, ErrorCode::Usage, "--cond-frames exceeds the video");
  require(a.clips >= 0, ErrorCode::Usage, "--clips must be non-negative");
  std::optional<ClassLabel> label;
  if (a.class_id >= 0) label = ClassLabel{a.class_id, {}};
  require(a.cond_frames > 0 || label, ErrorCode::Usage, "--cond-frames 0 needs --class");

  SamplerConfig sc;
  sc.steps = a.steps;
  sc.cfg_scale = a.cfg;
  sc.frames_per_clip = a.frames_per_clip;
  sc.patch = model.patch;
  sc.seed = ctx.global.seed_or(0);
  const PatchGrid grid = PatchGrid::for_frame(video.channels, video.height, video.width, model.patch);
  std::vector<VideoTensor> history;
  if (a.cond_frames > 0) history.push_back(video.slice(0, a.cond_frames));
  const std::vector<int> lengths(a.clips, a.frames_per_clip);
  ModelPredictor predictor{&model.params};
  VideoTensor result = video.slice(0, a.cond_frames);
  result.append(rollout(history, std::span<const int>(lengths), sc, grid, video.fps_hint, predictor, label,
                        model.params.config.num_classes));
  ensure_parent(a.out);
  write_dataset(a.out, {result});
  ctx.log->info("wrote {} frames to {}", result.frames, a.out);
}

struct RenderArgs {
  std::string in;
  std::string out;
};

inline void run_render(const Context& ctx, const RenderArgs& a) {
  const auto data = read_dataset(a.in);
  fs::create_directories(a.out);
  for (std::size_t v = 0; v < data.size(); ++v) {
    const VideoTensor& video = data[v];
    const std::string ext = video.channels == 3 ? ".ppm" : ".pgm";
    const std::string stem = (fs::path(a.out) / ("video" + std::to_string(v))).string();
    std::vector<int> all(video.frames);
    for (int t = 0; t < video.frames; ++t) {
      all[t] = t;
      write_pnm(stem + "_frame" + std::to_string(t) + ext, video, {t});
    }
    if (video.frames > 0) write_pnm(stem + "_strip" + ext, video, all);
  }
  ctx.log->info("rendered {} videos into {}", data.size(), a.out);
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  int cond = 4;
  int horizon = 12;
  double cfg = 3.0;
  int frames_per_clip = 4;
  int steps = 20;
  double iou_threshold = 0.5;
  std::string out;
};

inline void run_eval(const Context& ctx, const EvalArgs& a) {
  const LoadedModel model = load_checkpoint(a.ckpt);
  const auto data = read_dataset(a.data);
  SamplerConfig sc;
  sc.steps = a.steps;
  sc.cfg_scale = a.cfg;
  sc.frames_per_clip = a.frames_per_clip;
  sc.patch = model.patch;
  sc.seed = ctx.global.seed_or(0);
  ModelPredictor predictor{&model.params};
  const EvalReport report = evaluate_rollout(predictor, data, RolloutSpec{a.cond, a.horizon, a.iou_threshold}, sc);
  std::ofstream os = open_out(a.out);
  report.write_csv(os);
  ctx.out << "mean_mse " << report.mean_mse << "\nbaseline_mse " << report.baseline_mean_mse
          << "\nrelative_improvement " << report.relative_improvement << "\nmean_iou " << report.mean_iou << '\n';
}

struct ProbeArgs {
  std::string ckpt;
  std::string data;
  std::string labels;
  double split = 0.5;  // fraction of videos used to fit the probe
  int frames = 4;
  std::string out;
};

inline void run_probe(const Context& ctx, const ProbeArgs& a) {
  require(a.split > 0.0 && a.split < 1.0, ErrorCode::Usage, "--split must lie in (0,1)");
  const LoadedModel model = load_checkpoint(a.ckpt);
  const auto data = read_dataset(a.data);
  const auto labels = read_labels(a.labels);
  require(labels.size() == data.size(), ErrorCode::InvalidConfig, "labels file needs one line per video");
  int num_classes = 0;
  for (const auto& l : labels) num_classes = std::max(num_classes, l.id + 1);

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(ctx.global.seed_or(0), "probe-split");
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  const std::size_t n_train = static_cast<std::size_t>(a.split * static_cast<double>(order.size()));
  require(n_train >= 1 && n_train < order.size(), ErrorCode::Usage, "split leaves an empty side");

  std::vector<Eigen::VectorXd> tr_x, te_x;
  std::vector<int> tr_y, te_y;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int v = order[i];
    auto f = video_features(model.params, data[v], model.patch, std::min(a.frames, data[v].frames));
    (i < n_train ? tr_x : te_x).push_back(std::move(f));
    (i < n_train ? tr_y : te_y).push_back(labels[v].id);
  }
  ProbeOptions po;
  po.seed = ctx.global.seed_or(0);
  const LinearProbe probe = train_probe(tr_x, tr_y, num_classes, po);
  const double acc = accuracy(probe, te_x, te_y);
  ctx.out << "accuracy " << acc << '\n';
  if (!a.out.empty()) {
    std::ofstream os = open_out(a.out);
    os << "class,count,accuracy\n";
    for (int c = 0; c < num_classes; ++c) {
      int n = 0, hit = 0;
      for (std::size_t i = 0; i < te_x.size(); ++i) {
        if (te_y[i] != c) continue;
        ++n;
        hit += classify(probe, te_x[i]) == c;
      }
      os << c << ',' << n << ',' << (n ? static_cast<double>(hit) / n : 0.0) << '\n';
    }
  }
}

struct MaskDumpArgs {
  std::string sizes = "1,1";
  int patches = 1;
  std::string mode = "training";
  int extras = 0;
  std::string ascii;
  std::string pgm;
  std::string layout;
};

/// Token sequence with the requested block structure; payloads are zeros.
inline TokenSequence mask_dump_sequence(const std::vector<int>& sizes, int patches, bool training, int extras) {
  require(!sizes.empty(), ErrorCode::Usage, "--sizes needs at least one clip");
  for (int s : sizes) require(s >= 1, ErrorCode::Usage, "clip sizes must be positive");
  require(patches >= 1 && extras >= 0, ErrorCode::Usage, "--patches must be >= 1 and --extras >= 0");
  const PatchGrid grid = PatchGrid::for_frame(1, 1, patches, 1);
  TokenSequence seq;
  if (training) {
    int n = 0;
    for (int s : sizes) n += s;
    const VideoTensor video = VideoTensor::zeros(n, 1, 1, patches);
    const std::vector<float> alphas(sizes.size(), 0.5f);
    Rng rng(0);
    seq = build_training_sequence(video, ClipPartition{sizes}, alphas, 1, 1.0f, rng);
  } else {
    std::vector<LatentClip> history;
    int k = 0;
    for (; k + 1 < static_cast<int>(sizes.size()); ++k) {
      LatentClip clip(sizes[k]);
      for (int i = 0; i < sizes[k]; ++i) clip[i] = LatentFrame{k, i, grid, std::vector<float>(patches, 0.0f)};
      history.push_back(std::move(clip));
    }
    LatentClip state(sizes.back());
    for (int i = 0; i < sizes.back(); ++i) state[i] = LatentFrame{k, i, grid, std::vector<float>(patches, 0.0f)};
    seq = build_inference_sequence(history, state, 0.5f);
  }
  std::vector<Token> prefix;
  for (int e = 0; e < extras; ++e) {
    Token t{TokenKind::Class, Role::Extra};
    t.ordinal = e;
    t.class_id = 0;
    prefix.push_back(t);
  }
  seq.tokens.insert(seq.tokens.begin(), prefix.begin(), prefix.end());
  return seq;
}

inline void run_mask_dump(const Context& ctx, const MaskDumpArgs& a) {
  require(a.mode == "training" || a.mode == "inference", ErrorCode::Usage, "--mode is training or inference");
  const TokenSequence seq = mask_dump_sequence(read_index_list(a.sizes), a.patches, a.mode == "training", a.extras);
  const AttentionMask mask = build_training_mask(seq);
  if (!a.ascii.empty()) open_out(a.ascii) << mask.to_ascii();
  if (!a.pgm.empty()) {
    const auto bytes = mask.to_pgm();
    open_out(a.pgm).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!a.layout.empty()) open_out(a.layout) << describe_layout(seq);
  if (a.ascii.empty() && a.pgm.empty() && a.layout.empty()) ctx.out << mask.to_ascii();
}

// ---------------------------------------------------------------------------
// dispatch

inline std::string version_text() {
  return std::string("nextclip ") + kVersion + " (checkpoint format " + std::to_string(kCheckpointVersion) +
         ", dataset format " + std::to_string(kDatasetVersion) + ")";
}

/// Runs one command line. Exit codes: 0 ok, 1 runtime error, 2 usage error.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"next-clip diffusion on synthetic physics video", "nextclip"};
  app.set_version_flag("--version", version_text());
  GlobalOptions global;
  app.add_option("--seed", global.seed, "seed for every random stream");
  app.add_option("--threads", global.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--log-level", global.log_level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* c_gen = app.add_subcommand("gen-data", "render synthetic scenes into a dataset file");
  c_gen->add_option("--scene", gd.scenes, "comma list of bouncing_ball, gravity_drop, linear_drift");
  c_gen->add_option("--count", gd.count);
  c_gen->add_option("--frames", gd.frames);
  c_gen->add_option("--res", gd.res, "HxW");
  c_gen->add_option("--channels", gd.channels);
  c_gen->add_option("--radius", gd.radius, "one value or one per scene");
  c_gen->add_option("--speed", gd.speed, "one value or one per scene");
  c_gen->add_option("--gravity", gd.gravity, "one value or one per scene");
  c_gen->add_option("--out", gd.out)->required();
  c_gen->add_option("--labels-out", gd.labels_out, "write one label line per video (scene index)");

  PretrainArgs pt;
  auto* c_pre = app.add_subcommand("pretrain", "train a model from a key=value config");
  c_pre->add_option("--config", pt.config)->required();
  c_pre->add_option("--resume", pt.resume);
  c_pre->add_option("--max-steps", pt.max_steps, "stop and checkpoint at this global step");

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "roll out future clips for one video");
  c_pred->add_option("--ckpt", pr.ckpt)->required();
  c_pred->add_option("--input", pr.input)->required();
  c_pred->add_option("--video-index", pr.video_index);
  c_pred->add_option("--cond-frames", pr.cond_frames);
  c_pred->add_option("--clips", pr.clips);
  c_pred->add_option("--frames-per-clip", pr.frames_per_clip);
  c_pred->add_option("--steps", pr.steps);
  c_pred->add_option("--cfg", pr.cfg);
  c_pred->add_option("--class", pr.class_id, "class id for class-conditional models");
  c_pred->add_option("--out", pr.out)->required();
  std::optional<std::uint64_t> predict_seed;
  c_pred->add_option("--seed", predict_seed);

  RenderArgs rd;
  auto* c_render = app.add_subcommand("render", "write frames and a strip image per video");
  c_render->add_option("--in", rd.in)->required();
  c_render->add_option("--out", rd.out)->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "score rollouts against ground truth and the copy-last baseline");
  c_eval->add_option("--ckpt", ev.ckpt)->required();
  c_eval->add_option("--data", ev.data)->required();
  c_eval->add_option("--cond", ev.cond);
  c_eval->add_option("--horizon", ev.horizon);
  c_eval->add_option("--cfg", ev.cfg);
  c_eval->add_option("--frames-per-clip", ev.frames_per_clip);
  c_eval->add_option("--steps", ev.steps);
  c_eval->add_option("--iou-threshold", ev.iou_threshold);
  c_eval->add_option("--out", ev.out)->required();

  ProbeArgs pb;
  auto* c_probe = app.add_subcommand("probe", "linear probe on pooled clip features");
  c_probe->add_option("--ckpt", pb.ckpt)->required();
  c_probe->add_option("--data", pb.data)->required();
  c_probe->add_option("--labels", pb.labels)->required();
  c_probe->add_option("--split", pb.split, "fraction used for fitting");
  c_probe->add_option("--frames", pb.frames, "frames pooled per video");
  c_probe->add_option("--out", pb.out, "per-class accuracy CSV");

  MaskDumpArgs md;
  auto* c_mask = app.add_subcommand("mask-dump", "write an attention mask as text or PGM");
  c_mask->add_option("--sizes", md.sizes, "comma list of clip sizes");
  c_mask->add_option("--patches", md.patches);
  c_mask->add_option("--mode", md.mode, "training or inference");
  c_mask->add_option("--extras", md.extras);
  c_mask->add_option("--ascii", md.ascii);
  c_mask->add_option("--pgm", md.pgm);
  c_mask->add_option("--layout", md.layout);

  auto usage_error = [&](const std::string& msg) {
    err << "error: " << to_string(ErrorCode::Usage) << ": " << msg << '\n';
    return 2;
  };
  if (args.empty()) {
    err << app.help();
    return usage_error("no subcommand given");
  }
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help(e.get_name() == "--help" ? "" : e.get_name());
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version_text() << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    return usage_error(e.what());
  }
  if (predict_seed) global.seed = predict_seed;

  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("nextclip", sink);
  logger->set_pattern("[%l] %v");
  logger->set_level(spdlog::level::from_str(global.log_level));
  Context ctx{global, out, logger};
  try {
    if (c_gen->parsed()) run_gen_data(ctx, gd);
    if (c_pre->parsed()) run_pretrain(ctx, pt);
    if (c_pred->parsed()) run_predict(ctx, pr);
    if (c_render->parsed()) run_render(ctx, rd);
    if (c_eval->parsed()) run_eval(ctx, ev);
    if (c_probe->parsed()) run_probe(ctx, pb);
    if (c_mask->parsed()) run_mask_dump(ctx, md);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return e.code() == ErrorCode::Usage ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << to_string(ErrorCode::Io) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: runtime: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

inline int dispatch(int argc, char** argv) {
  return dispatch(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace nextclip::cli
