// Acceptance gate: one PASS/FAIL line per criterion. Exit status is 0 only
// when every selected criterion passes.
//
//   acceptance [--workdir DIR] [--only 1,2,...] [--quick]
//
// --quick shrinks the training budgets of criteria 6-8 for smoke runs; the
// thresholds stay the same, so quick runs are expected to fail them.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "helpers.hpp"
#include "oracles/mask_oracle.hpp"
#include "oracles/truth_predictor.hpp"

using namespace nextclip;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  fs::path workdir;
  bool quick = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

// ---------------------------------------------------------------------------
// 1. mask leakage

Outcome mask_leakage(const Settings&) {
  const auto t0 = Clock::now();
  std::size_t sequences = 0, pairs = 0, disagreements = 0;
  for (int n = 1; n <= 8; ++n)
    for (const auto& sizes : testutil::compositions(n, 4))
      for (int p = 1; p <= 4; ++p)
        for (const auto& seq : {testutil::line_sequence(sizes, p), testutil::line_inference(sizes, p)}) {
          const auto m = build_training_mask(seq);
          const auto o = oracle::mask(seq);
          for (int q = 0; q < m.size(); ++q)
            for (int t = 0; t < m.size(); ++t) disagreements += m(q, t) != o(q, t);
          pairs += static_cast<std::size_t>(m.size()) * m.size();
          ++sequences;
        }

  // Sensitivity of every output row to every input embedding on a depth-2 model.
  const auto params = testutil::busy_params(testutil::tiny_config());
  std::size_t probed = 0, leaks = 0, dead = 0;
  for (int n = 1; n <= 5; ++n)
    for (const auto& sizes : testutil::compositions(n, 4)) {
      const auto seq = testutil::tiny_training_sequence(sizes, 17 + n);
      const auto mask = build_training_mask(seq);
      const auto fwd = forward(seq, mask, params);
      const int len = static_cast<int>(seq.size());
      auto check_row = [&](int q, const Matrix<double>& demb) {
        for (int t = 0; t < len; ++t) {
          const double g = demb.row(t).cwiseAbs().maxCoeff();
          if (!mask(q, t)) leaks += g != 0.0;
          else dead += g == 0.0;
          ++probed;
        }
      };
      for (int r = 0; r < static_cast<int>(fwd.pred_positions.size()); ++r) {
        Matrix<double> dpred = Matrix<double>::Zero(fwd.predictions.rows(), fwd.predictions.cols());
        dpred.row(r).setOnes();
        auto grads = params.zeros_like();
        check_row(fwd.pred_positions[r], backward(seq, params, fwd, dpred, grads));
      }
      for (int q = 0; q < len; ++q) {
        if (seq.tokens[q].role != Role::Clean) continue;
        Matrix<double> dpred = Matrix<double>::Zero(fwd.predictions.rows(), fwd.predictions.cols());
        Matrix<double> dfeat = Matrix<double>::Zero(len, params.config.width);
        dfeat.row(q).setOnes();
        dfeat(q, 0) = 3.0;
        auto grads = params.zeros_like();
        check_row(q, backward(seq, params, fwd, dpred, grads, &dfeat));
      }
    }
  const double secs = seconds_since(t0);
  return {disagreements == 0 && leaks == 0 && secs < 60.0,
          std::to_string(sequences) + " sequences, " + std::to_string(pairs) + " pairs, " +
              std::to_string(disagreements) + " disagreements; probe " + std::to_string(probed) + " pairs, " +
              std::to_string(leaks) + " leaks, " + std::to_string(dead) + " silent allowed pairs; " + fmt(secs, 3) +
              " s"};
}

// ---------------------------------------------------------------------------
// 2. inference mask is a restriction of the training mask

Outcome submatrix(const Settings&) {
  Rng rng(2024);
  std::size_t mismatched = 0, entries = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 12));
    const int k = static_cast<int>(rng.uniform_int(2, std::min(n, 6)));
    const int p = static_cast<int>(rng.uniform_int(1, 6));
    const auto part = partition_frames(n, k, rng);
    const int upto = static_cast<int>(rng.uniform_int(0, k - 1));
    const auto train = testutil::line_sequence(part.sizes, p);
    std::vector<int> keep;
    for (int i = 0; i < static_cast<int>(train.size()); ++i) {
      const Token& t = train.tokens[i];
      if ((t.role == Role::Clean && t.clip < upto) || (t.role == Role::Noisy && t.clip == upto)) keep.push_back(i);
    }
    const auto inf = testutil::line_inference({part.sizes.begin(), part.sizes.begin() + upto + 1}, p);
    if (inf.size() != keep.size()) return {false, "layout size differs at trial " + std::to_string(trial)};
    const auto a = build_inference_mask(inf);
    const auto b = build_training_mask(train).restrict_to(keep);
    for (int q = 0; q < a.size(); ++q)
      for (int t = 0; t < a.size(); ++t) mismatched += a(q, t) != b(q, t);
    entries += static_cast<std::size_t>(a.size()) * a.size();
  }
  return {mismatched == 0, "200 shapes, " + std::to_string(entries) + " entries, " + std::to_string(mismatched) +
                               " mismatched"};
}

// ---------------------------------------------------------------------------
// 3. interpolation endpoints and moments

Outcome interpolation(const Settings&) {
  const PatchEncoder enc{4};
  const auto clip = enc.encode(testutil::random_video(3, 16, 16, 11));
  bool endpoints = true;
  Rng r1(5);
  for (const auto& nf : forward_diffuse(clip, 1.0f, r1)) endpoints &= nf.latent.patches == clip[nf.latent.frame].patches;
  Rng r0(6), eps(6);
  for (const auto& nf : forward_diffuse(clip, 0.0f, r0))
    for (float x : nf.latent.patches) endpoints &= x == static_cast<float>(eps.normal());

  constexpr int kDraws = 100000;
  const float phi = 0.7f;
  LatentClip one(1);
  one[0].grid = PatchGrid{1, 1, 1, kDraws};
  one[0].patches.assign(kDraws, phi);
  bool moments = true;
  std::ostringstream worst;
  for (float a : {0.1f, 0.5f, 0.9f}) {
    Rng rng(100 + static_cast<int>(a * 10));
    const auto out = forward_diffuse(one, a, rng);
    double sum = 0.0, sq = 0.0;
    for (float x : out[0].latent.patches) sum += x;
    const double mean = sum / kDraws;
    for (float x : out[0].latent.patches) sq += (x - mean) * (x - mean);
    const double var = sq / (kDraws - 1);
    const double sd = 1.0 - a;
    const double z_mean = (mean - a * phi) / (sd / std::sqrt(kDraws));
    const double z_var = (var - sd * sd) / (sd * sd * std::sqrt(2.0 / (kDraws - 1)));
    moments &= std::abs(z_mean) < 3.0 && std::abs(z_var) < 3.0;
    worst << " a=" << a << " z_mean=" << fmt(z_mean, 3) << " z_var=" << fmt(z_var, 3);
  }
  return {endpoints && moments, std::string("endpoints ") + (endpoints ? "exact" : "inexact") + ";" + worst.str()};
}

// ---------------------------------------------------------------------------
// 4. gradient check

Outcome gradient_check(const Settings&) {
  const auto t0 = Clock::now();
  const auto params = init_params<double>(testutil::tiny_config(2));
  const auto r = grad_check(params, testutil::gradcheck_batch());
  const double secs = seconds_since(t0);
  return {r.max_relative_error < 1e-4 && secs < 120.0,
          "max relative error " + fmt(r.max_relative_error, 3) + " (" + r.worst_group + ") over " +
              std::to_string(r.per_group.size()) + " groups; " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 5. sampler with the ground-truth predictor

Outcome oracle_sampler(const Settings&) {
  SceneConfig sc;
  sc.num_frames = 8;
  sc.seed = 3;
  const VideoTensor video = generate_scene(sc);
  const PatchGrid grid = PatchGrid::for_frame(1, 16, 16, 4);
  double worst = 0.0;
  for (int m : {1, 2, 5, 50})
    for (double c : {1.0, 3.0}) {
      oracle::TruthPredictor truth{video, 4, 4, {4}};
      SamplerConfig cfg;
      cfg.steps = m;
      cfg.cfg_scale = c;
      Rng noise(m);
      const auto out = sample_clip({video.slice(0, 4)}, ClipRequest{4}, cfg, grid, truth, noise);
      const auto want = video.slice(4, 4);
      for (std::size_t i = 0; i < out.data.size(); ++i)
        worst = std::max(worst, static_cast<double>(std::abs(out.data[i] - want.data[i])));
    }
  Rng rng(9);
  std::vector<float> cond(257), uncond(257);
  for (auto& x : cond) x = static_cast<float>(rng.normal());
  for (auto& x : uncond) x = static_cast<float>(rng.normal());
  const bool exact = cfg_combine(cond, uncond, 0.0) == uncond && cfg_combine(cond, uncond, 1.0) == cond;
  return {worst < 1e-6 && exact, "max abs error " + fmt(worst, 3) + " over m in {1,2,5,50}; cfg_combine " +
                                     (exact ? "exact" : "inexact") + " at c in {0,1}"};
}

// ---------------------------------------------------------------------------
// training helpers for 6-8

ModelConfig desk_model(int num_classes, std::uint64_t seed) {
  ModelConfig m;  // depth 4, width 128, heads 4
  m.patch_dim = 16;
  m.num_classes = num_classes;
  m.seed = seed;
  return m;
}

TrainState train(const std::vector<VideoTensor>& data, const std::vector<ClassLabel>* labels, const ModelConfig& model,
                 const std::vector<StageConfig>& stages, const TrainOptions& opt, std::uint64_t seed,
                 std::vector<double>* losses, const std::string& tag) {
  TrainState state = TrainState::fresh(init_params<float>(model), seed);
  for (; state.stage < static_cast<int>(stages.size()); ++state.stage, state.stage_step = 0) {
    double window = 0.0;
    int in_window = 0;
    run_stage(state, stages[state.stage], data, labels, opt, [&](const StepRecord& r) {
      if (losses) losses->push_back(r.loss);
      window += r.loss;
      if (++in_window == 100) {
        progress(tag + " stage " + std::to_string(r.stage + 1) + " step " + std::to_string(r.step) + " loss " +
                 fmt(window / in_window));
        window = 0.0;
        in_window = 0;
      }
    });
  }
  return state;
}

std::vector<VideoTensor> bouncing_videos(int count, int frames, std::uint64_t seed, double radius = 2.5) {
  std::vector<VideoTensor> out;
  Rng seeds = Rng::derive(seed, "videos");
  for (int i = 0; i < count; ++i) {
    SceneConfig sc;
    sc.num_frames = frames;
    sc.radius = radius;
    sc.seed = seeds.next_u64();
    out.push_back(generate_scene(sc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 6. overfit one video

Outcome overfit(const Settings& s) {
  const auto t0 = Clock::now();
  const auto video = bouncing_videos(1, 8, 6);
  StageConfig stage{8, 1, 1, 2, s.quick ? 50 : 500, 2e-3, 4};
  TrainOptions opt;
  opt.optimizer.warmup_steps = 20;
  opt.optimizer.weight_decay = 0.0;
  std::vector<double> losses;
  const TrainState state = train(video, nullptr, desk_model(0, 6), {stage}, opt, 6, &losses, "overfit");
  const int tail = std::min<int>(20, static_cast<int>(losses.size()));
  double final_loss = 0.0;
  for (int i = 0; i < tail; ++i) final_loss += losses[losses.size() - 1 - i];
  final_loss /= tail;

  // Reconstruction of a memorized clip: no guidance.
  SamplerConfig cfg;
  cfg.seed = 6;
  cfg.cfg_scale = 1.0;
  ModelPredictor predictor{&state.params};
  const auto pred = autoregress(video[0].slice(0, 4), 1, cfg, predictor);
  const auto m = mse(pred, video[0].slice(4, 4));
  const double next_mse = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
  const double secs = seconds_since(t0);
  return {final_loss < 0.01 && next_mse < 0.01 && secs < 300.0,
          "final loss " + fmt(final_loss) + " (mean of last " + std::to_string(tail) + " steps), next-clip mse " +
              fmt(next_mse) + "; " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 7. held-out rollout against copy-last

Outcome rollout_generalizes(const Settings& s) {
  const auto t0 = Clock::now();
  // Larger ball than the generator default: a hard-edged disk's MSE under a
  // position error grows with its perimeter, the baseline's with its area.
  const auto train_set = bouncing_videos(200, 48, 7, 3.5);
  const auto held_out = bouncing_videos(20, 16, 7007, 3.5);
  auto stages = desk_schedule();
  if (s.quick)
    for (auto& st : stages) st.steps = 20;
  TrainOptions opt;
  const TrainState state = train(train_set, nullptr, desk_model(0, 7), stages, opt, 7, nullptr, "rollout");
  const double train_secs = seconds_since(t0);

  ModelPredictor predictor{&state.params};
  SamplerConfig cfg;
  cfg.seed = 70;
  const RolloutSpec spec{4, 12, 0.5};
  const EvalReport wide = evaluate_rollout(predictor, held_out, spec, cfg);
  cfg.frames_per_clip = 1;
  const EvalReport narrow = evaluate_rollout(predictor, held_out, spec, cfg);
  const double secs = seconds_since(t0);
  const bool pass = wide.relative_improvement >= 0.5 && narrow.mean_mse > wide.mean_mse && secs < 3600.0;
  return {pass, "mse " + fmt(wide.mean_mse) + " vs copy-last " + fmt(wide.baseline_mean_mse) + " (improvement " +
                    fmt(100.0 * wide.relative_improvement, 3) + "%); N_k=1 mse " + fmt(narrow.mean_mse) +
                    "; train " + fmt(train_secs, 3) + " s, total " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 8. class conditioning

Outcome class_conditioning(const Settings& s) {
  const auto t0 = Clock::now();
  // Class 0: large bouncing ball. Class 1: small drifting ball.
  auto make = [](int count, std::uint64_t seed) {
    std::vector<VideoTensor> videos;
    std::vector<ClassLabel> labels;
    Rng seeds = Rng::derive(seed, "classes");
    for (int i = 0; i < count; ++i) {
      SceneConfig sc;
      sc.num_frames = 16;
      sc.seed = seeds.next_u64();
      sc.kind = i % 2 == 0 ? SceneKind::BouncingBall : SceneKind::LinearDrift;
      sc.radius = i % 2 == 0 ? 4.5 : 1.5;
      videos.push_back(generate_scene(sc));
      labels.push_back({i % 2, i % 2 == 0 ? "large" : "small"});
    }
    return std::pair{videos, labels};
  };
  const auto [train_set, train_labels] = make(100, 8);
  const auto [probe_set, probe_labels] = make(60, 808);

  StageConfig stage{8, 1, 1, 0, s.quick ? 20 : 600, 1e-3, 4};
  const TrainState state =
      train(train_set, &train_labels, desk_model(2, 8), {stage}, TrainOptions{}, 8, nullptr, "classes");

  // Unconditioned-by-history generation of one clip per sample.
  constexpr int kSamples = 12;
  ModelPredictor predictor{&state.params};
  const PatchGrid grid = PatchGrid::for_frame(1, 16, 16, 4);
  std::array<std::vector<double>, 2> means;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < kSamples; ++i) {
      SamplerConfig cfg;
      cfg.seed = 800 + 100 * c + i;
      const std::vector<int> lengths{4};
      const VideoTensor clip = rollout({}, lengths, cfg, grid, 8, predictor, ClassLabel{c, {}}, 2);
      means[c].push_back(std::accumulate(clip.data.begin(), clip.data.end(), 0.0) / clip.data.size());
    }
  auto stats = [](const std::vector<double>& v) {
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double sq = 0.0;
    for (double x : v) sq += (x - mu) * (x - mu);
    return std::pair{mu, std::sqrt(sq / (v.size() - 1))};
  };
  const auto [mu0, sd0] = stats(means[0]);
  const auto [mu1, sd1] = stats(means[1]);
  const double gap = std::abs(mu0 - mu1);
  const double spread = std::max(sd0, sd1);

  std::vector<Eigen::VectorXd> tr_x, te_x;
  std::vector<int> tr_y, te_y;
  for (std::size_t i = 0; i < probe_set.size(); ++i) {
    auto f = video_features(state.params, probe_set[i], 4, 4);
    (i < probe_set.size() / 2 ? tr_x : te_x).push_back(std::move(f));
    (i < probe_set.size() / 2 ? tr_y : te_y).push_back(probe_labels[i].id);
  }
  const LinearProbe probe = train_probe(tr_x, tr_y, 2);
  const double acc = accuracy(probe, te_x, te_y);
  const double secs = seconds_since(t0);
  return {gap > 10.0 * spread && acc >= 0.8,
          "class mean intensity " + fmt(mu0) + " vs " + fmt(mu1) + ", gap/spread " + fmt(gap / spread, 3) +
              "; probe accuracy " + fmt(100.0 * acc, 3) + "% (chance 50%); " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 9. reproducibility through the CLI

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string drop_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

// Every regular file under dir, keyed by relative path; log CSVs lose wall_ms.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).string();
    std::string bytes = slurp(e.path());
    if (e.path().filename() == "log.csv") bytes = drop_last_column(bytes);
    files[rel] = std::move(bytes);
  }
  return files;
}

Outcome reproducibility(const Settings& s) {
  const auto t0 = Clock::now();
  auto session = [&](const fs::path& dir, std::string& stdout_text) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string() + "/";
    {
      std::ofstream cfg(d + "train.cfg");
      cfg << "data = data.ncvd\nlabels = labels.tsv\ncheckpoint_dir = ck\nlog = log.csv\n"
             "model.depth = 2\nmodel.width = 32\nmodel.heads = 2\nmodel.classes = 2\n"
             "warmup = 5\nstages = 2\n"
             "stage1.frames = 8\nstage1.clips = 0\nstage1.steps = 10\nstage1.batch = 2\n"
             "stage2.frames = 12\nstage2.clips = 0\nstage2.steps = 10\nstage2.batch = 2\nstage2.interval = 1-2\n";
    }
    const std::vector<std::vector<std::string>> commands = {
        {"--seed", "5", "gen-data", "--scene", "bouncing_ball,linear_drift", "--count", "8", "--frames", "24",
         "--radius", "4,1.5", "--out", d + "data.ncvd", "--labels-out", d + "labels.tsv"},
        {"--seed", "5", "--log-level", "error", "pretrain", "--config", d + "train.cfg"},
        {"--seed", "5", "predict", "--ckpt", d + "ck/final.nckp", "--input", d + "data.ncvd", "--clips", "2",
         "--steps", "4", "--class", "1", "--out", d + "pred.ncvd"},
        {"--seed", "5", "predict", "--ckpt", d + "ck/final.nckp", "--input", d + "data.ncvd", "--cond-frames", "0",
         "--clips", "1", "--steps", "4", "--class", "0", "--out", d + "scratch.ncvd"},
        {"--seed", "5", "render", "--in", d + "pred.ncvd", "--out", d + "frames"},
        {"--seed", "5", "eval", "--ckpt", d + "ck/final.nckp", "--data", d + "data.ncvd", "--horizon", "8",
         "--steps", "4", "--out", d + "eval.csv"},
        {"--seed", "5", "probe", "--ckpt", d + "ck/final.nckp", "--data", d + "data.ncvd", "--labels",
         d + "labels.tsv", "--out", d + "probe.csv"},
        {"--seed", "5", "mask-dump", "--sizes", "2,1,3", "--patches", "3", "--extras", "1", "--ascii",
         d + "mask.txt", "--pgm", d + "mask.pgm", "--layout", d + "layout.txt"},
    };
    for (const auto& args : commands) {
      std::ostringstream out, err;
      const int code = cli::dispatch(args, out, err);
      if (code != 0) throw std::runtime_error(args[2] + " failed: " + err.str());
      stdout_text += out.str();
    }
  };
  std::string out_a, out_b;
  try {
    session(s.workdir / "repro_a", out_a);
    session(s.workdir / "repro_b", out_b);
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
  const auto a = snapshot(s.workdir / "repro_a"), b = snapshot(s.workdir / "repro_b");
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : a)
    if (!b.contains(name) || b.at(name) != bytes) differing.push_back(name);
  if (a.size() != b.size()) differing.push_back("(file sets differ)");
  if (out_a != out_b) differing.push_back("(stdout)");

  // Interrupted at step 7 and resumed, against the uninterrupted run above.
  const fs::path r = s.workdir / "repro_resume";
  fs::remove_all(r);
  fs::create_directories(r);
  for (const char* f : {"train.cfg", "data.ncvd", "labels.tsv"}) fs::copy_file(s.workdir / "repro_a" / f, r / f);
  std::ostringstream sink;
  const std::string cfg = (r / "train.cfg").string();
  bool resumed = cli::dispatch({"--seed", "5", "--log-level", "error", "pretrain", "--config", cfg, "--max-steps", "7"},
                               sink, sink) == 0 &&
                 cli::dispatch({"--seed", "5", "--log-level", "error", "pretrain", "--config", cfg, "--resume",
                                (r / "ck/step7.nckp").string()},
                               sink, sink) == 0;
  resumed = resumed && drop_last_column(slurp(r / "log.csv")) == drop_last_column(slurp(s.workdir / "repro_a/log.csv")) &&
            slurp(r / "ck/final.nckp") == slurp(s.workdir / "repro_a/ck/final.nckp");

  std::string detail = std::to_string(a.size()) + " files compared, " + std::to_string(differing.size()) + " differ";
  for (const auto& d : differing) detail += " " + d;
  detail += std::string("; resume ") + (resumed ? "bit-exact" : "diverged") + "; " + fmt(seconds_since(t0), 3) + " s";
  return {differing.empty() && resumed, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate"};
  std::string workdir = (fs::temp_directory_path() / "nextclip_acceptance").string();
  std::string only;
  bool quick = false;
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--only", only, "comma list of criteria to run");
  app.add_flag("--quick", quick, "shrink training budgets");
  CLI11_PARSE(app, argc, argv);

  Settings settings{workdir, quick};
  fs::create_directories(settings.workdir);
  const std::vector<std::pair<std::string, std::function<Outcome(const Settings&)>>> criteria = {
      {"mask leakage", mask_leakage},
      {"submatrix property", submatrix},
      {"interpolation endpoints and moments", interpolation},
      {"gradient check", gradient_check},
      {"oracle sampler", oracle_sampler},
      {"overfit one video", overfit},
      {"held-out rollout", rollout_generalizes},
      {"class conditioning", class_conditioning},
      {"reproducibility", reproducibility},
  };
  std::set<int> selected;
  for (const auto& p : cli::split(only, ',')) selected.insert(std::stoi(p));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second(settings);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
