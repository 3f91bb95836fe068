// seldist: dataset generation, training, evaluation, mask diagnostics, plots.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "seldist/seldist.hpp"

namespace fs = std::filesystem;
using namespace seldist;

namespace {

struct GenArgs {
  std::string out;
  int n = 8;
  int n_test = -1;
  std::uint64_t seed = 0;
  int height = 64, width = 128;
  std::string corruption = "offset";
  double delta = 4.0;
  double corrupt_prob = 0.7;
};

int run_gen(const GenArgs& a) {
  if (a.corruption != "none") corruption_mode_from(a.corruption);  // validates the name
  const int n_test = a.n_test >= 0 ? a.n_test : std::max(1, a.n / 4);
  BenchmarkParams bp;
  bp.delta = a.delta;
  bp.box_corruption_probability = a.corruption == "none" ? 0.0 : a.corrupt_prob;
  if (a.corruption != "none") bp.mode = corruption_mode_from(a.corruption);
  for (const auto& [split, count] : {std::pair<std::string, int>{"train", a.n}, {"test", n_test}}) {
    std::vector<StereoSample> samples;
    for (int i = 0; i < count; ++i) {
      StereoSample s = benchmark_sample(derive_seed(a.seed, split, static_cast<std::uint64_t>(i)), a.height, a.width, bp);
      s.id = scene_id(static_cast<std::uint64_t>(i));
      samples.push_back(std::move(s));
    }
    write_dataset(a.out, split, samples);
    std::cout << "split=" << split << " samples=" << count << "\n";
  }
  std::cout << "out=" << a.out << "\n";
  return 0;
}

std::unique_ptr<ProxyTeacher> make_teacher(const TrainConfig& cfg, const fs::path& split_dir) {
  if (cfg.proxy_mode == ProxyMode::synthetic) return std::make_unique<BlockMatchingProxy>(cfg.base_channels);
  return file_proxy(split_dir / "proxy", cfg.base_channels);
}

struct TrainArgs {
  std::string config;
  std::string out = "runs/default";
  std::string resume;
  std::string data;
  int epochs = 0;  // 0: keep the config value
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = load_config(a.config);
  if (!a.data.empty()) cfg.dataset_root = a.data;
  if (a.epochs > 0) cfg.epochs = a.epochs;
  seed_everything(cfg.seed);
  const fs::path root = cfg.dataset_root;
  const auto data = load_dataset(root, "train", cfg.proxy_mode);
  if (data.empty()) throw std::runtime_error("no training samples under " + (root / "train").string());
  const auto teacher = make_teacher(cfg, root / "train");
  MonoNet net(MonoNetConfig::from(cfg));
  TrainOptions opt;
  opt.out_dir = a.out;
  opt.log = &std::cout;
  if (!a.resume.empty()) opt.resume = load_checkpoint(a.resume);
  fs::create_directories(a.out);
  {
    std::ofstream f(fs::path(a.out) / "config.cfg");
    f << serialize_config(cfg);
  }
  std::cout << "params=" << net.parameters().scalar_count() << " samples=" << data.size()
            << " mode=" << to_string(cfg.distill_mode) << " ts=" << (cfg.ts_enabled() ? 1 : 0) << "\n";
  const TrainResult r = train(net, *teacher, data, cfg, opt);
  std::cout << "checkpoint=" << (fs::path(a.out) / "checkpoint.bin").string() << " epochs=" << r.epochs.size()
            << " teacher_frozen=" << (r.teacher_hash_before == r.teacher_hash_after ? 1 : 0) << "\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::string out;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint c = load_checkpoint(a.ckpt);
  const MonoNet net = network_from_checkpoint(c);
  const fs::path root = a.data.empty() ? fs::path(c.config.dataset_root) : fs::path(a.data);
  const auto samples = load_dataset(root, a.split, ProxyMode::synthetic);
  if (samples.empty()) throw std::runtime_error("no samples under " + (root / a.split).string());
  const EvalReport r = evaluate(net, samples);
  const auto& m = r.overall;
  std::cout << "abs_rel=" << m.abs_rel << " sq_rel=" << m.sq_rel << " rmse=" << m.rmse << " rmse_log=" << m.rmse_log
            << " a1=" << m.delta1 << " a2=" << m.delta2 << " a3=" << m.delta3 << " n_pixels=" << m.n_pixels << "\n";
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw std::runtime_error("cannot write " + a.out);
    f << report_csv_header() << "\n";
    for (std::size_t i = 0; i < r.ids.size(); ++i) f << format_report_row(r.ids[i], r.per_sample[i]) << "\n";
    f << format_report_row("all", m) << "\n";
  }
  return 0;
}

struct MaskArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::string out;
};

int run_masks(const MaskArgs& a) {
  const Checkpoint c = load_checkpoint(a.ckpt);
  const MonoNet net = network_from_checkpoint(c);
  const fs::path root = a.data.empty() ? fs::path(c.config.dataset_root) : fs::path(a.data);
  const auto samples = load_dataset(root, a.split, ProxyMode::file);
  if (samples.empty()) throw std::runtime_error("no samples under " + (root / a.split).string());
  const MaskStats st = mask_diagnostics(net, samples);
  std::cout << "corrupted_rejected=" << st.corrupted_rejected << " oracle_agreement=" << st.oracle_agreement
            << " fill_rc=" << st.fill_rc << " fill_sm=" << st.fill_sm << " n_corrupted=" << st.n_corrupted
            << " n_compared=" << st.n_compared << "\n";
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    for (const auto& s : samples) {
      const Tensor& l = mono_forward(net, s.left).mask_logits[0].value();
      for (int ch = 0; ch < 2; ++ch) {
        Tensor m(Shape{1, s.height(), s.width()});
        std::copy(l.channel(ch), l.channel(ch) + m.size(), m.data());
        io::write_mask_png((fs::path(a.out) / (s.id + (ch == 0 ? "_rc.png" : "_sm.png"))).string(), hard_from_logits(m));
      }
    }
  }
  return 0;
}

struct PlotArgs {
  std::string metrics;
  std::string out = "loss.png";
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::string panels = "panels.png";
  int n_samples = 3;
};

int run_plot(const PlotArgs& a) {
  if (a.metrics.empty() && a.ckpt.empty()) throw CLI::ValidationError("plot", "need --metrics and/or --ckpt");
  if (!a.metrics.empty()) {
    const CsvTable t = read_csv(a.metrics);
    io::write_png(a.out, io::tensor_to_image(plot_loss_curves(t, {"L_total", "L_depth", "L_mask"})));
    std::cout << "loss_plot=" << a.out << "\n";
  }
  if (!a.ckpt.empty()) {
    const Checkpoint c = load_checkpoint(a.ckpt);
    const MonoNet net = network_from_checkpoint(c);
    const fs::path root = a.data.empty() ? fs::path(c.config.dataset_root) : fs::path(a.data);
    const auto samples = load_dataset(root, a.split, ProxyMode::file);
    if (samples.empty()) throw std::runtime_error("no samples under " + (root / a.split).string());
    std::vector<Tensor> rows;
    for (std::size_t i = 0; i < samples.size() && static_cast<int>(i) < a.n_samples; ++i) {
      const auto& s = samples[i];
      const MonoNetOutputs o = mono_forward(net, s.left);
      const double hi = 0.3 * s.width() * 0.5;
      const Tensor& l = o.mask_logits[0].value();
      Tensor rc(Shape{1, s.height(), s.width()}), sm(rc.shape());
      std::copy(l.channel(0), l.channel(0) + rc.size(), rc.data());
      std::copy(l.channel(1), l.channel(1) + sm.size(), sm.data());
      rows.push_back(s.left);
      rows.push_back(colorize(s.proxy_disparity, 0.0, hi));
      rows.push_back(colorize(o.disparity[0].value(), 0.0, hi));
      rows.push_back(gray_to_rgb(hard_from_logits(rc)));
      rows.push_back(gray_to_rgb(hard_from_logits(sm)));
    }
    io::write_png(a.panels, io::tensor_to_image(stack_panels(rows)));
    std::cout << "panels=" << a.panels << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective proxy distillation for monocular depth"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "write a synthetic stereo dataset");
  g->add_option("--out", gen.out, "output root")->required();
  g->add_option("--n", gen.n, "training samples")->check(CLI::PositiveNumber);
  g->add_option("--n-test", gen.n_test, "test samples (default n/4)");
  g->add_option("--seed", gen.seed, "root seed");
  g->add_option("--height", gen.height, "image height (multiple of 16)");
  g->add_option("--width", gen.width, "image width (multiple of 16)");
  g->add_option("--corruption", gen.corruption, "proxy corruption mode")
      ->check(CLI::IsMember({"offset", "blur", "zero", "none"}));
  g->add_option("--delta", gen.delta, "offset in pixels");
  g->add_option("--corrupt-prob", gen.corrupt_prob, "probability that a box is corrupted")->check(CLI::Range(0.0, 1.0));

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a network from a config file");
  t->add_option("--config", tr.config, "config file")->required();
  t->add_option("--out", tr.out, "run directory");
  t->add_option("--resume", tr.resume, "checkpoint to resume from");
  t->add_option("--data", tr.data, "dataset root (overrides dataset_root)");
  t->add_option("--epochs", tr.epochs, "epochs (overrides the config)")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "depth metrics on a split");
  e->add_option("--ckpt", ev.ckpt, "checkpoint")->required();
  e->add_option("--data", ev.data, "dataset root (default: from checkpoint config)");
  e->add_option("--split", ev.split, "split name");
  e->add_option("--out", ev.out, "report CSV");

  MaskArgs mk;
  auto* m = app.add_subcommand("masks", "mask diagnostics against corruption metadata");
  m->add_option("--ckpt", mk.ckpt, "checkpoint")->required();
  m->add_option("--data", mk.data, "dataset root");
  m->add_option("--split", mk.split, "split name");
  m->add_option("--out", mk.out, "directory for mask PNGs");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "loss curves and disparity/mask panels");
  p->add_option("--metrics", pl.metrics, "metrics.csv from a training run");
  p->add_option("--out", pl.out, "loss curve PNG");
  p->add_option("--ckpt", pl.ckpt, "checkpoint for panels");
  p->add_option("--data", pl.data, "dataset root");
  p->add_option("--split", pl.split, "split name");
  p->add_option("--panels", pl.panels, "panel PNG");
  p->add_option("--n", pl.n_samples, "samples in the panel")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  try {
    if (*g) return run_gen(gen);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*m) return run_masks(mk);
    if (*p) return run_plot(pl);
  } catch (const CLI::ValidationError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
