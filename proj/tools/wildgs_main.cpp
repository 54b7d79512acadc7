// wildgs: dataset generation, training, rendering, appearance transfer and
// evaluation from the command line.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "wildgs/checkpoint.hpp"
#include "wildgs/errors.hpp"
#include "wildgs/evaluate.hpp"
#include "wildgs/image_io.hpp"
#include "wildgs/scenegen.hpp"
#include "wildgs/trainer.hpp"

namespace fs = std::filesystem;
using namespace wildgs;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeFault = 2;

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SplitSpec split_from(int test_every) {
  SplitSpec s;
  s.every_nth = test_every;
  return s;
}

WildGsModel load_model(const std::string& path) { return WildGsModel::from_state(load_checkpoint(path)); }

int cmd_gen(const std::string& spec_path, const std::string& out) {
  const SceneSpec spec = spec_path.empty() ? default_scene_spec() : scene_spec_from_json(read_text(spec_path));
  generate(spec, out);
  return 0;
}

int cmd_train(const std::string& data, const std::string& config_path, const std::string& out, int test_every,
              bool write_masks) {
  const TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config(config_path);
  const DatasetManifest manifest = load_dataset(data, split_from(test_every));
  if (manifest.train.empty()) throw ContractViolation("dataset " + data + " has no training views");
  if (manifest.points.empty()) throw ContractViolation("dataset " + data + " has no initial points");

  std::vector<ViewData> views;
  std::vector<Camera> cameras;
  for (int i : manifest.train) {
    views.push_back(load_view(manifest, i));
    cameras.push_back(views.back().camera);
  }
  fs::create_directories(out);
  std::ofstream log(fs::path(out) / "log.tsv");
  if (!log) throw IoError("cannot write " + (fs::path(out) / "log.tsv").string());
  log << log_header() << '\n';

  Trainer trainer(WildGsModel(cfg, manifest.points, cameras), std::move(views));
  trainer.on_log = [&](const LogRow& row) {
    log << format_log_row(row) << '\n';
    log.flush();
    std::cerr << format_log_row(row) << '\n';
  };
  trainer.on_warning = warn;
  trainer.run(cfg.iterations);
  save_checkpoint((fs::path(out) / "model.ckpt").string(), trainer.model().state());

  if (write_masks && cfg.use_mask) {
    fs::create_directories(fs::path(out) / "masks");
    for (int i : manifest.train) {
      ad::Tape tape(false);
      const ViewData v = load_view(manifest, i);
      const ad::Tensor mask = predict_mask(tape, v.image, trainer.model().parsing);
      write_image((fs::path(out) / "masks" / (view_stem(i) + ".png")).string(), mask);
    }
  }
  if (trainer.rollbacks() > 0) warn(std::to_string(trainer.rollbacks()) + " iterations rolled back");
  return 0;
}

int cmd_render(const std::string& ckpt, const std::string& data, int view, int ref, const std::string& out) {
  const WildGsModel model = load_model(ckpt);
  const DatasetManifest manifest = load_dataset(data, split_from(8));
  const ViewData target = load_view(manifest, view);
  const ViewData reference = load_view(manifest, ref);
  write_image(out, render_with_reference(model, reference.image, reference.camera, target.camera).color);
  return 0;
}

int cmd_transfer(const std::string& ckpt, const std::string& data, int view, int ref_a, int ref_b, double alpha,
                 const std::string& out) {
  const WildGsModel model = load_model(ckpt);
  const DatasetManifest manifest = load_dataset(data, split_from(8));
  const ViewData target = load_view(manifest, view);
  const ViewData a = load_view(manifest, ref_a);
  const ViewData b = load_view(manifest, ref_b);
  ad::Tape tape(false);
  const bool with_triplane = model.config.iterations > model.config.resolved_warmup();
  const auto ctx_a = model.encode_reference(tape, a.image, a.camera, with_triplane).context;
  const auto ctx_b = model.encode_reference(tape, b.image, b.camera, with_triplane).context;
  const AppearanceContext ctx = blend_appearance(ctx_a, ctx_b, alpha);
  write_image(out, model.render(tape, ctx, target.camera).color);
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& split, int test_every,
             const std::string& report_path) {
  const WildGsModel model = load_model(ckpt);
  const DatasetManifest manifest = load_dataset(data, split_from(test_every));
  std::vector<int> views;
  if (split == "test") views = manifest.test;
  else if (split == "train") views = manifest.train;
  else for (std::size_t i = 0; i < manifest.views.size(); ++i) views.push_back(static_cast<int>(i));
  if (views.empty()) warn("split '" + split + "' has no views; writing an empty report");
  const EvalReport report = evaluate(model, manifest, views);
  std::ofstream out(report_path);
  if (!out) throw IoError("cannot write " + report_path);
  write_report(out, report);
  if (!report.views.empty()) {
    std::cerr << "mean PSNR " << report.mean_psnr << " dB, mean SSIM " << report.mean_ssim << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian splatting with per-image appearance for photo collections"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (computation is single-threaded; accepted for scripts)")
      ->check(CLI::PositiveNumber);

  std::string spec, out, data, config, ckpt, report, split = "test";
  int view = 0, ref = 0, ref_a = 0, ref_b = 0, test_every = 8;
  double alpha = 0.0;
  bool masks = false;

  auto* gen = app.add_subcommand("gen", "Generate the synthetic benchmark dataset");
  gen->add_option("--spec", spec, "Scene spec JSON (default: built-in toy scene)")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--test-every", test_every, "Hold out every n-th view")->check(CLI::PositiveNumber);
  train->add_flag("--masks", masks, "Write predicted visibility masks of the training views");

  auto* render = app.add_subcommand("render", "Render a view with the appearance of a reference image");
  render->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  render->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  render->add_option("--view", view)->required()->check(CLI::NonNegativeNumber);
  render->add_option("--ref", ref)->required()->check(CLI::NonNegativeNumber);
  render->add_option("--out", out)->required();

  auto* transfer = app.add_subcommand("transfer", "Render a view with a blend of two reference appearances");
  transfer->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  transfer->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  transfer->add_option("--view", view)->required()->check(CLI::NonNegativeNumber);
  transfer->add_option("--ref-a", ref_a)->required()->check(CLI::NonNegativeNumber);
  transfer->add_option("--ref-b", ref_b)->required()->check(CLI::NonNegativeNumber);
  transfer->add_option("--alpha", alpha)->required()->check(CLI::Range(0.0, 1.0));
  transfer->add_option("--out", out)->required();

  auto* eval = app.add_subcommand("eval", "Score held-out views (PSNR, SSIM)");
  eval->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--split", split)->check(CLI::IsMember({"test", "train", "all"}));
  eval->add_option("--test-every", test_every)->check(CLI::PositiveNumber);
  eval->add_option("--report", report)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*gen) return cmd_gen(spec, out);
    if (*train) return cmd_train(data, config, out, test_every, masks);
    if (*render) return cmd_render(ckpt, data, view, ref, out);
    if (*transfer) return cmd_transfer(ckpt, data, view, ref_a, ref_b, alpha, out);
    if (*eval) return cmd_eval(ckpt, data, split, test_every, report);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFault;
  }
  return kUsageError;
}
