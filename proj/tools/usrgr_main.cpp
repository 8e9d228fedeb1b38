#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "usrgr/config.hpp"
#include "usrgr/dataset.hpp"
#include "usrgr/gradcheck.hpp"
#include "usrgr/kspace.hpp"
#include "usrgr/raster.hpp"
#include "usrgr/train.hpp"
#include "usrgr/version.hpp"

namespace fs = std::filesystem;
using namespace usrgr;

namespace {

struct CliOptions {
  config::RunConfig cfg;
  std::string config_path;
  std::vector<std::string> overrides;  // key=value

  void resolve() {
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
  }
};

void add_config_options(CLI::App* cmd, CliOptions& opts) {
  cmd->add_option("--config", opts.config_path, "flat key = value config file");
  cmd->add_option("--set", opts.overrides, "config override key=value (repeatable)")->take_all();
  cmd->add_option("--seed", [&opts](const std::vector<std::string>& v) {
    opts.cfg.set("seed", v.back());
    return true;
  }, "seed override");
  cmd->add_option("--dtype", [&opts](const std::vector<std::string>& v) {
    opts.cfg.set("dtype", v.back());
    return true;
  }, "float32 | float64");
}

void write_run_metadata(const std::string& dir, const config::RunConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream echo(fs::path(dir) / "config.echo");
  cfg.echo(echo);
  std::ofstream version(fs::path(dir) / "version.txt");
  version << kVersion << "\n";
}

data::DatasetManifest manifest_for(const std::string& data_dir, const std::string& split) {
  return data::load_manifest((fs::path(data_dir) / ("manifest_" + split + ".txt")).string());
}

template <typename T>
int run_pretrain_g(const CliOptions& opts, const std::string& data_dir, const std::string& out_dir) {
  write_run_metadata(out_dir, opts.cfg);
  fs::create_directories(fs::path(out_dir) / "ckpt");
  const auto images = data::load_images(manifest_for(data_dir, "train"));
  train::CheckpointSink<T> sink = [&out_dir](long step, const model::Network<T>& net) {
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt/g_step_%06ld.usrm", step);
    model::save_checkpoint((fs::path(out_dir) / name).string(), net);
    model::save_checkpoint((fs::path(out_dir) / "ckpt" / "g_final.usrm").string(), net);
  };
  train::TrainResult<T> result = train::pretrain_g<T>(images, opts.cfg.train, sink);
  train::write_step_logs((fs::path(out_dir) / "g_pretrain.log").string(), result.logs);
  if (result.diverged) {
    std::cerr << "pretrain-g: loss diverged at step " << result.steps_done + 1
              << "; last finite checkpoint retained\n";
    return 3;
  }
  std::cout << "pretrain-g: done, " << result.steps_done << " steps, final loss "
            << (result.logs.empty() ? 0.0 : result.logs.back().g_loss) << "\n";
  return 0;
}

template <typename T>
int run_train(const CliOptions& opts, const std::string& data_dir, const std::string& g_ckpt,
              const std::string& out_dir) {
  write_run_metadata(out_dir, opts.cfg);
  fs::create_directories(fs::path(out_dir) / "ckpt");
  const auto images = data::load_images(manifest_for(data_dir, "train"));

  std::optional<model::Network<T>> g;
  if (!opts.cfg.train.no_sinc) {
    if (g_ckpt.empty()) throw ConfigError("train: --g checkpoint required unless no_sinc");
    g = model::load_checkpoint<T>(g_ckpt);
  }
  train::CheckpointSink<T> sink = [&out_dir](long step, const model::Network<T>& net) {
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt/f_step_%06ld.usrm", step);
    model::save_checkpoint((fs::path(out_dir) / name).string(), net);
    model::save_checkpoint((fs::path(out_dir) / "ckpt" / "f_final.usrm").string(), net);
  };
  train::TrainResult<T> result = train::train_usrgr<T>(images, g ? &*g : nullptr, opts.cfg.train, sink);
  train::write_step_logs((fs::path(out_dir) / "train.log").string(), result.logs);
  if (g) model::save_checkpoint((fs::path(out_dir) / "ckpt" / "g_final.usrm").string(), *g);
  if (result.diverged) {
    std::cerr << "train: loss diverged at step " << result.steps_done + 1 << "; last finite checkpoint retained\n";
    return 3;
  }
  std::cout << "train: done, " << result.steps_done << " steps, final total "
            << (result.logs.empty() ? 0.0 : result.logs.back().total) << "\n";
  return 0;
}

template <typename T>
int run_eval(const CliOptions& opts, const std::string& model_path, const std::string& data_dir,
             const std::string& mode, const std::string& split, const std::string& out_dir) {
  write_run_metadata(out_dir, opts.cfg);
  model::Network<T> net = model::load_checkpoint<T>(model_path);
  const data::DatasetManifest manifest = manifest_for(data_dir, split);
  const data::EvalMode m = mode == "real" ? data::EvalMode::real : data::EvalMode::synthetic;
  train::EvalReport report =
      train::evaluate(net, manifest, m, "usrgr", (fs::path(out_dir) / "images").string());
  if (m == data::EvalMode::synthetic) {
    report.write((fs::path(out_dir) / "reports").string());
    std::cout << "eval: mean PSNR " << report.mean_psnr << " dB, mean SSIM " << report.mean_ssim << "\n";
  } else {
    std::cout << "eval: wrote " << report.rows.size() << " predictions (real mode, no metrics)\n";
  }
  return 0;
}

template <typename T>
int run_baseline(const CliOptions& opts, const std::string& method, const std::string& data_dir,
                 const std::string& out_dir) {
  write_run_metadata(out_dir, opts.cfg);
  const data::DatasetManifest test = manifest_for(data_dir, "test");
  train::EvalReport report;
  if (method == "bicubic") {
    report = train::run_baseline_bicubic(test);
  } else if (method == "deg-sr") {
    const auto images = data::load_images(manifest_for(data_dir, "train"));
    train::DegSrResult<T> r = train::run_deg_sr<T>(images, test, opts.cfg.train);
    fs::create_directories(fs::path(out_dir) / "ckpt");
    model::save_checkpoint((fs::path(out_dir) / "ckpt" / "degibbs.usrm").string(), r.degibbs);
    model::save_checkpoint((fs::path(out_dir) / "ckpt" / "sr.usrm").string(), r.sr);
    report = std::move(r.report);
  } else {
    throw ConfigError("baseline: unknown method '" + method + "'");
  }
  report.write((fs::path(out_dir) / "reports").string());
  std::cout << "baseline " << method << ": mean PSNR " << report.mean_psnr << " dB, mean SSIM "
            << report.mean_ssim << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint 2x super-resolution and ringing removal on k-space-truncated images"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CliOptions opts;

  // phantom
  auto* phantom = app.add_subcommand("phantom", "generate a synthetic ellipse-phantom dataset");
  std::string ph_out;
  int ph_count = 200, ph_size = 64;
  std::uint64_t ph_seed = 1;
  phantom->add_option("--out", ph_out, "output dataset directory")->required();
  phantom->add_option("--count", ph_count, "training sample count (val/test get count/10 each)");
  phantom->add_option("--size", ph_size, "image extent");
  phantom->add_option("--seed", ph_seed, "dataset seed");

  // degrade
  auto* degrade = app.add_subcommand("degrade", "apply the frequency-crop degradation to one raster");
  std::string dg_in, dg_out;
  double dg_noise = 0.0;
  std::uint64_t dg_seed = 1;
  int dg_factor = 2;
  degrade->add_option("--in", dg_in, "input raster (USRT or PGM)")->required();
  degrade->add_option("--out", dg_out, "output raster")->required();
  degrade->add_option("--noise", dg_noise, "additive Gaussian noise sigma");
  degrade->add_option("--seed", dg_seed, "noise seed");
  degrade->add_option("--factor", dg_factor, "downsampling factor");

  // pretrain-g
  auto* pre = app.add_subcommand("pretrain-g", "pretrain the auxiliary network");
  std::string pre_data, pre_out;
  pre->add_option("--data", pre_data, "dataset directory")->required();
  pre->add_option("--out", pre_out, "run directory")->required();
  add_config_options(pre, opts);

  // train
  auto* tr = app.add_subcommand("train", "train the SR network");
  std::string tr_data, tr_g, tr_out;
  bool tr_no_fid = false, tr_no_sinc = false, tr_plain = false;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--g", tr_g, "pretrained g checkpoint");
  tr->add_option("--out", tr_out, "run directory")->required();
  tr->add_flag("--no-fid", tr_no_fid, "drop the fidelity term");
  tr->add_flag("--no-sinc", tr_no_sinc, "drop the sinc term (no g)");
  tr->add_flag("--plain-blocks", tr_plain, "use residual blocks without 1D convolutions");
  add_config_options(tr, opts);

  // infer
  auto* inf = app.add_subcommand("infer", "run a checkpoint on one raster");
  std::string in_model, in_in, in_out, in_dtype = "float32";
  inf->add_option("--model", in_model, "checkpoint")->required();
  inf->add_option("--in", in_in, "input raster")->required();
  inf->add_option("--out", in_out, "output raster")->required();
  inf->add_option("--dtype", in_dtype, "float32 | float64");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against a dataset");
  std::string ev_model, ev_data, ev_mode = "synthetic", ev_split = "test", ev_out;
  ev->add_option("--model", ev_model, "checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--mode", ev_mode, "synthetic | real")->check(CLI::IsMember({"synthetic", "real"}));
  ev->add_option("--split", ev_split, "manifest split (default test)");
  ev->add_option("--out", ev_out, "run directory")->required();
  add_config_options(ev, opts);

  // baseline
  auto* base = app.add_subcommand("baseline", "bicubic or two-stage deG+SR baseline");
  std::string base_method, base_data, base_out;
  base->add_option("--method", base_method, "bicubic | deg-sr")
      ->required()
      ->check(CLI::IsMember({"bicubic", "deg-sr"}));
  base->add_option("--data", base_data, "dataset directory")->required();
  base->add_option("--out", base_out, "run directory")->required();
  add_config_options(base, opts);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference suites over all differentiable ops");
  std::string gc_op;
  gc->add_option("--op", gc_op, "only checks whose name contains this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*phantom) {
      data::SplitCounts counts;
      counts.train = ph_count;
      counts.val = std::max(1, ph_count / 10);
      counts.test = std::max(1, ph_count / 10);
      data::generate_phantom_dataset(ph_out, counts, ph_size, ph_seed);
      opts.cfg.set("seed", std::to_string(ph_seed));
      write_run_metadata(ph_out, opts.cfg);
      std::cout << "phantom: wrote " << counts.train << "/" << counts.val << "/" << counts.test
                << " samples at " << ph_size << "x" << ph_size << " under " << ph_out << "\n";
      return 0;
    }
    if (*degrade) {
      Tensor<float> img = data::load_raster(dg_in);
      kspace::DegradeConfig dcfg;
      dcfg.factor = dg_factor;
      dcfg.noise_sigma = dg_noise;
      data::save_raster(dg_out, kspace::degrade(img, dcfg, dg_seed));
      std::cout << "degrade: " << img.dim(0) << "x" << img.dim(1) << " -> " << img.dim(0) / dg_factor << "x"
                << img.dim(1) / dg_factor << "\n";
      return 0;
    }
    if (*pre) {
      opts.resolve();
      return opts.cfg.dtype == "float64" ? run_pretrain_g<double>(opts, pre_data, pre_out)
                                         : run_pretrain_g<float>(opts, pre_data, pre_out);
    }
    if (*tr) {
      opts.resolve();
      if (tr_no_fid) opts.cfg.set("no_fid", "true");
      if (tr_no_sinc) opts.cfg.set("no_sinc", "true");
      if (tr_plain) opts.cfg.set("plain_blocks", "true");
      return opts.cfg.dtype == "float64" ? run_train<double>(opts, tr_data, tr_g, tr_out)
                                         : run_train<float>(opts, tr_data, tr_g, tr_out);
    }
    if (*inf) {
      if (in_dtype == "float64") {
        auto net = model::load_checkpoint<double>(in_model);
        Tensor<float> img = data::load_raster(in_in);
        Tensor<double> out = train::infer(net, img.cast<double>());
        data::save_raster(in_out, out.cast<float>());
      } else {
        auto net = model::load_checkpoint<float>(in_model);
        Tensor<float> img = data::load_raster(in_in);
        data::save_raster(in_out, train::infer(net, img));
      }
      std::cout << "infer: wrote " << in_out << "\n";
      return 0;
    }
    if (*ev) {
      opts.resolve();
      return opts.cfg.dtype == "float64" ? run_eval<double>(opts, ev_model, ev_data, ev_mode, ev_split, ev_out)
                                         : run_eval<float>(opts, ev_model, ev_data, ev_mode, ev_split, ev_out);
    }
    if (*base) {
      opts.resolve();
      return opts.cfg.dtype == "float64" ? run_baseline<double>(opts, base_method, base_data, base_out)
                                         : run_baseline<float>(opts, base_method, base_data, base_out);
    }
    if (*gc) {
      const auto results = gradcheck::run_all(gc_op);
      if (results.empty()) {
        std::cerr << "gradcheck: no check matches '" << gc_op << "'\n";
        return 1;
      }
      bool all_pass = true;
      for (const auto& r : results) {
        std::printf("%-18s max_rel_err %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                    r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
      }
      return all_pass ? 0 : 3;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
