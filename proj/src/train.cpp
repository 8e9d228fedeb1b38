#include "usrgr/train.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "usrgr/kspace.hpp"
#include "usrgr/raster.hpp"
#include "usrgr/rng.hpp"

namespace fs = std::filesystem;

namespace usrgr {
namespace train {

long TrainConfig::step_budget(std::size_t dataset_size) const {
  if (steps > 0) return steps;
  if (epochs <= 0) throw ConfigError("TrainConfig: either steps or epochs must be positive");
  const long per_epoch = static_cast<long>((dataset_size + batch - 1) / batch);
  return epochs * per_epoch;
}

model::ModelConfig TrainConfig::model_config() const {
  model::ModelConfig mc;
  mc.channels = channels;
  mc.num_blocks = blocks;
  mc.blocks = plain_blocks ? model::BlockKind::plain : model::BlockKind::wide;
  return mc;
}

void write_step_logs(const std::string& path, const std::vector<StepLog>& logs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write log: " + path);
  out << "step\tl_ss\tl_f\tl_sinc\ttotal\tg_loss\n";
  char buf[256];
  for (const StepLog& l : logs) {
    auto field = [&](double v, bool present) {
      if (!present) return std::string("-");
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      return std::string(buf);
    };
    out << l.step << "\t" << field(l.l_ss, true) << "\t" << field(l.l_f, l.has_fid) << "\t"
        << field(l.l_sinc, l.has_sinc) << "\t" << field(l.total, true) << "\t" << field(l.g_loss, l.has_g) << "\n";
  }
}

namespace {

/// Batch of `count` random patches as [count,1,patch,patch]; image index and
/// corner both come from the given stream.
template <typename T>
Tensor<T> draw_batch(const std::vector<Tensor<float>>& images, int count, int patch, Rng& rng) {
  if (images.empty()) throw ShapeError("draw_batch: empty dataset");
  Tensor<T> out({count, 1, patch, patch});
  for (int b = 0; b < count; ++b) {
    const auto& img = images[rng.below(images.size())];
    const int h = img.dim(0), w = img.dim(1);
    if (patch > h || patch > w) throw ShapeError("draw_batch: patch exceeds image extents");
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - patch + 1)));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - patch + 1)));
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) out.at(b, 0, y, x) = static_cast<T>(img.at(y0 + y, x0 + x));
  }
  return out;
}

template <typename T>
Tensor<T> to_2d(const Tensor<float>& img) {
  Tensor<T> out({img.dim(0), img.dim(1)});
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<T>(img[i]);
  return out;
}

Tensor<float> to_float2d(const Tensor<float>& t) { return t; }

template <typename T>
Tensor<float> from_T(const Tensor<T>& t) {
  Tensor<float> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(t[i]);
  return out;
}

}  // namespace

template <typename T>
TrainResult<T> pretrain_g(const std::vector<Tensor<float>>& images, const TrainConfig& cfg,
                          const CheckpointSink<T>& sink) {
  cfg.loss.validate();
  model::Network<T> g(model::NetKind::g, cfg.model_config(), derive_seed(cfg.seed, 0x61));
  AdamOptimizer<T> opt(g.params(), {static_cast<T>(cfg.lr)});
  Rng batch_rng(derive_seed(cfg.seed, 0x62));
  const kspace::SincKernel kernel = kspace::build_sinc_kernel(cfg.sinc_taps, 2);

  TrainResult<T> result{std::move(g)};
  for (long step = 1; step <= cfg.g_pretrain_steps; ++step) {
    Tensor<T> batch = draw_batch<T>(images, cfg.batch, cfg.patch, batch_rng);
    ad::Var<T> loss = losses::loss_g(result.net, batch, kernel, cfg.loss);
    const double v = static_cast<double>(loss->value[0]);
    if (!std::isfinite(v)) {
      result.diverged = true;
      break;
    }
    ad::backward(loss);
    opt.step();
    StepLog log;
    log.step = step;
    log.g_loss = v;
    log.has_g = true;
    log.total = v;
    result.logs.push_back(log);
    result.steps_done = step;
    if (sink && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) sink(step, result.net);
  }
  if (sink) sink(result.steps_done, result.net);
  return result;
}

template <typename T>
TrainResult<T> train_usrgr(const std::vector<Tensor<float>>& images, model::Network<T>* g, const TrainConfig& cfg,
                           const CheckpointSink<T>& sink) {
  cfg.loss.validate();
  const bool with_fid = !cfg.no_fid;
  const bool with_sinc = !cfg.no_sinc;
  if (with_sinc && g == nullptr) throw ConfigError("train_usrgr: sinc constraint requires a pretrained g");
  if (cfg.patch % 4 != 0) throw ShapeError("train_usrgr: patch extent must divide by 4");

  model::Network<T> f(model::NetKind::sr, cfg.model_config(), derive_seed(cfg.seed, 0x51));
  AdamOptimizer<T> opt_f(f.params(), {static_cast<T>(cfg.lr)});
  AdamOptimizer<T> opt_g(with_sinc ? g->params() : std::vector<ad::Var<T>>{}, {static_cast<T>(cfg.lr)});
  Rng batch_rng(derive_seed(cfg.seed, 0x52));
  const kspace::SincKernel kernel = kspace::build_sinc_kernel(cfg.sinc_taps, 2);
  const long budget = cfg.step_budget(images.size());

  TrainResult<T> result{std::move(f)};
  for (long step = 1; step <= budget; ++step) {
    Tensor<T> batch = draw_batch<T>(images, cfg.batch, cfg.patch, batch_rng);
    losses::TotalLoss<T> tl = losses::loss_total(result.net, g, batch, kernel, cfg.loss, with_fid, with_sinc);
    const double total = static_cast<double>(tl.total->value[0]);
    if (!std::isfinite(total)) {
      result.diverged = true;
      break;
    }
    ad::backward(tl.total);
    opt_f.step();

    StepLog log;
    log.step = step;
    log.l_ss = tl.l_ss;
    log.l_f = tl.l_f;
    log.l_sinc = tl.l_sinc;
    log.total = total;
    log.has_fid = with_fid;
    log.has_sinc = with_sinc;

    if (with_sinc && cfg.g_finetune_per_step > 0) {
      // Eq. 3 over both the LR batch and the current prediction (detached).
      ad::Var<T> pred_hr = result.net.forward(ad::constant(batch));
      Tensor<T> pred_value = pred_hr->value;
      for (int k = 0; k < cfg.g_finetune_per_step; ++k) {
        ad::Var<T> gl = ad::scale(ad::add(losses::loss_g(*g, batch, kernel, cfg.loss),
                                          losses::loss_g(*g, pred_value, kernel, cfg.loss)),
                                  T(0.5));
        const double gv = static_cast<double>(gl->value[0]);
        if (!std::isfinite(gv)) {
          result.diverged = true;
          break;
        }
        ad::backward(gl);
        opt_g.step();
        log.g_loss = gv;
        log.has_g = true;
      }
      if (result.diverged) break;
    }

    result.logs.push_back(log);
    result.steps_done = step;
    if (sink && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) sink(step, result.net);
  }
  if (sink) sink(result.steps_done, result.net);
  return result;
}

template <typename T>
Tensor<T> infer(const model::Network<T>& net, const Tensor<T>& img) {
  if (img.rank() != 2) throw ShapeError("infer: input must be 2D [H,W]");
  const int h = img.dim(0), w = img.dim(1);
  if (h < 8 || w < 8) throw ShapeError("infer: extents must be >= 8");
  if (h % 2 || w % 2) throw ShapeError("infer: extents must be even");

  T peak = img.max();
  if (!(peak > T(0))) peak = T(1);
  Tensor<T> in({1, 1, h, w});
  for (std::size_t i = 0; i < img.size(); ++i) in[i] = img[i] / peak;
  ad::Var<T> out = net.forward(ad::constant(std::move(in)));
  const int oh = out->value.dim(2), ow = out->value.dim(3);
  Tensor<T> res({oh, ow});
  for (std::size_t i = 0; i < res.size(); ++i) res[i] = out->value[i] * peak;
  return res;
}

double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor<float>& a, const Tensor<float>& b, double dynamic_range) {
  if (!a.same_shape(b) || a.rank() != 2) throw ShapeError("ssim: inputs must be matching 2D");
  const int win = 11;
  const double sigma = 1.5;
  const int h = a.dim(0), w = a.dim(1);
  if (h < win || w < win) throw ShapeError("ssim: extents below window size 11");

  double taps[11];
  double tsum = 0.0;
  for (int i = 0; i < win; ++i) {
    taps[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (sigma * sigma));
    tsum += taps[i];
  }
  for (double& t : taps) t /= tsum;

  const double c1 = 0.01 * dynamic_range * 0.01 * dynamic_range;
  const double c2 = 0.03 * dynamic_range * 0.03 * dynamic_range;
  const int oh = h - win + 1, ow = w - win + 1;

  auto window_stats = [&](int y0, int x0) {
    double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
    for (int dy = 0; dy < win; ++dy)
      for (int dx = 0; dx < win; ++dx) {
        const double wgt = taps[dy] * taps[dx];
        const double va = a.at(y0 + dy, x0 + dx);
        const double vb = b.at(y0 + dy, x0 + dx);
        mx += wgt * va;
        my += wgt * vb;
        mxx += wgt * va * va;
        myy += wgt * vb * vb;
        mxy += wgt * va * vb;
      }
    const double sx = mxx - mx * mx, sy = myy - my * my, sxy = mxy - mx * my;
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2));
  };

  double sum = 0.0;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) sum += window_stats(y, x);
  return sum / (static_cast<double>(oh) * ow);
}

void EvalReport::finalize() {
  auto agg = [this](auto get, double& mean, double& stddev) {
    double s = 0.0;
    for (const auto& r : rows) s += get(r);
    mean = rows.empty() ? 0.0 : s / rows.size();
    double v = 0.0;
    for (const auto& r : rows) v += (get(r) - mean) * (get(r) - mean);
    stddev = rows.empty() ? 0.0 : std::sqrt(v / rows.size());
  };
  agg([](const EvalRow& r) { return r.psnr; }, mean_psnr, std_psnr);
  agg([](const EvalRow& r) { return r.ssim; }, mean_ssim, std_ssim);
  agg([](const EvalRow& r) { return r.fid_psnr; }, mean_fid_psnr, std_fid_psnr);
}

void EvalReport::write(const std::string& dir) const {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "report.tsv");
    if (!out) throw IoError("cannot write report.tsv under " + dir);
    out << "# method " << method << "\n# dataset " << dataset << "\n";
    out << "id\tpsnr\tssim\tfid_psnr\n";
    char buf[128];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s\t%.9g\t%.9g\t%.9g", r.id.c_str(), r.psnr, r.ssim, r.fid_psnr);
      out << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "mean\t%.9g\t%.9g\t%.9g", mean_psnr, mean_ssim, mean_fid_psnr);
    out << buf << "\n";
    std::snprintf(buf, sizeof(buf), "std\t%.9g\t%.9g\t%.9g", std_psnr, std_ssim, std_fid_psnr);
    out << buf << "\n";
  }
  nlohmann::json j;
  j["method"] = method;
  j["dataset"] = dataset;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"id", r.id}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"fid_psnr", r.fid_psnr}});
  j["aggregate"] = {{"psnr", {{"mean", mean_psnr}, {"std", std_psnr}}},
                    {"ssim", {{"mean", mean_ssim}, {"std", std_ssim}}},
                    {"fid_psnr", {{"mean", mean_fid_psnr}, {"std", std_fid_psnr}}}};
  std::ofstream out(fs::path(dir) / "report.json");
  if (!out) throw IoError("cannot write report.json under " + dir);
  out << j.dump(2) << "\n";
}

EvalReport evaluate_predictor(const PredictFn& predict, const data::DatasetManifest& manifest,
                              const std::string& method, const std::string& dataset) {
  EvalReport report;
  report.method = method;
  report.dataset = dataset;
  for (const auto& entry : manifest.entries) {
    const Tensor<float> hr = data::load_raster((fs::path(manifest.base_dir) / entry.path).string());
    data::EvalPair pair = data::make_eval_pair(hr, data::EvalMode::synthetic);
    if (!pair.reference) throw IoError("synthetic evaluation requires a reference for sample " + entry.id);
    const Tensor<float> pred = predict(pair.input);
    if (!pred.same_shape(*pair.reference))
      throw ShapeError("evaluate: prediction shape does not match reference for sample " + entry.id);
    EvalRow row;
    row.id = entry.id;
    row.psnr = psnr(pred, *pair.reference);
    row.ssim = ssim(pred, *pair.reference);
    row.fid_psnr = psnr(kspace::f_crop(pred, 2), pair.input);
    report.rows.push_back(row);
  }
  report.finalize();
  return report;
}

template <typename T>
EvalReport evaluate(const model::Network<T>& net, const data::DatasetManifest& manifest, data::EvalMode mode,
                    const std::string& method, const std::string& images_dir) {
  if (mode == data::EvalMode::real) {
    EvalReport report;
    report.method = method;
    report.dataset = manifest.split;
    if (!images_dir.empty()) fs::create_directories(images_dir);
    for (const auto& entry : manifest.entries) {
      const Tensor<float> img = data::load_raster((fs::path(manifest.base_dir) / entry.path).string());
      const Tensor<T> pred = infer(net, to_2d<T>(img));
      if (!images_dir.empty())
        data::save_raster((fs::path(images_dir) / ("pred_" + entry.id + ".usrt")).string(), from_T(pred));
      report.rows.push_back({entry.id, 0.0, 0.0, 0.0});
    }
    return report;
  }
  auto predict = [&net](const Tensor<float>& input) { return from_T(infer(net, to_2d<T>(input))); };
  EvalReport report = evaluate_predictor(predict, manifest, method, manifest.split);
  if (!images_dir.empty()) {
    fs::create_directories(images_dir);
    for (const auto& entry : manifest.entries) {
      const Tensor<float> hr = data::load_raster((fs::path(manifest.base_dir) / entry.path).string());
      const Tensor<float> pred = from_T(infer(net, to_2d<T>(kspace::f_crop(hr, 2))));
      data::save_raster((fs::path(images_dir) / ("pred_" + entry.id + ".usrt")).string(), pred);
    }
  }
  return report;
}

EvalReport run_baseline_bicubic(const data::DatasetManifest& manifest) {
  auto predict = [](const Tensor<float>& input) {
    return kspace::bicubic_resize(input, input.dim(0) * 2, input.dim(1) * 2);
  };
  return evaluate_predictor(predict, manifest, "bicubic", manifest.split);
}

template <typename T>
DegSrResult<T> run_deg_sr(const std::vector<Tensor<float>>& train_images, const data::DatasetManifest& test_manifest,
                          const TrainConfig& cfg) {
  cfg.loss.validate();
  // Stage 1: deGibbs net on (f_crop, bicubic) pairs.
  model::Network<T> dg(model::NetKind::g, cfg.model_config(), derive_seed(cfg.seed, 0x71));
  {
    AdamOptimizer<T> opt(dg.params(), {static_cast<T>(cfg.lr)});
    Rng batch_rng(derive_seed(cfg.seed, 0x72));
    for (long step = 1; step <= cfg.g_pretrain_steps; ++step) {
      Tensor<T> batch = draw_batch<T>(train_images, cfg.batch, cfg.patch, batch_rng);
      const int b = batch.dim(0), p = batch.dim(2);
      Tensor<T> target({b, 1, p / 2, p / 2});
      for (int bi = 0; bi < b; ++bi) {
        Tensor<T> slice({p, p});
        std::memcpy(slice.data(), &batch.at(bi, 0, 0, 0), sizeof(T) * slice.size());
        Tensor<T> down = kspace::bicubic_resize(slice, p / 2, p / 2);
        std::memcpy(&target.at(bi, 0, 0, 0), down.data(), sizeof(T) * down.size());
      }
      Tensor<T> input({b, 1, p / 2, p / 2});
      for (int bi = 0; bi < b; ++bi) {
        Tensor<T> slice({p, p});
        std::memcpy(slice.data(), &batch.at(bi, 0, 0, 0), sizeof(T) * slice.size());
        Tensor<T> down = kspace::f_crop(slice, 2);
        std::memcpy(&input.at(bi, 0, 0, 0), down.data(), sizeof(T) * down.size());
      }
      ad::Var<T> loss = losses::l_d(dg.forward(ad::constant(input)), ad::constant(target), cfg.loss);
      if (!std::isfinite(static_cast<double>(loss->value[0]))) throw NumericError("deG stage diverged");
      ad::backward(loss);
      opt.step();
    }
  }

  // Stage 2: SR net with the scale-consistency term only, on deGibbs'd images.
  std::vector<Tensor<float>> degibbsed;
  degibbsed.reserve(train_images.size());
  for (const auto& img : train_images) degibbsed.push_back(from_T(infer(dg, to_2d<T>(img))));
  TrainConfig sr_cfg = cfg;
  sr_cfg.no_fid = true;
  sr_cfg.no_sinc = true;
  TrainResult<T> sr = train_usrgr<T>(degibbsed, nullptr, sr_cfg);
  if (sr.diverged) throw NumericError("deG+SR SR stage diverged");

  DegSrResult<T> result{{}, std::move(dg), std::move(sr.net)};
  auto predict = [&result](const Tensor<float>& input) {
    const Tensor<T> cleaned = infer(result.degibbs, to_2d<T>(input));
    return from_T(infer(result.sr, cleaned));
  };
  result.report = evaluate_predictor(predict, test_manifest, "deG+SR", test_manifest.split);
  return result;
}

#define USRGR_TRAIN_INSTANTIATE(T)                                                                            \
  template TrainResult<T> pretrain_g<T>(const std::vector<Tensor<float>>&, const TrainConfig&,                \
                                        const CheckpointSink<T>&);                                            \
  template TrainResult<T> train_usrgr<T>(const std::vector<Tensor<float>>&, model::Network<T>*,               \
                                         const TrainConfig&, const CheckpointSink<T>&);                       \
  template Tensor<T> infer<T>(const model::Network<T>&, const Tensor<T>&);                                    \
  template EvalReport evaluate<T>(const model::Network<T>&, const data::DatasetManifest&, data::EvalMode,     \
                                  const std::string&, const std::string&);                                    \
  template DegSrResult<T> run_deg_sr<T>(const std::vector<Tensor<float>>&, const data::DatasetManifest&,      \
                                        const TrainConfig&);

USRGR_TRAIN_INSTANTIATE(float)
USRGR_TRAIN_INSTANTIATE(double)

}  // namespace train
}  // namespace usrgr
