#pragma once

#include <functional>
#include <string>
#include <vector>

#include "usrgr/adam.hpp"
#include "usrgr/dataset.hpp"
#include "usrgr/losses.hpp"
#include "usrgr/model.hpp"

namespace usrgr {
namespace train {

struct TrainConfig {
  double lr = 1e-4;
  int batch = 4;
  long steps = 2000;  // theta steps; when 0, derived from epochs
  long epochs = 0;
  int patch = 64;
  std::uint64_t seed = 1;
  bool no_fid = false;
  bool no_sinc = false;
  bool plain_blocks = false;
  long g_pretrain_steps = 1000;
  int g_finetune_per_step = 1;
  long checkpoint_every = 500;
  int channels = 16;  // N
  int blocks = 4;     // B
  int sinc_taps = 31;
  losses::LossConfig loss;

  long step_budget(std::size_t dataset_size) const;
  model::ModelConfig model_config() const;
};

struct StepLog {
  long step = 0;
  double l_ss = 0.0;
  double l_f = 0.0;
  double l_sinc = 0.0;
  double total = 0.0;
  double g_loss = 0.0;
  bool has_fid = false;
  bool has_sinc = false;
  bool has_g = false;
};

/// One structured record per step; absent terms print "-".
void write_step_logs(const std::string& path, const std::vector<StepLog>& logs);

template <typename T>
struct TrainResult {
  model::Network<T> net;
  std::vector<StepLog> logs;
  bool diverged = false;
  long steps_done = 0;
};

template <typename T>
using CheckpointSink = std::function<void(long step, const model::Network<T>& net)>;

/// Minimizes the g objective with Adam over g_pretrain_steps.
template <typename T>
TrainResult<T> pretrain_g(const std::vector<Tensor<float>>& images, const TrainConfig& cfg,
                          const CheckpointSink<T>& sink = nullptr);

/// The joint loop: per step one Adam update of f under the total loss (terms
/// dropped per ablation flags), then g_finetune_per_step Adam updates of g on
/// its own objective over both the LR batch and the current prediction.
/// NaN loss aborts, retaining the last finite parameters.
template <typename T>
TrainResult<T> train_usrgr(const std::vector<Tensor<float>>& images, model::Network<T>* g, const TrainConfig& cfg,
                           const CheckpointSink<T>& sink = nullptr);

/// Whole-image forward pass on the max-normalized input, denormalized after.
/// SR nets return 2x extents, g nets same extents.
template <typename T>
Tensor<T> infer(const model::Network<T>& net, const Tensor<T>& img);

/// 10*log10(peak^2/MSE), capped at 99 dB.
double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0);

/// Single-scale SSIM, Gaussian 11/1.5 valid windows, K1=0.01 K2=0.03.
double ssim(const Tensor<float>& a, const Tensor<float>& b, double dynamic_range = 1.0);

struct EvalRow {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double fid_psnr = 0.0;
};

struct EvalReport {
  std::string method;
  std::string dataset;
  std::vector<EvalRow> rows;
  double mean_psnr = 0, std_psnr = 0;
  double mean_ssim = 0, std_ssim = 0;
  double mean_fid_psnr = 0, std_fid_psnr = 0;

  void finalize();
  /// report.tsv (delimiter-separated) + report.json under dir.
  void write(const std::string& dir) const;
};

using PredictFn = std::function<Tensor<float>(const Tensor<float>& input)>;

/// Synthetic-mode scoring of an arbitrary 2x predictor against the manifest:
/// PSNR/SSIM of prediction vs reference plus fidelity-PSNR of
/// f_crop(prediction) vs input.
EvalReport evaluate_predictor(const PredictFn& predict, const data::DatasetManifest& manifest,
                              const std::string& method, const std::string& dataset);

/// mode synthetic: metrics report. mode real: no metrics; predictions are
/// written to images_dir when given.
template <typename T>
EvalReport evaluate(const model::Network<T>& net, const data::DatasetManifest& manifest, data::EvalMode mode,
                    const std::string& method, const std::string& images_dir = "");

EvalReport run_baseline_bicubic(const data::DatasetManifest& manifest);

template <typename T>
struct DegSrResult {
  EvalReport report;
  model::Network<T> degibbs;
  model::Network<T> sr;
};

/// Two-stage pipeline: a g-style net trained on (f_crop, bicubic) pairs for
/// deGibbs, then an SR net trained with the scale-consistency term alone on
/// the deGibbs'd images, chained at evaluation time.
template <typename T>
DegSrResult<T> run_deg_sr(const std::vector<Tensor<float>>& train_images, const data::DatasetManifest& test_manifest,
                          const TrainConfig& cfg);

}  // namespace train
}  // namespace usrgr
