// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit status 0 iff all pass.
//
//   acceptance_test [--quick] [--jobs N] [--keep]
//
// --quick shrinks the training criteria (5-7) to a plumbing smoke test; the
// default configuration is the real one. Training runs execute on a small
// worker pool (default 2) with per-thread CPU accounting.

#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "usrgr/dataset.hpp"
#include "usrgr/gradcheck.hpp"
#include "usrgr/kspace.hpp"
#include "usrgr/losses.hpp"
#include "usrgr/phantom.hpp"
#include "usrgr/raster.hpp"
#include "usrgr/rng.hpp"
#include "usrgr/train.hpp"

using namespace usrgr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
  int id;
  bool pass = false;
  std::string detail;
};

std::vector<Criterion> g_results;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  g_results.push_back({id, pass, detail});
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---- criterion 1: Gibbs overshoot ----

void criterion1() {
  const auto t0 = Clock::now();
  Tensor<float> step({64, 64});
  for (int y = 0; y < 64; ++y)
    for (int x = 32; x < 64; ++x) step.at(y, x) = 1.0f;
  Tensor<float> out = kspace::f_crop(step, 2);

  std::vector<double> row(32);
  for (int x = 0; x < 32; ++x) row[static_cast<std::size_t>(x)] = out.at(16, x);
  const double impl = oracles::row_series_max(row, 64) - 1.0;

  std::vector<double> orig(64);
  for (int x = 32; x < 64; ++x) orig[static_cast<std::size_t>(x)] = 1.0;
  const double oracle = oracles::truncated_series_max(orig, 32) - 1.0;

  const double runtime = seconds_since(t0);
  const bool pass = std::abs(impl - oracle) < 1e-4 && impl >= 0.075 && impl <= 0.105 && runtime < 1.0;
  report(1, pass,
         fmt("step-edge overshoot %.3f%% (oracle %.3f%%, band [7.5%%, 10.5%%]), %.2fs", 100 * impl, 100 * oracle,
             runtime));
}

// ---- criterion 2: sinc/f-crop equivalence ----

void criterion2() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  kspace::SincKernel full = kspace::build_sinc_kernel(31, 2, 32);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> img({32, 32});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(0, 1);
    Tensor<double> a = kspace::sinc_downsample(img, full, 2);
    Tensor<double> b = kspace::f_crop(img, 2);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }

  Tensor<double> img({64, 64});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(0, 1);
  Tensor<double> ref = kspace::f_crop(img, 2);
  bool monotone = true;
  double prev = 1e300;
  std::string residuals;
  for (int taps : {7, 15, 31, 63}) {
    Tensor<double> s = kspace::sinc_downsample(img, kspace::build_sinc_kernel(taps, 2, 64), 2);
    double r = 0;
    for (std::size_t i = 0; i < s.size(); ++i) r = std::max(r, std::abs(s[i] - ref[i]));
    monotone = monotone && r < prev;
    prev = r;
    residuals += fmt("%s%.2e", residuals.empty() ? "" : " > ", r);
  }

  const double runtime = seconds_since(t0);
  const bool pass = worst <= 1e-4 && monotone && runtime < 10.0;
  report(2, pass, fmt("full-kernel residual %.2e (<=1e-4), taps residuals %s, %.2fs", worst, residuals.c_str(), runtime));
}

// ---- criterion 3: gradient suite ----

void criterion3() {
  const auto t0 = Clock::now();
  bool all = true;
  double worst = 0;
  std::string failing;
  for (const auto& r : gradcheck::run_all()) {
    worst = std::max(worst, r.max_rel_err);
    if (!r.pass) {
      all = false;
      failing += " " + r.name;
    }
  }
  const double runtime = seconds_since(t0);
  const bool pass = all && runtime < 120.0;
  report(3, pass, fmt("finite-difference suite worst rel err %.2e%s, %.1fs", worst,
                      failing.empty() ? "" : (" FAILING:" + failing).c_str(), runtime));
}

// ---- criterion 4: hinge semantics ----

void criterion4() {
  losses::LossConfig cfg;
  model::ModelConfig mc;
  mc.channels = 4;
  mc.num_blocks = 1;
  model::Network<double> f(model::NetKind::sr, mc, 4);
  Rng rng(4);
  for (auto& p : f.params())
    for (std::size_t i = 0; i < p->value.size(); ++i)
      if (p->value[i] == 0.0) p->value[i] = 0.05 * rng.uniform(-1, 1);

  Tensor<double> batch({2, 1, 16, 16});
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = rng.uniform(0.2, 1.0);
  kspace::SincKernel kernel = kspace::build_sinc_kernel(7, 2);

  ad::Var<double> pred = kspace::sinc_downsample_op(f.forward(ad::constant(batch)), kernel);
  ad::Var<double> acc;
  for (int b = 0; b < 2; ++b) {
    ad::Var<double> term = ad::max_with(
        losses::l_d(ad::select_item(pred, b), ad::select_item(ad::detach(pred), b), cfg), cfg.hinge_floor);
    acc = b == 0 ? term : ad::add(acc, term);
  }
  ad::Var<double> loss = ad::scale(acc, 0.5);
  bool value_exact = loss->value[0] == 0.001;
  ad::backward(loss);
  bool grad_zero = true;
  for (auto& p : f.params())
    for (std::size_t i = 0; i < p->grad.size(); ++i) grad_zero = grad_zero && p->grad[i] == 0.0;

  report(4, value_exact && grad_zero,
         fmt("forced inner distance: term %.6g (= a), all theta-gradients exactly zero: %s", loss->value[0],
             grad_zero ? "yes" : "NO"));
}

// ---- criteria 5-7: desk-scale training runs ----

struct RunOutcome {
  std::string variant;
  std::uint64_t seed = 0;
  double mean_psnr = 0;
  double mean_fid_psnr = 0;
  double cpu_seconds = 0;
  bool accounting_ok = true;
  bool ok = false;
  std::string error;
};

struct TrainingPlan {
  fs::path data_dir;
  long steps = 2000;
  long g_pretrain = 1000;
  int channels = 16, blocks = 4, patch = 64, batch = 4;
};

train::TrainConfig make_config(const TrainingPlan& plan, const std::string& variant, std::uint64_t seed) {
  train::TrainConfig cfg;
  cfg.lr = 1e-4;
  cfg.batch = plan.batch;
  cfg.steps = plan.steps;
  cfg.patch = plan.patch;
  cfg.seed = seed;
  cfg.g_pretrain_steps = plan.g_pretrain;
  cfg.channels = plan.channels;
  cfg.blocks = plan.blocks;
  cfg.sinc_taps = 31;
  cfg.checkpoint_every = 0;
  if (variant == "nofid") cfg.no_fid = true;
  if (variant == "nosinc") cfg.no_sinc = true;
  if (variant == "plain") cfg.plain_blocks = true;
  return cfg;
}

bool accounting_balanced(const std::vector<train::StepLog>& logs, const losses::LossConfig& cfg) {
  for (const auto& l : logs) {
    const double lhs = l.l_ss + (l.has_fid ? cfg.beta * l.l_f : 0.0) + (l.has_sinc ? cfg.gamma * l.l_sinc : 0.0);
    if (std::abs(lhs - l.total) > 1e-6) return false;
  }
  return true;
}

RunOutcome run_variant(const TrainingPlan& plan, const data::DatasetManifest& test,
                       const std::vector<Tensor<float>>& train_images, const std::string& variant,
                       std::uint64_t seed) {
  RunOutcome out;
  out.variant = variant;
  out.seed = seed;
  const double cpu0 = thread_cpu_seconds();
  try {
    train::TrainConfig cfg = make_config(plan, variant, seed);
    train::EvalReport report;
    if (variant == "degsr") {
      report = train::run_deg_sr<float>(train_images, test, cfg).report;
    } else {
      std::optional<model::Network<float>> g;
      if (!cfg.no_sinc) {
        train::TrainResult<float> pg = train::pretrain_g<float>(train_images, cfg);
        if (pg.diverged) throw NumericError("g pretrain diverged");
        g = std::move(pg.net);
      }
      train::TrainResult<float> tr = train::train_usrgr<float>(train_images, g ? &*g : nullptr, cfg);
      if (tr.diverged) throw NumericError("training diverged");
      out.accounting_ok = accounting_balanced(tr.logs, cfg.loss);
      report = train::evaluate(tr.net, test, data::EvalMode::synthetic, variant);
    }
    out.mean_psnr = report.mean_psnr;
    out.mean_fid_psnr = report.mean_fid_psnr;
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.cpu_seconds = thread_cpu_seconds() - cpu0;
  return out;
}

std::map<std::string, std::vector<RunOutcome>> run_training_grid(const TrainingPlan& plan, int jobs) {
  const data::DatasetManifest test = data::load_manifest((plan.data_dir / "manifest_test.txt").string());
  const auto train_images = data::load_images(data::load_manifest((plan.data_dir / "manifest_train.txt").string()));

  struct Task {
    std::string variant;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const std::string variant : {"full", "nofid", "nosinc", "plain", "degsr"})
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) tasks.push_back({variant, seed});

  std::map<std::string, std::vector<RunOutcome>> outcomes;
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      RunOutcome out = run_variant(plan, test, train_images, tasks[i].variant, tasks[i].seed);
      std::lock_guard<std::mutex> lock(mu);
      std::printf("  [run] %-7s seed %" PRIu64 ": %s PSNR %.3f dB, fidelity-PSNR %.3f dB (%.0f CPU-s)%s%s\n",
                  out.variant.c_str(), out.seed, out.ok ? "mean" : "FAILED", out.mean_psnr, out.mean_fid_psnr,
                  out.cpu_seconds, out.error.empty() ? "" : " error: ", out.error.c_str());
      std::fflush(stdout);
      outcomes[out.variant].push_back(out);
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return outcomes;
}

void criteria567(const TrainingPlan& plan, int jobs, bool quick, bool* accounting_ok_out) {
  std::printf("running the desk-scale training grid (5 variants x 3 seeds)%s...\n", quick ? " [QUICK]" : "");
  std::fflush(stdout);
  auto outcomes = run_training_grid(plan, jobs);

  const data::DatasetManifest test = data::load_manifest((plan.data_dir / "manifest_test.txt").string());
  const train::EvalReport bicubic = train::run_baseline_bicubic(test);
  std::printf("  [run] bicubic: mean PSNR %.3f dB\n", bicubic.mean_psnr);

  auto medians = [&](const std::string& variant, auto get) {
    std::vector<double> v;
    for (const auto& o : outcomes[variant])
      if (o.ok) v.push_back(get(o));
    return v.size() == 3 ? median3(v) : std::nan("");
  };
  bool all_ok = true, accounting = true;
  double training_cpu_full = 0;
  for (const auto& [variant, runs] : outcomes)
    for (const auto& o : runs) {
      all_ok = all_ok && o.ok;
      accounting = accounting && o.accounting_ok;
      if (variant == "full") training_cpu_full += o.cpu_seconds;
    }
  *accounting_ok_out = accounting;

  const double full_psnr = medians("full", [](const RunOutcome& o) { return o.mean_psnr; });
  const double nofid_psnr = medians("nofid", [](const RunOutcome& o) { return o.mean_psnr; });
  const double nosinc_psnr = medians("nosinc", [](const RunOutcome& o) { return o.mean_psnr; });
  const double plain_psnr = medians("plain", [](const RunOutcome& o) { return o.mean_psnr; });
  const double degsr_psnr = medians("degsr", [](const RunOutcome& o) { return o.mean_psnr; });
  const double full_fid = medians("full", [](const RunOutcome& o) { return o.mean_fid_psnr; });
  const double nofid_fid = medians("nofid", [](const RunOutcome& o) { return o.mean_fid_psnr; });

  // criterion 5
  const double margin = full_psnr - bicubic.mean_psnr;
  const double cpu_minutes = training_cpu_full / 60.0;
  const bool c5_runtime = cpu_minutes < 30.0;
  const bool c5 = all_ok && margin >= 0.5 && c5_runtime;
  report(5, c5,
         fmt("uSRGR median %.3f dB vs bicubic %.3f dB (margin %.3f, need >= 0.5); 3-seed training CPU %.1f min "
             "(budget 30)",
             full_psnr, bicubic.mean_psnr, margin, cpu_minutes));

  // criterion 6
  const double fid_gap = full_fid - nofid_fid;
  report(6, all_ok && fid_gap >= 1.0,
         fmt("fidelity-PSNR median %.3f dB with fid loss vs %.3f dB without (gap %.3f, need >= 1)", full_fid,
             nofid_fid, fid_gap));

  // criterion 7
  const bool c7 = all_ok && full_psnr >= nofid_psnr && full_psnr >= nosinc_psnr &&
                  full_psnr >= plain_psnr - 0.1 && full_psnr >= degsr_psnr;
  report(7, c7,
         fmt("medians: full %.3f >= nofid %.3f, nosinc %.3f, plain %.3f (-0.1 tol), degsr %.3f", full_psnr,
             nofid_psnr, nosinc_psnr, plain_psnr, degsr_psnr));
}

// ---- criterion 8: determinism and formats ----

bool same_file_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return sa == sb;
}

bool same_tree_bytes(const fs::path& a, const fs::path& b, std::string* why) {
  std::vector<fs::path> rel;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
  std::sort(rel.begin(), rel.end());
  for (const auto& r : rel) {
    if (!fs::exists(b / r)) {
      *why = "missing " + r.string();
      return false;
    }
    if (!same_file_bytes(a / r, b / r)) {
      *why = "differs " + r.string();
      return false;
    }
  }
  return true;
}

void criterion8(const fs::path& work, const fs::path& cli, bool accounting_ok) {
  std::string detail;
  bool pass = true;

  // raster round trip
  Rng rng(8);
  Tensor<float> t({24, 24});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-1, 1));
  const fs::path rp = work / "c8.usrt";
  data::save_raster(rp.string(), t);
  Tensor<float> back = data::load_raster(rp.string());
  bool raster_ok = t.same_shape(back);
  for (std::size_t i = 0; raster_ok && i < t.size(); ++i) raster_ok = t[i] == back[i];
  pass = pass && raster_ok;
  detail += fmt("raster round trip %s", raster_ok ? "bit-exact" : "MISMATCH");

  // checkpoint round trip
  model::ModelConfig mc;
  mc.channels = 4;
  mc.num_blocks = 1;
  model::Network<float> f(model::NetKind::sr, mc, 5);
  const fs::path c1 = work / "c8_a.usrm", c2 = work / "c8_b.usrm";
  model::save_checkpoint(c1.string(), f);
  model::save_checkpoint(c2.string(), model::load_checkpoint<float>(c1.string()));
  const bool ckpt_ok = same_file_bytes(c1, c2);
  pass = pass && ckpt_ok;
  detail += fmt("; checkpoint %s", ckpt_ok ? "bit-exact" : "MISMATCH");

  // fixed-seed float64 CLI runs byte-identical
  bool cli_ok = false;
  if (fs::exists(cli)) {
    const fs::path data = work / "c8_data";
    const std::string common =
        " --set dtype=float64 --set channels=4 --set blocks=1 --set patch=32 --set batch=2 --set steps=5"
        " --set g_pretrain_steps=5 --set sinc_taps=15 --set checkpoint_every=3 --set seed=5";
    std::string cmd = cli.string() + " phantom --out " + data.string() + " --count 4 --size 32 --seed 5 > /dev/null";
    int rc = std::system(cmd.c_str());
    cli_ok = rc == 0;
    for (const char* run : {"run_a", "run_b"}) {
      cmd = cli.string() + " pretrain-g --data " + data.string() + " --out " + (work / run / "g").string() + common +
            " > /dev/null";
      cli_ok = cli_ok && std::system(cmd.c_str()) == 0;
      cmd = cli.string() + " train --data " + data.string() + " --g " + (work / run / "g/ckpt/g_final.usrm").string() +
            " --out " + (work / run / "f").string() + common + " > /dev/null";
      cli_ok = cli_ok && std::system(cmd.c_str()) == 0;
    }
    std::string why;
    if (cli_ok && !same_tree_bytes(work / "run_a", work / "run_b", &why)) {
      cli_ok = false;
      detail += " (" + why + ")";
    }
  }
  pass = pass && cli_ok;
  detail += fmt("; float64 reruns %s", cli_ok ? "byte-identical" : "MISMATCH");

  // loss accounting from the criterion-5/6/7 runs
  pass = pass && accounting_ok;
  detail += fmt("; per-step loss accounting %s", accounting_ok ? "balanced to 1e-6" : "UNBALANCED");

  report(8, pass, detail);
}

// ---- criterion 9: metric sanity ----

void criterion9() {
  bool pass = true;
  std::string detail;

  Tensor<float> x({32, 32});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.4f;
  Tensor<float> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += 0.1f;
  const double p = train::psnr(x, y);
  pass = pass && p == 20.0;
  detail += fmt("PSNR(x,x+0.1)=%.10g", p);

  Rng rng(9);
  Tensor<double> mv({1, 1, 64, 64});
  for (std::size_t i = 0; i < mv.size(); ++i) mv[i] = rng.uniform(0, 1);
  losses::LossConfig cfg;
  const double ms = losses::ms_ssim(ad::constant(mv), ad::constant(mv), cfg)->value[0];
  pass = pass && ms == 1.0;
  detail += fmt("; MS-SSIM(x,x)=%.10g", ms);

  double worst_psnr = 0, worst_ssim = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng prng(derive_seed(909, s));
    data::PhantomSpec spec = data::random_phantom_spec(64, prng);
    Tensor<float> hr = data::normalize(data::gen_phantom(spec)).first;
    Tensor<float> input = kspace::f_crop(hr, 2);
    Tensor<float> pred = kspace::bicubic_resize(input, 64, 64);
    worst_psnr = std::max(worst_psnr, std::abs(train::psnr(pred, hr) - oracles::ref_psnr(pred, hr)));
    worst_ssim = std::max(worst_ssim, std::abs(train::ssim(pred, hr) - oracles::ref_ssim(pred, hr)));
  }
  pass = pass && worst_psnr <= 0.01 && worst_ssim <= 0.001;
  detail += fmt("; oracle deltas: %.2e dB (<=0.01), %.2e SSIM (<=0.001)", worst_psnr, worst_ssim);

  report(9, pass, detail);
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false, keep = false;
  int jobs = 2;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--quick") == 0) quick = true;
    if (std::strcmp(argv[i], "--keep") == 0) keep = true;
    if (std::strcmp(argv[i], "--jobs") == 0 && i + 1 < argc) jobs = std::atoi(argv[++i]);
  }

  const fs::path work = fs::temp_directory_path() / (quick ? "usrgr_acceptance_quick" : "usrgr_acceptance");
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path cli = fs::path(argv[0]).parent_path() / "usrgr";

  criterion1();
  criterion2();
  criterion3();
  criterion4();

  TrainingPlan plan;
  plan.data_dir = work / "data";
  if (quick) {
    plan.steps = 40;
    plan.g_pretrain = 20;
  }
  data::SplitCounts counts{quick ? 20 : 200, 20, 20};
  data::generate_phantom_dataset(plan.data_dir.string(), counts, 64, 97);

  bool accounting_ok = true;
  criteria567(plan, jobs, quick, &accounting_ok);
  criterion8(work, cli, accounting_ok);
  criterion9();

  if (!keep) fs::remove_all(work);

  int failed = 0;
  for (const auto& c : g_results)
    if (!c.pass) ++failed;
  std::printf("%d/%d criteria passed\n", static_cast<int>(g_results.size()) - failed,
              static_cast<int>(g_results.size()));
  return failed > 0 ? 1 : 0;
}
