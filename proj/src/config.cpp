#include "usrgr/config.hpp"

#include <cstdio>
#include <fstream>

namespace usrgr {
namespace config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long r = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  }
}

}  // namespace

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "dtype") {
    if (value != "float32" && value != "float64")
      throw ConfigError("config key 'dtype': expected float32 or float64, got '" + value + "'");
    dtype = value;
  } else if (key == "seed") {
    train.seed = static_cast<std::uint64_t>(parse_long(key, value));
  } else if (key == "lr") {
    train.lr = parse_double(key, value);
  } else if (key == "batch") {
    train.batch = static_cast<int>(parse_long(key, value));
  } else if (key == "steps") {
    train.steps = parse_long(key, value);
  } else if (key == "epochs") {
    train.epochs = parse_long(key, value);
  } else if (key == "patch") {
    train.patch = static_cast<int>(parse_long(key, value));
  } else if (key == "channels") {
    train.channels = static_cast<int>(parse_long(key, value));
  } else if (key == "blocks") {
    train.blocks = static_cast<int>(parse_long(key, value));
  } else if (key == "plain_blocks") {
    train.plain_blocks = parse_bool(key, value);
  } else if (key == "no_fid") {
    train.no_fid = parse_bool(key, value);
  } else if (key == "no_sinc") {
    train.no_sinc = parse_bool(key, value);
  } else if (key == "g_pretrain_steps") {
    train.g_pretrain_steps = parse_long(key, value);
  } else if (key == "g_finetune_per_step") {
    train.g_finetune_per_step = static_cast<int>(parse_long(key, value));
  } else if (key == "checkpoint_every") {
    train.checkpoint_every = parse_long(key, value);
  } else if (key == "sinc_taps") {
    train.sinc_taps = static_cast<int>(parse_long(key, value));
    degrade.sinc_taps = train.sinc_taps;
  } else if (key == "alpha") {
    train.loss.alpha = parse_double(key, value);
  } else if (key == "beta") {
    train.loss.beta = parse_double(key, value);
  } else if (key == "gamma") {
    train.loss.gamma = parse_double(key, value);
  } else if (key == "hinge_floor") {
    train.loss.hinge_floor = parse_double(key, value);
  } else if (key == "msssim_scales") {
    train.loss.msssim_scales = static_cast<int>(parse_long(key, value));
  } else if (key == "ssim_window") {
    train.loss.ssim_window = static_cast<int>(parse_long(key, value));
  } else if (key == "ssim_sigma") {
    train.loss.ssim_sigma = parse_double(key, value);
  } else if (key == "dynamic_range") {
    train.loss.dynamic_range = parse_double(key, value);
  } else if (key == "noise_sigma") {
    degrade.noise_sigma = parse_double(key, value);
  } else if (key == "factor") {
    degrade.factor = static_cast<int>(parse_long(key, value));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::echo(std::ostream& out) const {
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  out << "dtype = " << dtype << "\n";
  out << "seed = " << train.seed << "\n";
  out << "lr = " << num(train.lr) << "\n";
  out << "batch = " << train.batch << "\n";
  out << "steps = " << train.steps << "\n";
  out << "epochs = " << train.epochs << "\n";
  out << "patch = " << train.patch << "\n";
  out << "channels = " << train.channels << "\n";
  out << "blocks = " << train.blocks << "\n";
  out << "plain_blocks = " << (train.plain_blocks ? "true" : "false") << "\n";
  out << "no_fid = " << (train.no_fid ? "true" : "false") << "\n";
  out << "no_sinc = " << (train.no_sinc ? "true" : "false") << "\n";
  out << "g_pretrain_steps = " << train.g_pretrain_steps << "\n";
  out << "g_finetune_per_step = " << train.g_finetune_per_step << "\n";
  out << "checkpoint_every = " << train.checkpoint_every << "\n";
  out << "sinc_taps = " << train.sinc_taps << "\n";
  out << "alpha = " << num(train.loss.alpha) << "\n";
  out << "beta = " << num(train.loss.beta) << "\n";
  out << "gamma = " << num(train.loss.gamma) << "\n";
  out << "hinge_floor = " << num(train.loss.hinge_floor) << "\n";
  out << "msssim_scales = " << train.loss.msssim_scales << "\n";
  out << "ssim_window = " << train.loss.ssim_window << "\n";
  out << "ssim_sigma = " << num(train.loss.ssim_sigma) << "\n";
  out << "dynamic_range = " << num(train.loss.dynamic_range) << "\n";
  out << "noise_sigma = " << num(degrade.noise_sigma) << "\n";
  out << "factor = " << degrade.factor << "\n";
}

}  // namespace config
}  // namespace usrgr
