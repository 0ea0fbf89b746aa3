#include "keysched/trace.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "keysched/errors.hpp"
#include "keysched/rng.hpp"

namespace keysched {

namespace {

constexpr uint64_t kFeatureStream = 0xfea70000u;

double clampd(double x, double lo, double hi) {
  return std::min(hi, std::max(lo, x));
}

// %.17g round-trips any double exactly.
std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid config: " + field + " " + why);
  };
  if (n_frames < 2) fail("n_frames", "must be >= 2");
  if (!(base_quality_mean > quality_floor) || base_quality_mean > 1.0)
    fail("base_quality_mean", "must lie in (quality_floor, 1]");
  if (base_quality_jitter < 0) fail("base_quality_jitter", "must be >= 0");
  if (motion_mean < 0) fail("motion_mean", "must be >= 0");
  if (motion_jitter < 0) fail("motion_jitter", "must be >= 0");
  if (scene_change_rate < 0) fail("scene_change_rate", "must be >= 0");
  if (scene_change_rate > 100) fail("scene_change_rate", "must be <= 100");
  if (scene_change_motion_spike < 5)
    fail("scene_change_motion_spike", "must be >= 5");
  if (alpha < 0) fail("alpha", "must be >= 0");
  if (beta < 0) fail("beta", "must be >= 0");
  if (quality_floor < 0 || quality_floor >= 0.98)
    fail("quality_floor", "must lie in [0, 0.98)");
  if (feature_dim < 3) fail("feature_dim", "must be >= 3");
  if (feature_noise_sigma < 0) fail("feature_noise_sigma", "must be >= 0");
  if (!(agreement_kappa > 0)) fail("agreement_kappa", "must be > 0");
}

Trace::Trace(std::vector<double> key_quality, std::vector<double> motion,
             std::vector<int> scene_changes, double alpha, double beta,
             double quality_floor, int feature_dim, double feature_noise_sigma,
             double agreement_kappa, uint64_t seed)
    : key_quality_(std::move(key_quality)),
      motion_(std::move(motion)),
      scene_changes_(std::move(scene_changes)),
      alpha_(alpha),
      beta_(beta),
      quality_floor_(quality_floor),
      feature_dim_(feature_dim),
      feature_noise_sigma_(feature_noise_sigma),
      agreement_kappa_(agreement_kappa),
      seed_(seed) {
  if (key_quality_.empty() || key_quality_.size() != motion_.size())
    throw ConfigError("trace: key_quality and motion must match and be non-empty");
  if (motion_[0] != 0.0) throw ConfigError("trace: motion[0] must be 0");
  for (double q : key_quality_) {
    if (!(q >= 0.0 && q <= 1.0))
      throw ConfigError("trace: key_quality entries must lie in [0,1]");
    if (!(q > quality_floor_))
      throw ConfigError("trace: quality_floor must stay below every key_quality");
  }
  for (double m : motion_)
    if (!(m >= 0.0)) throw ConfigError("trace: motion entries must be >= 0");
  if (alpha_ < 0 || beta_ < 0) throw ConfigError("trace: decay must be >= 0");
  if (quality_floor_ < 0 || quality_floor_ >= 1)
    throw ConfigError("trace: quality_floor must lie in [0,1)");
  if (feature_dim_ < 3) throw ConfigError("trace: feature_dim must be >= 3");
  if (feature_noise_sigma_ < 0)
    throw ConfigError("trace: feature_noise_sigma must be >= 0");
  if (!(agreement_kappa_ > 0))
    throw ConfigError("trace: agreement_kappa must be > 0");
  for (int sc : scene_changes_)
    if (sc < 0 || sc >= n_frames())
      throw ConfigError("trace: scene_change index out of range");

  motion_prefix_.resize(motion_.size());
  double acc = 0.0;
  for (size_t i = 0; i < motion_.size(); ++i) {
    acc += motion_[i];
    motion_prefix_[i] = acc;
  }
}

void Trace::check_frame(int i) const {
  if (i < 0 || i >= n_frames())
    throw BoundsError("frame index " + std::to_string(i) + " outside [0, " +
                      std::to_string(n_frames()) + ")");
}

void Trace::check_pair(int i, int k) const {
  check_frame(i);
  check_frame(k);
  if (k > i)
    throw OrderingError("key frame k=" + std::to_string(k) +
                        " must not follow frame i=" + std::to_string(i));
}

double Trace::key_quality(int i) const {
  check_frame(i);
  return key_quality_[i];
}

double Trace::motion(int i) const {
  check_frame(i);
  return motion_[i];
}

double Trace::accumulated_motion(int k, int i) const {
  check_pair(i, k);
  return motion_prefix_[i] - motion_prefix_[k];
}

double Trace::prop_quality(int i, int k) const {
  check_pair(i, k);
  const double m = motion_prefix_[i] - motion_prefix_[k];
  return std::max(quality_floor_, key_quality_[i] - alpha_ * m - beta_ * m * m);
}

void Trace::deviation_feature(int i, int k, std::vector<double>& out) const {
  check_pair(i, k);
  out.resize(feature_dim_);
  const double m = motion_prefix_[i] - motion_prefix_[k];
  const double mean_motion = (i == k) ? 0.0 : m / (i - k);
  out[0] = m;
  out[1] = m * m;
  out[2] = mean_motion;
  for (int c = 3; c < feature_dim_; ++c) out[c] = 0.0;
  if (feature_noise_sigma_ > 0.0) {
    for (int c = 0; c < feature_dim_; ++c) {
      const uint64_t w1 = counter_hash(seed_ ^ kFeatureStream, i, k, 2 * c);
      const uint64_t w2 = counter_hash(seed_ ^ kFeatureStream, i, k, 2 * c + 1);
      out[c] += feature_noise_sigma_ * gauss_from_words(w1, w2);
    }
  }
}

std::vector<double> Trace::deviation_feature(int i, int k) const {
  std::vector<double> out;
  deviation_feature(i, k, out);
  return out;
}

double Trace::agreement(int i, int k) const {
  const double gap = key_quality(i) - prop_quality(i, k);
  return clampd(1.0 - agreement_kappa_ * gap, 0.0, 1.0);
}

Trace gen_trace(const SynthConfig& cfg, uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(seed);

  const int n = cfg.n_frames;
  const double q_lo = cfg.quality_floor + 0.01;
  const double sc_prob = cfg.scene_change_rate / 100.0;

  std::vector<double> quality(n), motion(n, 0.0);
  std::vector<int> scene_changes;

  quality[0] = clampd(cfg.base_quality_mean + cfg.base_quality_jitter * rng.next_gauss(),
                      q_lo, 1.0);
  for (int i = 1; i < n; ++i) {
    const double qg = rng.next_gauss();
    quality[i] = clampd(quality[i - 1] +
                            0.05 * (cfg.base_quality_mean - quality[i - 1]) +
                            cfg.base_quality_jitter * qg,
                        q_lo, 1.0);
    const bool spike = rng.next_u01() < sc_prob;
    const double mg = rng.next_gauss();
    double m = std::max(0.0, cfg.motion_mean + cfg.motion_jitter * mg);
    if (spike) {
      m *= cfg.scene_change_motion_spike;
      scene_changes.push_back(i);
    }
    motion[i] = m;
  }

  return Trace(std::move(quality), std::move(motion), std::move(scene_changes),
               cfg.alpha, cfg.beta, cfg.quality_floor, cfg.feature_dim,
               cfg.feature_noise_sigma, cfg.agreement_kappa, seed);
}

void save_trace(const Trace& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "KEYSCHED-TRACE v1\n";
  f << "params: n_frames=" << t.n_frames() << " alpha=" << fmt_g17(t.alpha())
    << " beta=" << fmt_g17(t.beta()) << " floor=" << fmt_g17(t.quality_floor())
    << " d=" << t.feature_dim() << " sigma=" << fmt_g17(t.feature_noise_sigma())
    << " kappa=" << fmt_g17(t.agreement_kappa()) << " seed=" << t.seed() << "\n";
  f << "frame,key_quality,motion,scene_change\n";
  const auto& sc = t.scene_changes();
  size_t sc_pos = 0;
  for (int i = 0; i < t.n_frames(); ++i) {
    int flag = 0;
    if (sc_pos < sc.size() && sc[sc_pos] == i) {
      flag = 1;
      ++sc_pos;
    }
    f << i << ',' << fmt_g17(t.key_quality(i)) << ',' << fmt_g17(t.motion(i))
      << ',' << flag << '\n';
  }
  if (!f) throw IoError("write failed: " + path);
}

namespace {

// "key=value" scanner for the params line.
bool take_kv(std::istringstream& in, const std::string& key, std::string& val) {
  std::string tok;
  if (!(in >> tok)) return false;
  const std::string prefix = key + "=";
  if (tok.rfind(prefix, 0) != 0) return false;
  val = tok.substr(prefix.size());
  return true;
}

}  // namespace

Trace load_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path);

  std::string line;
  int line_no = 0;

  auto next_line = [&]() {
    if (!std::getline(f, line))
      throw ParseError(path, line_no + 1, "unexpected end of file");
    ++line_no;
  };

  next_line();
  if (line.rfind("KEYSCHED-TRACE", 0) != 0)
    throw ParseError(path, line_no, "missing KEYSCHED-TRACE header");
  if (line != "KEYSCHED-TRACE v1")
    throw VersionError(path + ": unsupported trace version '" + line + "'");

  next_line();
  std::istringstream ps(line);
  std::string tag, val;
  ps >> tag;
  if (tag != "params:") throw ParseError(path, line_no, "expected params line");
  int n_frames = 0, d = 0;
  double alpha = 0, beta = 0, floor = 0, sigma = 0, kappa = 0;
  uint64_t seed = 0;
  try {
    if (!take_kv(ps, "n_frames", val)) throw std::invalid_argument("n_frames");
    n_frames = std::stoi(val);
    if (!take_kv(ps, "alpha", val)) throw std::invalid_argument("alpha");
    alpha = std::stod(val);
    if (!take_kv(ps, "beta", val)) throw std::invalid_argument("beta");
    beta = std::stod(val);
    if (!take_kv(ps, "floor", val)) throw std::invalid_argument("floor");
    floor = std::stod(val);
    if (!take_kv(ps, "d", val)) throw std::invalid_argument("d");
    d = std::stoi(val);
    if (!take_kv(ps, "sigma", val)) throw std::invalid_argument("sigma");
    sigma = std::stod(val);
    if (!take_kv(ps, "kappa", val)) throw std::invalid_argument("kappa");
    kappa = std::stod(val);
    if (!take_kv(ps, "seed", val)) throw std::invalid_argument("seed");
    seed = std::stoull(val);
  } catch (const std::exception& e) {
    throw ParseError(path, line_no,
                     std::string("bad params line near '") + e.what() + "'");
  }

  next_line();
  if (line != "frame,key_quality,motion,scene_change")
    throw ParseError(path, line_no, "missing column header");

  std::vector<double> quality, motion;
  std::vector<int> scene_changes;
  quality.reserve(n_frames);
  motion.reserve(n_frames);
  for (int i = 0; i < n_frames; ++i) {
    next_line();
    std::istringstream row(line);
    std::string cell;
    int frame = -1, flag = -1;
    double q = 0, m = 0;
    try {
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("frame");
      frame = std::stoi(cell);
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("quality");
      q = std::stod(cell);
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("motion");
      m = std::stod(cell);
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("flag");
      flag = std::stoi(cell);
    } catch (const std::exception&) {
      throw ParseError(path, line_no, "malformed frame row");
    }
    if (frame != i) throw ParseError(path, line_no, "frame index out of order");
    if (flag != 0 && flag != 1)
      throw ParseError(path, line_no, "scene_change flag must be 0 or 1");
    quality.push_back(q);
    motion.push_back(m);
    if (flag) scene_changes.push_back(i);
  }

  try {
    return Trace(std::move(quality), std::move(motion),
                 std::move(scene_changes), alpha, beta, floor, d, sigma, kappa,
                 seed);
  } catch (const ConfigError& e) {
    throw ParseError(path, line_no, e.what());
  }
}

}  // namespace keysched
