#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace keysched {

// Parameters of the synthetic trace generator. A trace stands in for one
// video: per-frame quality of a full (key) segmentation pass, per-frame
// motion magnitude, and the decay law that degrades propagated quality.
struct SynthConfig {
  int n_frames = 600;
  double base_quality_mean = 0.9;    // centre of the key-quality random walk
  double base_quality_jitter = 0.01; // per-step walk sigma
  double motion_mean = 0.25;
  double motion_jitter = 0.10;
  double scene_change_rate = 1.0;    // expected scene changes per 100 frames
  double scene_change_motion_spike = 8.0;
  double alpha = 0.02;               // linear decay per unit accumulated motion
  double beta = 0.001;               // quadratic decay
  double quality_floor = 0.3;
  int feature_dim = 8;               // >= 3
  double feature_noise_sigma = 0.05;
  double agreement_kappa = 1.0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Immutable after construction; all query methods are const and safe for
// concurrent readers.
class Trace {
 public:
  Trace(std::vector<double> key_quality, std::vector<double> motion,
        std::vector<int> scene_changes, double alpha, double beta,
        double quality_floor, int feature_dim, double feature_noise_sigma,
        double agreement_kappa, uint64_t seed);

  int n_frames() const { return static_cast<int>(key_quality_.size()); }
  double key_quality(int i) const;
  double motion(int i) const;
  const std::vector<double>& key_quality() const { return key_quality_; }
  const std::vector<double>& motion() const { return motion_; }
  const std::vector<int>& scene_changes() const { return scene_changes_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double quality_floor() const { return quality_floor_; }
  int feature_dim() const { return feature_dim_; }
  double feature_noise_sigma() const { return feature_noise_sigma_; }
  double agreement_kappa() const { return agreement_kappa_; }
  uint64_t seed() const { return seed_; }

  // m(k, i) = sum of motion over frames (k, i]; zero when k == i.
  double accumulated_motion(int k, int i) const;

  // Quality obtained at frame i by propagating from key frame k:
  //   max(quality_floor, key_quality[i] - alpha*m - beta*m^2)
  double prop_quality(int i, int k) const;

  // Length-d feature describing the deviation between frames k and i.
  // Channels 0..2 carry m(k,i), m(k,i)^2 and the mean motion over (k, i],
  // each with additive N(0, sigma^2) noise; channels 3..d-1 are pure
  // N(0, sigma^2) distractors. Noise is a pure function of
  // (seed, i, k, channel) so repeated queries agree in any order.
  void deviation_feature(int i, int k, std::vector<double>& out) const;
  std::vector<double> deviation_feature(int i, int k) const;

  // clamp(1 - kappa*(key_quality[i] - prop_quality(i, k)), 0, 1)
  double agreement(int i, int k) const;

 private:
  void check_frame(int i) const;
  void check_pair(int i, int k) const;

  std::vector<double> key_quality_;
  std::vector<double> motion_;
  std::vector<double> motion_prefix_;  // motion_prefix_[i] = sum motion[0..i]
  std::vector<int> scene_changes_;
  double alpha_, beta_, quality_floor_;
  int feature_dim_;
  double feature_noise_sigma_, agreement_kappa_;
  uint64_t seed_;
};

// Deterministic in (cfg, seed). Generation draws from SplitMix64(seed) in
// this exact order: one gaussian for key_quality[0]; then per frame
// i = 1..n-1: a gaussian for the quality walk, a uniform for the
// scene-change test (hit iff u < rate/100), a gaussian for motion. Each
// gaussian consumes two words (Box-Muller, no spare caching). The quality
// walk is mean-reverting, q[i] = clamp(q[i-1] + 0.05*(mean - q[i-1]) +
// jitter*g, floor + 0.01, 1); motion[i] = max(0, motion_mean + jitter*g),
// multiplied by the spike factor on scene-change frames; motion[0] = 0.
Trace gen_trace(const SynthConfig& cfg, uint64_t seed);

// Versioned plain-text table; load(save(t)) reproduces t bitwise.
void save_trace(const Trace& t, const std::string& path);
Trace load_trace(const std::string& path);

}  // namespace keysched
