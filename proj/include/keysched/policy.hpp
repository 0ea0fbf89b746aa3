#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "keysched/rng.hpp"

namespace keysched {

enum class Action : int { NonKey = 0, Key = 1 };

// Row-major dense matrix; small enough that nothing fancier is warranted.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const {
    return a[static_cast<size_t>(r) * cols + c];
  }
};

// MLP over the deviation feature with the two expert channels (KAR and
// scaled LKD) concatenated ahead of the final linear layer, softmax to the
// two action probabilities.
struct PolicyArch {
  int input_dim = 8;
  std::vector<int> hidden_sizes = {64, 64, 16};
  int expert_dim = 2;
  double lkd_scale = 100.0;  // lkd is fed to the network as lkd / lkd_scale

  int n_layers() const { return static_cast<int>(hidden_sizes.size()) + 1; }
  int layer_in(int l) const;
  int layer_out(int l) const;
  void validate() const;
  bool operator==(const PolicyArch&) const = default;
};

struct PolicyParams {
  PolicyArch arch;
  std::vector<Mat> weights;             // weights[l]: out x in
  std::vector<std::vector<double>> biases;
};

// Same tensor layout as PolicyParams; also reused for RMSProp accumulators.
struct PolicyGrads {
  std::vector<Mat> weights;
  std::vector<std::vector<double>> biases;
};

struct OptState {
  double rho = 0.9;
  double eps = 1e-8;
  double learning_rate = 0.001;
  PolicyGrads acc;  // mean-squared-gradient accumulators
};

// Network input for one decision.
struct SchedulerState {
  std::vector<double> deviation;
  double kar = 0.0;   // key/all ratio over the relevant decision window
  int lkd = 0;        // frames since the last key frame
  double lkd_norm = 0.0;
};

inline SchedulerState make_state(std::vector<double> deviation, double kar,
                                 int lkd, double lkd_scale = 100.0) {
  return SchedulerState{std::move(deviation), kar, lkd, lkd / lkd_scale};
}

struct ForwardCache {
  std::vector<std::vector<double>> acts;  // post-ReLU activations per hidden layer
  std::vector<double> concat;             // last hidden ++ [kar, lkd_norm]
  std::vector<double> input;
};

struct ActionDist {
  double p_nonkey = 0.5;
  double p_key = 0.5;
  double logits[2] = {0.0, 0.0};
  ForwardCache cache;

  double prob(Action a) const { return a == Action::Key ? p_key : p_nonkey; }
};

// Glorot-uniform weights (|w| <= sqrt(6/(fan_in+fan_out))), zero biases.
// Entries are drawn from SplitMix64(seed) layer by layer in row-major order.
PolicyParams init_params(const PolicyArch& arch, uint64_t seed);

void forward(const PolicyParams& params, const SchedulerState& state,
             ActionDist& out);
ActionDist forward(const PolicyParams& params, const SchedulerState& state);

PolicyGrads zeros_like(const PolicyParams& params);

// d(objective)/d(params) given d(objective)/d(logits), accumulated into
// `out` with the given scale. The expert channels are inputs, so their
// gradient is dropped at the concat split.
void backward_from_logits(const PolicyParams& params, const ForwardCache& cache,
                          const double dlogits[2], double scale,
                          PolicyGrads& out);

// Exact gradient of log pi(action | state).
PolicyGrads grad_logprob(const PolicyParams& params, const SchedulerState& state,
                         Action action);

double entropy(const ActionDist& dist);
PolicyGrads grad_entropy(const PolicyParams& params, const SchedulerState& state);

// Epsilon-greedy draw: when the dominant probability exceeds epsilon the
// argmax action is taken with probability epsilon (the other side keeps
// 1 - epsilon); otherwise the distribution is sampled as-is. One uniform
// word is consumed per call; in the direct case the action is Key iff
// u < p_key, in the clamped case the argmax is taken iff u < epsilon.
Action sample_action(const ActionDist& dist, double epsilon, SplitMix64& rng);

// acc <- rho*acc + (1-rho)*g^2;  param <- param + lr * g / (sqrt(acc)+eps).
// Ascent: callers hand in the gradient of the objective being maximised.
void rmsprop_step(PolicyParams& params, const PolicyGrads& grads, OptState& opt);

// Checkpoint: versioned text, full-precision values, optimizer accumulators
// included so training resumes bit-exactly.
void save_policy(const PolicyParams& params, const OptState& opt,
                 const std::string& path);
struct PolicyCheckpoint {
  PolicyParams params;
  OptState opt;
};
PolicyCheckpoint load_policy(const std::string& path);

// Helpers shared by the trainer and the tests.
void add_scaled(PolicyGrads& acc, const PolicyGrads& g, double scale);
double dot(const PolicyGrads& a, const PolicyGrads& b);
double max_abs(const PolicyGrads& g);
std::vector<double*> param_view(PolicyParams& params);

}  // namespace keysched
