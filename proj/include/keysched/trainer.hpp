#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "keysched/policy.hpp"
#include "keysched/trace.hpp"

namespace keysched {

enum class RewardMode { Groundtruth, Pseudo };
enum class BaselineMode { MeanReturn, None };
enum class ReturnMode { RewardToGo, Total };

struct TrainConfig {
  double eta = 0.04;          // key-ratio limit; exceeding it ends the episode
  int episode_len = 270;      // M: an episode spans frames t .. t+M
  int trials_per_episode = 32;
  int minibatch_episodes = 8;
  int total_episodes = 2400;
  double gamma = 1.0;
  double lambda1 = 0.14;      // entropy bonus weight
  double epsilon = 0.98;      // epsilon-greedy clamp
  RewardMode reward_mode = RewardMode::Groundtruth;
  BaselineMode baseline_mode = BaselineMode::MeanReturn;
  ReturnMode return_mode = ReturnMode::RewardToGo;
  double learning_rate = 0.001;
  uint64_t seed = 0;
  int checkpoint_every = 0;   // episodes between checkpoints; 0 = final only
  std::string checkpoint_prefix;
  int jobs = 1;
  bool log_wallclock = false; // off by default so logs are byte-reproducible

  void validate() const;
};

struct EpisodeStep {
  SchedulerState state;  // empty for the forced first key
  Action action = Action::Key;
  double prob = 1.0;     // pi(action | state) at sampling time
  double reward = 0.0;
  bool forced = false;
};

// One constrained trial. stop_step is M when the episode ran to the end,
// otherwise the step whose pre-action check found KAR strictly above eta
// (no action is taken at that step).
struct EpisodeRecord {
  int start = 0;
  int stop_step = 0;
  std::vector<EpisodeStep> steps;
  double ret = 0.0;           // sum of gamma^j * reward over acted steps
  double realized_kar = 0.0;  // keys / acted steps
};

double reward_groundtruth(const Trace& trace, int i, int k, Action action);
double reward_pseudo(const Trace& trace, int i, int k, Action action);
double compute_reward(const Trace& trace, int i, int k, Action action,
                      RewardMode mode);

// Supplies actions during an episode; the policy source is the production
// implementation, scripted sources exist for tests.
class ActionSource {
 public:
  virtual ~ActionSource() = default;
  virtual std::pair<Action, double> act(const SchedulerState& state) = 0;
};

class PolicyActionSource : public ActionSource {
 public:
  PolicyActionSource(const PolicyParams& params, double epsilon,
                     SplitMix64 rng)
      : params_(params), epsilon_(epsilon), rng_(rng) {}
  std::pair<Action, double> act(const SchedulerState& state) override;

 private:
  const PolicyParams& params_;
  double epsilon_;
  SplitMix64 rng_;
  ActionDist dist_;
};

// The constrained episode protocol. Frame t is a forced key counted in the
// episode's key tally. At each later step u = 1..M the episode-local KAR,
// keys so far over the episode length M, is checked first: strictly above
// eta ends the episode at once. Otherwise the state (deviation feature,
// episode-local KAR, LKD) is built, the source acts, and the reward for the
// chosen action is recorded. Non-key rewards are identically zero.
EpisodeRecord run_constrained_episode(ActionSource& source, const Trace& trace,
                                      int t, const TrainConfig& cfg,
                                      double lkd_scale);

EpisodeRecord rollout_constrained(const PolicyParams& params,
                                  const Trace& trace, int t,
                                  const TrainConfig& cfg, SplitMix64& rng);

// Mean over trials of the discounted reward sum.
double episode_return(const std::vector<EpisodeRecord>& records, double gamma);

// REINFORCE estimator over a minibatch of episodes, each with K trials:
//   (1/(B*K)) sum over trials, sum over policy steps of
//       grad log pi(a|s) * (G_t - b) + lambda1 * grad H(pi(.|s))
// G_t is the discounted reward-to-go inside the trial (or the trial's
// total return when cfg.return_mode == Total); b is the mean total return
// of the episode's K trials (0 with the baseline off). Throws StateError
// when the records were not produced under `params`.
PolicyGrads policy_gradient(const std::vector<std::vector<EpisodeRecord>>& batch,
                            const PolicyParams& params, const TrainConfig& cfg);

struct TrainLogRow {
  int episode = 0;
  double mean_return = 0.0;
  double mean_entropy = 0.0;
  double realized_kar = 0.0;
  long long wallclock_ms = 0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
};

// CSV: episode,mean_return,mean_entropy,realized_kar,wallclock_ms
void write_train_log_csv(const TrainLog& log, std::ostream& os);

struct TrainResult {
  PolicyParams params;
  OptState opt;
  TrainLog log;
};

// Minibatch gradient-ascent training: sample B (trace, start) pairs, run K
// constrained trials each against the current parameter snapshot, take one
// RMSProp step, repeat. Deterministic in (traces, cfg, arch) for any jobs
// setting.
TrainResult train(const std::vector<Trace>& traces, const TrainConfig& cfg,
                  const PolicyArch& arch);
TrainResult train(const std::vector<Trace>& traces, const TrainConfig& cfg);

}  // namespace keysched
