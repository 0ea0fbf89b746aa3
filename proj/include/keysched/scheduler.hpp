#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "keysched/policy.hpp"
#include "keysched/trace.hpp"

namespace keysched {

// Everything a scheduler may look at when deciding frame i. Built by run();
// decisions must depend on these fields only.
struct SchedulerContext {
  int frame = 0;          // i
  int last_key = 0;       // k
  std::vector<double> deviation;
  double accum_motion = 0.0;  // m(k, i)
  double kar = 0.0;           // keys / decisions over the trailing window
  int lkd = 0;                // i - k
};

struct Decision {
  Action action = Action::NonKey;
  double p_key = 0.0;  // probability behind the decision; 0/1 when deterministic
};

class Scheduler {
 public:
  virtual ~Scheduler() = default;
  virtual Decision decide(const SchedulerContext& ctx) = 0;
  virtual std::string name() const = 0;
};

// Key every n-th frame: key iff lkd >= n.
class FixedScheduler : public Scheduler {
 public:
  explicit FixedScheduler(int interval);
  Decision decide(const SchedulerContext& ctx) override;
  std::string name() const override { return "fixed"; }

 private:
  int interval_;
};

// Key each frame independently with probability p.
class RandomScheduler : public Scheduler {
 public:
  RandomScheduler(double p_key, uint64_t seed);
  Decision decide(const SchedulerContext& ctx) override;
  std::string name() const override { return "random"; }

 private:
  double p_key_;
  SplitMix64 rng_;
};

// Key once the accumulated motion since the last key reaches a threshold.
class MagnitudeScheduler : public Scheduler {
 public:
  explicit MagnitudeScheduler(double threshold);
  Decision decide(const SchedulerContext& ctx) override;
  std::string name() const override { return "magnitude"; }

 private:
  double threshold_;
};

// Linear least-squares fit from deviation features to agreement.
struct LinearRegressor {
  std::vector<double> weights;
  double bias = 0.0;
  bool trained = false;

  double predict(const std::vector<double>& x) const;
};

// Closed-form normal-equations fit over (deviation_feature(i,k),
// agreement(i,k)) pairs sampled from the given traces: key starts are taken
// every `stride` frames and each start contributes gaps 1..max_gap.
LinearRegressor fit_agreement_regressor(const std::vector<Trace>& traces,
                                        int max_gap = 60, int stride = 7);

// Key iff the predicted agreement falls below the threshold.
class DeviationScheduler : public Scheduler {
 public:
  DeviationScheduler(LinearRegressor regressor, double threshold);
  Decision decide(const SchedulerContext& ctx) override;
  std::string name() const override { return "deviation"; }

 private:
  LinearRegressor reg_;
  double threshold_;
};

// Key iff pi(key | state) > tau. Deterministic.
class PolicyScheduler : public Scheduler {
 public:
  PolicyScheduler(PolicyParams params, double tau);
  Decision decide(const SchedulerContext& ctx) override;
  std::string name() const override { return "policy"; }

 private:
  PolicyParams params_;
  double tau_;
  ActionDist scratch_;
};

struct RolloutStep {
  int frame = 0;
  Action action = Action::NonKey;
  double quality = 0.0;
  int lkd = 0;
  double kar = 0.0;
  double p_key = 0.0;
  bool scheduled = false;  // false only for the forced first key
};

struct Rollout {
  int start = 0;
  int length = 0;
  std::vector<RolloutStep> steps;

  std::vector<int> keys() const;
};

// Walks frames [start, start+length): the first frame is forced key and
// recorded in the decision history, every later frame is put to the
// scheduler. KAR is keys/decisions over the last `window` decisions
// (fewer while the history is still filling). Quality per frame is
// key_quality for keys, prop_quality from the last key otherwise.
Rollout run(Scheduler& sched, const Trace& trace, int start, int length,
            int window = 90);

// CSV: frame,action,quality,lkd,kar,p_key
void dump_rollout_csv(const Rollout& r, std::ostream& os);

}  // namespace keysched
