#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "keysched/scheduler.hpp"
#include "keysched/trace.hpp"

namespace keysched {

// Per-frame timing of the simulated pipeline: a key frame pays the full
// segmentation pass, a non-key frame pays the flow/warp pass, every frame
// pays the scheduler overhead.
struct CostModel {
  double t_key = 1.0 / 10.1;      // seconds per key frame
  double t_nonkey = 1.0 / 153.8;  // seconds per propagated frame
  double t_sched = 0.001;         // scheduler overhead per frame

  void validate() const;
};

struct EvalMetrics {
  double mean_quality = 0.0;
  double aki = 0.0;            // frames / keys
  std::vector<int> cki;        // gaps between successive keys, per trace
  double sim_fps = 0.0;
  long n_keys = 0;
  long n_frames = 0;
};

double simulated_fps(long n_frames, long n_keys, const CostModel& cm);

// Full-length rollout per trace, metrics over the concatenation.
EvalMetrics evaluate(Scheduler& sched, const std::vector<Trace>& traces,
                     const CostModel& cm, int window = 90);

struct CurveRow {
  std::string scheduler;
  double control = 0.0;
  double aki = 0.0;
  double mean_quality = 0.0;
  double sim_fps = 0.0;
  long n_keys = 0;
  long n_frames = 0;
};

struct SweepEntry {
  std::string scheduler;
  double control = 0.0;
  // Fresh scheduler per evaluation; throws ConfigError for a bad control.
  std::function<std::unique_ptr<Scheduler>()> make;
};

struct SweepResult {
  std::vector<CurveRow> rows;       // sorted by aki
  std::vector<std::string> warnings;  // one per skipped entry
};

SweepResult sweep(const std::vector<SweepEntry>& entries,
                  const std::vector<Trace>& traces, const CostModel& cm,
                  int jobs = 1, int window = 90);

// CSV: scheduler,control,aki,mean_quality,sim_fps,n_keys,n_frames
void write_curve_csv(const std::vector<CurveRow>& rows, std::ostream& os);

struct OracleResult {
  std::vector<int> keys;      // ascending, first element == start
  double mean_quality = 0.0;
};

// Exact maximiser of total quality over frames [start, start+length) among
// key placements that contain `start` and use at most key_budget keys.
// Dynamic program over (position, keys left), O(length^2 * budget); ties go
// to the lexicographically smallest key set.
OracleResult oracle_schedule(const Trace& trace, int start, int length,
                             int key_budget);

struct CkiHistogram {
  int bin_width = 1;
  std::vector<long> counts;   // counts[b] covers gaps [b*w, (b+1)*w)
  double gap_variance = 0.0;
  int max_gap = 0;
  long n_gaps = 0;
};

CkiHistogram cki_histogram(const std::vector<Rollout>& rollouts, int bin_width);

// CSV: bin_lo,bin_hi,count
void write_histogram_csv(const CkiHistogram& h, std::ostream& os);

}  // namespace keysched
