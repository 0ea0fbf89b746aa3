#include "keysched/scheduler.hpp"

#include <cmath>
#include <cstdio>
#include <deque>

#include "keysched/errors.hpp"

namespace keysched {

FixedScheduler::FixedScheduler(int interval) : interval_(interval) {
  if (interval < 1) throw ConfigError("fixed scheduler: interval must be >= 1");
}

Decision FixedScheduler::decide(const SchedulerContext& ctx) {
  const bool key = ctx.lkd >= interval_;
  return Decision{key ? Action::Key : Action::NonKey, key ? 1.0 : 0.0};
}

RandomScheduler::RandomScheduler(double p_key, uint64_t seed)
    : p_key_(p_key), rng_(seed) {
  if (!(p_key > 0.0 && p_key <= 1.0))
    throw ConfigError("random scheduler: p_key must lie in (0, 1]");
}

Decision RandomScheduler::decide(const SchedulerContext&) {
  const bool key = rng_.next_u01() < p_key_;
  return Decision{key ? Action::Key : Action::NonKey, p_key_};
}

MagnitudeScheduler::MagnitudeScheduler(double threshold)
    : threshold_(threshold) {
  if (!(threshold > 0.0))
    throw ConfigError("magnitude scheduler: threshold must be > 0");
}

Decision MagnitudeScheduler::decide(const SchedulerContext& ctx) {
  const bool key = ctx.accum_motion >= threshold_;
  return Decision{key ? Action::Key : Action::NonKey, key ? 1.0 : 0.0};
}

double LinearRegressor::predict(const std::vector<double>& x) const {
  if (!trained) throw StateError("regressor used before fitting");
  if (x.size() != weights.size())
    throw ShapeError("regressor feature length mismatch");
  double s = bias;
  for (size_t j = 0; j < x.size(); ++j) s += weights[j] * x[j];
  return s;
}

namespace {

// Gaussian elimination with partial pivoting; a is n x n, b length n.
std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    const double d = a[col][col];
    if (std::fabs(d) < 1e-300)
      throw StateError("regressor fit: singular normal equations");
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / d;
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  return x;
}

}  // namespace

LinearRegressor fit_agreement_regressor(const std::vector<Trace>& traces,
                                        int max_gap, int stride) {
  if (traces.empty())
    throw ConfigError("regressor fit: need at least one trace");
  if (max_gap < 1 || stride < 1)
    throw ConfigError("regressor fit: max_gap and stride must be >= 1");

  const int d = traces.front().feature_dim();
  const int n = d + 1;  // bias column last
  std::vector<std::vector<double>> xtx(n, std::vector<double>(n, 0.0));
  std::vector<double> xty(n, 0.0);
  std::vector<double> feat;
  long count = 0;

  for (const Trace& t : traces) {
    if (t.feature_dim() != d)
      throw ConfigError("regressor fit: traces disagree on feature_dim");
    for (int k = 0; k < t.n_frames(); k += stride) {
      const int hi = std::min(t.n_frames() - 1, k + max_gap);
      for (int i = k + 1; i <= hi; ++i) {
        t.deviation_feature(i, k, feat);
        const double y = t.agreement(i, k);
        for (int r = 0; r < d; ++r) {
          for (int c = r; c < d; ++c) xtx[r][c] += feat[r] * feat[c];
          xtx[r][d] += feat[r];
          xty[r] += feat[r] * y;
        }
        xtx[d][d] += 1.0;
        xty[d] += y;
        ++count;
      }
    }
  }
  if (count < n)
    throw ConfigError("regressor fit: not enough (i, k) pairs");
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < r; ++c) xtx[r][c] = xtx[c][r];

  // Tiny ridge keeps noise-free distractor columns from making the system
  // singular.
  for (int r = 0; r < d; ++r) xtx[r][r] += 1e-12;

  std::vector<double> sol = solve_dense(std::move(xtx), std::move(xty));
  LinearRegressor reg;
  reg.weights.assign(sol.begin(), sol.begin() + d);
  reg.bias = sol[d];
  reg.trained = true;
  return reg;
}

DeviationScheduler::DeviationScheduler(LinearRegressor regressor,
                                       double threshold)
    : reg_(std::move(regressor)), threshold_(threshold) {
  if (!reg_.trained)
    throw StateError("deviation scheduler: regressor not trained");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ConfigError("deviation scheduler: threshold must lie in [0, 1]");
}

Decision DeviationScheduler::decide(const SchedulerContext& ctx) {
  const bool key = reg_.predict(ctx.deviation) < threshold_;
  return Decision{key ? Action::Key : Action::NonKey, key ? 1.0 : 0.0};
}

PolicyScheduler::PolicyScheduler(PolicyParams params, double tau)
    : params_(std::move(params)), tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw ConfigError("policy scheduler: tau must lie in (0, 1)");
}

Decision PolicyScheduler::decide(const SchedulerContext& ctx) {
  SchedulerState st = make_state(ctx.deviation, ctx.kar, ctx.lkd,
                                 params_.arch.lkd_scale);
  forward(params_, st, scratch_);
  const bool key = scratch_.p_key > tau_;
  return Decision{key ? Action::Key : Action::NonKey, scratch_.p_key};
}

std::vector<int> Rollout::keys() const {
  std::vector<int> ks;
  for (const RolloutStep& s : steps)
    if (s.action == Action::Key) ks.push_back(s.frame);
  return ks;
}

Rollout run(Scheduler& sched, const Trace& trace, int start, int length,
            int window) {
  if (start < 0 || length < 1 || start + length > trace.n_frames())
    throw BoundsError("rollout window [" + std::to_string(start) + ", " +
                      std::to_string(start + length) + ") exceeds trace of " +
                      std::to_string(trace.n_frames()) + " frames");
  if (window < 1) throw ConfigError("rollout: window must be >= 1");

  Rollout r;
  r.start = start;
  r.length = length;
  r.steps.reserve(length);

  std::deque<char> history;  // 1 = key, inside the trailing window
  int keys_in_window = 0;
  auto push_decision = [&](bool key) {
    history.push_back(key ? 1 : 0);
    keys_in_window += key ? 1 : 0;
    if (static_cast<int>(history.size()) > window) {
      keys_in_window -= history.front();
      history.pop_front();
    }
  };

  // Forced initial key anchors the propagation.
  r.steps.push_back(RolloutStep{start, Action::Key, trace.key_quality(start),
                                0, 0.0, 1.0, false});
  push_decision(true);
  int last_key = start;

  SchedulerContext ctx;
  for (int i = start + 1; i < start + length; ++i) {
    ctx.frame = i;
    ctx.last_key = last_key;
    trace.deviation_feature(i, last_key, ctx.deviation);
    ctx.accum_motion = trace.accumulated_motion(last_key, i);
    ctx.kar = static_cast<double>(keys_in_window) / history.size();
    ctx.lkd = i - last_key;

    const Decision d = sched.decide(ctx);
    const bool key = d.action == Action::Key;
    const double quality =
        key ? trace.key_quality(i) : trace.prop_quality(i, last_key);
    r.steps.push_back(
        RolloutStep{i, d.action, quality, ctx.lkd, ctx.kar, d.p_key, true});
    push_decision(key);
    if (key) last_key = i;
  }
  return r;
}

void dump_rollout_csv(const Rollout& r, std::ostream& os) {
  os << "frame,action,quality,lkd,kar,p_key\n";
  char buf[128];
  for (const RolloutStep& s : r.steps) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%d,%.17g,%.17g\n", s.frame,
                  static_cast<int>(s.action), s.quality, s.lkd, s.kar, s.p_key);
    os << buf;
  }
}

}  // namespace keysched
