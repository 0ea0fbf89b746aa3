#include "keysched/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "keysched/errors.hpp"
#include "keysched/parallel.hpp"

namespace keysched {

namespace {

constexpr uint64_t kSamplerStream = 0x5a43b1e5u;
constexpr uint64_t kRolloutStream = 0x0117ca11u;

}  // namespace

void TrainConfig::validate() const {
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
  if (episode_len < 1) throw ConfigError("episode_len must be >= 1");
  if (trials_per_episode < 1)
    throw ConfigError("trials_per_episode must be >= 1");
  if (minibatch_episodes < 1)
    throw ConfigError("minibatch_episodes must be >= 1");
  if (total_episodes < 0) throw ConfigError("total_episodes must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw ConfigError("gamma must lie in (0, 1]");
  if (lambda1 < 0.0) throw ConfigError("lambda1 must be >= 0");
  if (!(epsilon > 0.5 && epsilon <= 1.0))
    throw ConfigError("epsilon must lie in (0.5, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

double reward_groundtruth(const Trace& trace, int i, int k, Action action) {
  if (action == Action::NonKey) return 0.0;
  return trace.key_quality(i) - trace.prop_quality(i, k);
}

double reward_pseudo(const Trace& trace, int i, int k, Action action) {
  if (action == Action::NonKey) return 0.0;
  return 1.0 - trace.agreement(i, k);
}

double compute_reward(const Trace& trace, int i, int k, Action action,
                      RewardMode mode) {
  return mode == RewardMode::Groundtruth ? reward_groundtruth(trace, i, k, action)
                                         : reward_pseudo(trace, i, k, action);
}

std::pair<Action, double> PolicyActionSource::act(const SchedulerState& state) {
  forward(params_, state, dist_);
  const Action a = sample_action(dist_, epsilon_, rng_);
  return {a, dist_.prob(a)};
}

EpisodeRecord run_constrained_episode(ActionSource& source, const Trace& trace,
                                      int t, const TrainConfig& cfg,
                                      double lkd_scale) {
  const int m = cfg.episode_len;
  if (t < 0 || t + m >= trace.n_frames())
    throw BoundsError("episode window [" + std::to_string(t) + ", " +
                      std::to_string(t + m) + "] exceeds trace of " +
                      std::to_string(trace.n_frames()) + " frames");

  EpisodeRecord rec;
  rec.start = t;
  rec.steps.reserve(m + 1);

  rec.steps.push_back(EpisodeStep{
      SchedulerState{}, Action::Key, 1.0,
      compute_reward(trace, t, t, Action::Key, cfg.reward_mode), true});
  int keys = 1;
  int last_key = t;

  rec.stop_step = m;
  for (int u = 1; u <= m; ++u) {
    const double kar = static_cast<double>(keys) / m;
    if (kar > cfg.eta) {
      rec.stop_step = u;
      break;
    }
    const int i = t + u;
    SchedulerState st = make_state(trace.deviation_feature(i, last_key), kar,
                                   i - last_key, lkd_scale);
    const auto [action, prob] = source.act(st);
    const double reward = compute_reward(trace, i, last_key, action,
                                         cfg.reward_mode);
    if (action == Action::Key) {
      ++keys;
      last_key = i;
    }
    rec.steps.push_back(EpisodeStep{std::move(st), action, prob, reward, false});
  }

  double ret = 0.0, disc = 1.0;
  for (const EpisodeStep& s : rec.steps) {
    ret += disc * s.reward;
    disc *= cfg.gamma;
  }
  rec.ret = ret;
  rec.realized_kar = static_cast<double>(keys) / rec.steps.size();
  return rec;
}

EpisodeRecord rollout_constrained(const PolicyParams& params,
                                  const Trace& trace, int t,
                                  const TrainConfig& cfg, SplitMix64& rng) {
  PolicyActionSource source(params, cfg.epsilon, rng);
  return run_constrained_episode(source, trace, t, cfg,
                                 params.arch.lkd_scale);
}

double episode_return(const std::vector<EpisodeRecord>& records, double gamma) {
  if (records.empty())
    throw std::invalid_argument("episode_return: empty record set");
  double total = 0.0;
  for (const EpisodeRecord& rec : records) {
    double ret = 0.0, disc = 1.0;
    for (const EpisodeStep& s : rec.steps) {
      ret += disc * s.reward;
      disc *= gamma;
    }
    total += ret;
  }
  return total / records.size();
}

PolicyGrads policy_gradient(const std::vector<std::vector<EpisodeRecord>>& batch,
                            const PolicyParams& params, const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("policy_gradient: empty batch");
  size_t n_trials = 0;
  for (const auto& episode : batch) n_trials += episode.size();
  if (n_trials == 0)
    throw std::invalid_argument("policy_gradient: no trials in batch");

  PolicyGrads grads = zeros_like(params);
  const double scale = 1.0 / static_cast<double>(n_trials);
  ActionDist dist;
  std::vector<double> reward_to_go;

  for (const auto& episode : batch) {
    double baseline = 0.0;
    if (cfg.baseline_mode == BaselineMode::MeanReturn && !episode.empty()) {
      for (const EpisodeRecord& rec : episode) baseline += rec.ret;
      baseline /= episode.size();
    }
    for (const EpisodeRecord& rec : episode) {
      const size_t n = rec.steps.size();
      reward_to_go.assign(n, 0.0);
      double acc = 0.0;
      for (size_t j = n; j-- > 0;) {
        acc = rec.steps[j].reward + cfg.gamma * acc;
        reward_to_go[j] = acc;
      }
      for (size_t j = 0; j < n; ++j) {
        const EpisodeStep& step = rec.steps[j];
        if (step.forced) continue;
        forward(params, step.state, dist);
        if (dist.prob(step.action) != step.prob)
          throw StateError(
              "policy_gradient: parameters changed under the batch");
        const double g_t =
            cfg.return_mode == ReturnMode::RewardToGo ? reward_to_go[j] : rec.ret;
        const double advantage = g_t - baseline;
        const double p[2] = {dist.p_nonkey, dist.p_key};
        const double h = entropy(dist);
        double dlogits[2];
        for (int a = 0; a < 2; ++a) {
          const double onehot = a == static_cast<int>(step.action) ? 1.0 : 0.0;
          dlogits[a] = advantage * (onehot - p[a]) -
                       cfg.lambda1 * p[a] * (std::log(std::max(p[a], 1e-300)) + h);
        }
        backward_from_logits(params, dist.cache, dlogits, scale, grads);
      }
    }
  }
  return grads;
}

void write_train_log_csv(const TrainLog& log, std::ostream& os) {
  os << "episode,mean_return,mean_entropy,realized_kar,wallclock_ms\n";
  char buf[160];
  for (const TrainLogRow& r : log.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%lld\n", r.episode,
                  r.mean_return, r.mean_entropy, r.realized_kar, r.wallclock_ms);
    os << buf;
  }
}

namespace {

double bernoulli_entropy(double p_taken, Action action) {
  const double p_key = action == Action::Key ? p_taken : 1.0 - p_taken;
  const double p0 = std::max(1.0 - p_key, 1e-300);
  const double p1 = std::max(p_key, 1e-300);
  return -(p0 * std::log(p0) + p1 * std::log(p1));
}

}  // namespace

TrainResult train(const std::vector<Trace>& traces, const TrainConfig& cfg,
                  const PolicyArch& arch) {
  cfg.validate();
  arch.validate();
  std::vector<int> viable;
  for (size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].feature_dim() != arch.input_dim)
      throw ConfigError("train: trace feature_dim does not match arch input_dim");
    if (traces[i].n_frames() > cfg.episode_len)
      viable.push_back(static_cast<int>(i));
  }
  if (viable.empty())
    throw ConfigError("train: no trace is longer than one episode");

  TrainResult out;
  out.params = init_params(arch, cfg.seed);
  out.opt.learning_rate = cfg.learning_rate;
  out.opt.acc = zeros_like(out.params);

  SplitMix64 sampler(counter_hash(cfg.seed, kSamplerStream, 0, 0));
  const auto t0 = std::chrono::steady_clock::now();

  int episodes_done = 0;
  int last_checkpoint = 0;
  while (episodes_done < cfg.total_episodes) {
    const int b = std::min(cfg.minibatch_episodes,
                           cfg.total_episodes - episodes_done);

    struct EpisodePlan {
      const Trace* trace;
      int start;
      int global_index;
    };
    std::vector<EpisodePlan> plans(b);
    for (int e = 0; e < b; ++e) {
      const Trace& tr =
          traces[viable[sampler.next_below(viable.size())]];
      const int start = static_cast<int>(
          sampler.next_below(tr.n_frames() - cfg.episode_len));
      plans[e] = EpisodePlan{&tr, start, episodes_done + e};
    }

    std::vector<std::vector<EpisodeRecord>> batch(b);
    parallel_for(b, cfg.jobs, [&](int e) {
      std::vector<EpisodeRecord>& trials = batch[e];
      trials.reserve(cfg.trials_per_episode);
      for (int v = 0; v < cfg.trials_per_episode; ++v) {
        SplitMix64 rng(counter_hash(cfg.seed ^ kRolloutStream,
                                    plans[e].global_index, v, 0));
        trials.push_back(rollout_constrained(out.params, *plans[e].trace,
                                             plans[e].start, cfg, rng));
      }
    });

    const PolicyGrads grads = policy_gradient(batch, out.params, cfg);
    rmsprop_step(out.params, grads, out.opt);
    episodes_done += b;

    double mean_return = 0.0, mean_entropy = 0.0, realized_kar = 0.0;
    long n_steps = 0, n_trials = 0;
    for (const auto& episode : batch) {
      mean_return += episode_return(episode, cfg.gamma);
      for (const EpisodeRecord& rec : episode) {
        realized_kar += rec.realized_kar;
        ++n_trials;
        for (const EpisodeStep& s : rec.steps) {
          if (s.forced) continue;
          mean_entropy += bernoulli_entropy(s.prob, s.action);
          ++n_steps;
        }
      }
    }
    mean_return /= b;
    realized_kar /= n_trials;
    mean_entropy = n_steps > 0 ? mean_entropy / n_steps : 0.0;

    long long ms = 0;
    if (cfg.log_wallclock)
      ms = std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t0)
               .count();
    out.log.rows.push_back(
        TrainLogRow{episodes_done, mean_return, mean_entropy, realized_kar, ms});

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() &&
        episodes_done / cfg.checkpoint_every > last_checkpoint / cfg.checkpoint_every) {
      last_checkpoint = episodes_done;
      save_policy(out.params, out.opt,
                  cfg.checkpoint_prefix + "-ep" + std::to_string(episodes_done) +
                      ".kpol");
    }
  }
  return out;
}

TrainResult train(const std::vector<Trace>& traces, const TrainConfig& cfg) {
  PolicyArch arch;
  if (!traces.empty()) arch.input_dim = traces.front().feature_dim();
  return train(traces, cfg, arch);
}

}  // namespace keysched
