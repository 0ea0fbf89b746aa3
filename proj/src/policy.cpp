#include "keysched/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "keysched/errors.hpp"

namespace keysched {

namespace {

std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

int PolicyArch::layer_in(int l) const {
  if (l == 0) return input_dim;
  if (l < static_cast<int>(hidden_sizes.size())) return hidden_sizes[l - 1];
  return hidden_sizes.back() + expert_dim;
}

int PolicyArch::layer_out(int l) const {
  if (l < static_cast<int>(hidden_sizes.size())) return hidden_sizes[l];
  return 2;
}

void PolicyArch::validate() const {
  if (input_dim < 1) throw ConfigError("arch: input_dim must be >= 1");
  if (hidden_sizes.empty()) throw ConfigError("arch: hidden_sizes must be non-empty");
  for (int h : hidden_sizes)
    if (h < 1) throw ConfigError("arch: hidden sizes must be >= 1");
  if (expert_dim != 2) throw ConfigError("arch: expert_dim is fixed at 2");
  if (!(lkd_scale > 0)) throw ConfigError("arch: lkd_scale must be > 0");
}

PolicyParams init_params(const PolicyArch& arch, uint64_t seed) {
  arch.validate();
  PolicyParams p;
  p.arch = arch;
  SplitMix64 rng(seed);
  for (int l = 0; l < arch.n_layers(); ++l) {
    const int in = arch.layer_in(l), out = arch.layer_out(l);
    Mat w(out, in);
    const double bound = std::sqrt(6.0 / (in + out));
    for (double& x : w.a) x = (2.0 * rng.next_u01() - 1.0) * bound;
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(out, 0.0);
  }
  return p;
}

PolicyGrads zeros_like(const PolicyParams& params) {
  PolicyGrads g;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    g.weights.emplace_back(params.weights[l].rows, params.weights[l].cols);
    g.biases.emplace_back(params.biases[l].size(), 0.0);
  }
  return g;
}

void forward(const PolicyParams& params, const SchedulerState& state,
             ActionDist& out) {
  const PolicyArch& arch = params.arch;
  if (static_cast<int>(state.deviation.size()) != arch.input_dim)
    throw ShapeError("state deviation length does not match arch input_dim");
  for (double x : state.deviation) check_finite(x, "deviation input");
  check_finite(state.kar, "kar input");
  check_finite(state.lkd_norm, "lkd input");

  const int n_hidden = static_cast<int>(arch.hidden_sizes.size());
  ForwardCache& c = out.cache;
  c.input = state.deviation;
  c.acts.resize(n_hidden);

  const std::vector<double>* x = &c.input;
  for (int l = 0; l < n_hidden; ++l) {
    const Mat& w = params.weights[l];
    const std::vector<double>& b = params.biases[l];
    std::vector<double>& h = c.acts[l];
    h.assign(w.rows, 0.0);
    for (int r = 0; r < w.rows; ++r) {
      double s = b[r];
      const double* wr = &w.a[static_cast<size_t>(r) * w.cols];
      for (int j = 0; j < w.cols; ++j) s += wr[j] * (*x)[j];
      h[r] = s > 0.0 ? s : 0.0;
    }
    x = &h;
  }

  c.concat.resize(arch.hidden_sizes.back() + arch.expert_dim);
  std::copy(x->begin(), x->end(), c.concat.begin());
  c.concat[c.concat.size() - 2] = state.kar;
  c.concat[c.concat.size() - 1] = state.lkd_norm;

  const Mat& wf = params.weights.back();
  const std::vector<double>& bf = params.biases.back();
  for (int r = 0; r < 2; ++r) {
    double s = bf[r];
    const double* wr = &wf.a[static_cast<size_t>(r) * wf.cols];
    for (int j = 0; j < wf.cols; ++j) s += wr[j] * c.concat[j];
    out.logits[r] = s;
  }

  const double mx = std::max(out.logits[0], out.logits[1]);
  const double e0 = std::exp(out.logits[0] - mx);
  const double e1 = std::exp(out.logits[1] - mx);
  out.p_nonkey = e0 / (e0 + e1);
  out.p_key = e1 / (e0 + e1);
}

ActionDist forward(const PolicyParams& params, const SchedulerState& state) {
  ActionDist d;
  forward(params, state, d);
  return d;
}

void backward_from_logits(const PolicyParams& params, const ForwardCache& cache,
                          const double dlogits[2], double scale,
                          PolicyGrads& out) {
  const PolicyArch& arch = params.arch;
  const int n_hidden = static_cast<int>(arch.hidden_sizes.size());
  const int last = n_hidden;

  // Final layer.
  {
    Mat& gw = out.weights[last];
    std::vector<double>& gb = out.biases[last];
    for (int r = 0; r < 2; ++r) {
      const double d = scale * dlogits[r];
      gb[r] += d;
      double* gwr = &gw.a[static_cast<size_t>(r) * gw.cols];
      for (int j = 0; j < gw.cols; ++j) gwr[j] += d * cache.concat[j];
    }
  }

  // Into the last hidden activation; expert channels are inputs.
  const Mat& wf = params.weights[last];
  std::vector<double> dh(arch.hidden_sizes.back());
  for (int j = 0; j < static_cast<int>(dh.size()); ++j)
    dh[j] = dlogits[0] * wf(0, j) + dlogits[1] * wf(1, j);

  for (int l = n_hidden - 1; l >= 0; --l) {
    const std::vector<double>& act = cache.acts[l];
    for (size_t j = 0; j < dh.size(); ++j)
      if (act[j] <= 0.0) dh[j] = 0.0;

    const std::vector<double>& in =
        (l == 0) ? cache.input : cache.acts[l - 1];
    Mat& gw = out.weights[l];
    std::vector<double>& gb = out.biases[l];
    for (int r = 0; r < gw.rows; ++r) {
      const double d = scale * dh[r];
      if (d != 0.0) {
        gb[r] += d;
        double* gwr = &gw.a[static_cast<size_t>(r) * gw.cols];
        for (int j = 0; j < gw.cols; ++j) gwr[j] += d * in[j];
      }
    }
    if (l > 0) {
      const Mat& w = params.weights[l];
      std::vector<double> dprev(w.cols, 0.0);
      for (int r = 0; r < w.rows; ++r) {
        const double d = dh[r];
        if (d != 0.0) {
          const double* wr = &w.a[static_cast<size_t>(r) * w.cols];
          for (int j = 0; j < w.cols; ++j) dprev[j] += d * wr[j];
        }
      }
      dh = std::move(dprev);
    }
  }
}

PolicyGrads grad_logprob(const PolicyParams& params, const SchedulerState& state,
                         Action action) {
  ActionDist dist = forward(params, state);
  const double p[2] = {dist.p_nonkey, dist.p_key};
  double dlogits[2];
  for (int j = 0; j < 2; ++j)
    dlogits[j] = (j == static_cast<int>(action) ? 1.0 : 0.0) - p[j];
  PolicyGrads g = zeros_like(params);
  backward_from_logits(params, dist.cache, dlogits, 1.0, g);
  return g;
}

double entropy(const ActionDist& dist) {
  const double p0 = std::max(dist.p_nonkey, 1e-300);
  const double p1 = std::max(dist.p_key, 1e-300);
  return -(p0 * std::log(p0) + p1 * std::log(p1));
}

PolicyGrads grad_entropy(const PolicyParams& params,
                         const SchedulerState& state) {
  ActionDist dist = forward(params, state);
  const double h = entropy(dist);
  const double p[2] = {dist.p_nonkey, dist.p_key};
  double dlogits[2];
  for (int j = 0; j < 2; ++j)
    dlogits[j] = -p[j] * (std::log(std::max(p[j], 1e-300)) + h);
  PolicyGrads g = zeros_like(params);
  backward_from_logits(params, dist.cache, dlogits, 1.0, g);
  return g;
}

Action sample_action(const ActionDist& dist, double epsilon, SplitMix64& rng) {
  if (!(epsilon > 0.5 && epsilon <= 1.0))
    throw ConfigError("epsilon must lie in (0.5, 1]");
  const double u = rng.next_u01();
  const double pmax = std::max(dist.p_key, dist.p_nonkey);
  if (pmax > epsilon) {
    const Action argmax =
        dist.p_key >= dist.p_nonkey ? Action::Key : Action::NonKey;
    const Action other =
        argmax == Action::Key ? Action::NonKey : Action::Key;
    return u < epsilon ? argmax : other;
  }
  return u < dist.p_key ? Action::Key : Action::NonKey;
}

namespace {

void check_shapes(const PolicyParams& params, const PolicyGrads& g,
                  const char* what) {
  if (g.weights.size() != params.weights.size() ||
      g.biases.size() != params.biases.size())
    throw ShapeError(std::string(what) + ": layer count mismatch");
  for (size_t l = 0; l < g.weights.size(); ++l) {
    if (g.weights[l].rows != params.weights[l].rows ||
        g.weights[l].cols != params.weights[l].cols ||
        g.biases[l].size() != params.biases[l].size())
      throw ShapeError(std::string(what) + ": tensor shape mismatch at layer " +
                       std::to_string(l));
  }
}

}  // namespace

void rmsprop_step(PolicyParams& params, const PolicyGrads& grads,
                  OptState& opt) {
  check_shapes(params, grads, "rmsprop grads");
  check_shapes(params, opt.acc, "rmsprop accumulators");
  const double rho = opt.rho, eps = opt.eps, lr = opt.learning_rate;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    auto step = [&](double& p, double& acc, double g) {
      acc = rho * acc + (1.0 - rho) * g * g;
      p += lr * g / (std::sqrt(acc) + eps);
    };
    for (size_t j = 0; j < params.weights[l].a.size(); ++j)
      step(params.weights[l].a[j], opt.acc.weights[l].a[j],
           grads.weights[l].a[j]);
    for (size_t j = 0; j < params.biases[l].size(); ++j)
      step(params.biases[l][j], opt.acc.biases[l][j], grads.biases[l][j]);
  }
}

void add_scaled(PolicyGrads& acc, const PolicyGrads& g, double scale) {
  for (size_t l = 0; l < acc.weights.size(); ++l) {
    for (size_t j = 0; j < acc.weights[l].a.size(); ++j)
      acc.weights[l].a[j] += scale * g.weights[l].a[j];
    for (size_t j = 0; j < acc.biases[l].size(); ++j)
      acc.biases[l][j] += scale * g.biases[l][j];
  }
}

double dot(const PolicyGrads& a, const PolicyGrads& b) {
  double s = 0.0;
  for (size_t l = 0; l < a.weights.size(); ++l) {
    for (size_t j = 0; j < a.weights[l].a.size(); ++j)
      s += a.weights[l].a[j] * b.weights[l].a[j];
    for (size_t j = 0; j < a.biases[l].size(); ++j)
      s += a.biases[l][j] * b.biases[l][j];
  }
  return s;
}

double max_abs(const PolicyGrads& g) {
  double m = 0.0;
  for (size_t l = 0; l < g.weights.size(); ++l) {
    for (double x : g.weights[l].a) m = std::max(m, std::fabs(x));
    for (double x : g.biases[l]) m = std::max(m, std::fabs(x));
  }
  return m;
}

std::vector<double*> param_view(PolicyParams& params) {
  std::vector<double*> v;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    for (double& x : params.weights[l].a) v.push_back(&x);
    for (double& x : params.biases[l]) v.push_back(&x);
  }
  return v;
}

namespace {

void write_tensor(std::ofstream& f, const std::string& name, int rows, int cols,
                  const double* data) {
  f << name << ',' << rows << ',' << cols << '\n';
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) f << ',';
      f << fmt_g17(data[static_cast<size_t>(r) * cols + c]);
    }
    f << '\n';
  }
}

}  // namespace

void save_policy(const PolicyParams& params, const OptState& opt,
                 const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "KEYSCHED-POLICY v1\n";
  f << "arch: input_dim=" << params.arch.input_dim << " hidden=";
  for (size_t i = 0; i < params.arch.hidden_sizes.size(); ++i) {
    if (i) f << ',';
    f << params.arch.hidden_sizes[i];
  }
  f << " expert_dim=" << params.arch.expert_dim
    << " lkd_scale=" << fmt_g17(params.arch.lkd_scale) << '\n';
  f << "opt: rho=" << fmt_g17(opt.rho) << " eps=" << fmt_g17(opt.eps)
    << " lr=" << fmt_g17(opt.learning_rate) << '\n';
  for (size_t l = 0; l < params.weights.size(); ++l) {
    const std::string idx = std::to_string(l);
    write_tensor(f, "W" + idx, params.weights[l].rows, params.weights[l].cols,
                 params.weights[l].a.data());
    write_tensor(f, "b" + idx, static_cast<int>(params.biases[l].size()), 1,
                 params.biases[l].data());
    write_tensor(f, "AW" + idx, opt.acc.weights[l].rows,
                 opt.acc.weights[l].cols, opt.acc.weights[l].a.data());
    write_tensor(f, "Ab" + idx, static_cast<int>(opt.acc.biases[l].size()), 1,
                 opt.acc.biases[l].data());
  }
  if (!f) throw IoError("write failed: " + path);
}

namespace {

struct TensorReader {
  std::ifstream& f;
  const std::string& path;
  int& line_no;

  std::string getline_or_throw() {
    std::string line;
    if (!std::getline(f, line))
      throw ParseError(path, line_no + 1, "unexpected end of file");
    ++line_no;
    return line;
  }

  void read(const std::string& expect_name, int expect_rows, int expect_cols,
            double* out) {
    std::string header = getline_or_throw();
    std::istringstream hs(header);
    std::string name, cell;
    if (!std::getline(hs, name, ','))
      throw ParseError(path, line_no, "bad tensor header");
    if (name != expect_name)
      throw ParseError(path, line_no,
                       "expected tensor " + expect_name + ", got " + name);
    int rows = -1, cols = -1;
    try {
      if (!std::getline(hs, cell, ',')) throw std::invalid_argument("rows");
      rows = std::stoi(cell);
      if (!std::getline(hs, cell, ',')) throw std::invalid_argument("cols");
      cols = std::stoi(cell);
    } catch (const std::exception&) {
      throw ParseError(path, line_no, "bad tensor header");
    }
    if (rows != expect_rows || cols != expect_cols)
      throw ParseError(path, line_no, "tensor " + expect_name +
                                          " has unexpected shape");
    for (int r = 0; r < rows; ++r) {
      std::string line = getline_or_throw();
      std::istringstream rs(line);
      for (int c = 0; c < cols; ++c) {
        if (!std::getline(rs, cell, ','))
          throw ParseError(path, line_no, "short tensor row");
        try {
          out[static_cast<size_t>(r) * cols + c] = std::stod(cell);
        } catch (const std::exception&) {
          throw ParseError(path, line_no, "bad tensor value");
        }
      }
    }
  }
};

}  // namespace

PolicyCheckpoint load_policy(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path);
  int line_no = 0;
  TensorReader reader{f, path, line_no};

  std::string line = reader.getline_or_throw();
  if (line.rfind("KEYSCHED-POLICY", 0) != 0)
    throw ParseError(path, line_no, "missing KEYSCHED-POLICY header");
  if (line != "KEYSCHED-POLICY v1")
    throw VersionError(path + ": unsupported policy version '" + line + "'");

  PolicyArch arch;
  arch.hidden_sizes.clear();
  line = reader.getline_or_throw();
  {
    std::istringstream as(line);
    std::string tag, tok;
    as >> tag;
    if (tag != "arch:") throw ParseError(path, line_no, "expected arch line");
    try {
      as >> tok;
      arch.input_dim = std::stoi(tok.substr(tok.find('=') + 1));
      as >> tok;
      std::istringstream hs(tok.substr(tok.find('=') + 1));
      std::string h;
      while (std::getline(hs, h, ',')) arch.hidden_sizes.push_back(std::stoi(h));
      as >> tok;
      arch.expert_dim = std::stoi(tok.substr(tok.find('=') + 1));
      as >> tok;
      arch.lkd_scale = std::stod(tok.substr(tok.find('=') + 1));
    } catch (const std::exception&) {
      throw ParseError(path, line_no, "bad arch line");
    }
  }
  try {
    arch.validate();
  } catch (const ConfigError& e) {
    throw ParseError(path, line_no, e.what());
  }

  OptState opt;
  line = reader.getline_or_throw();
  {
    std::istringstream os(line);
    std::string tag, tok;
    os >> tag;
    if (tag != "opt:") throw ParseError(path, line_no, "expected opt line");
    try {
      os >> tok;
      opt.rho = std::stod(tok.substr(tok.find('=') + 1));
      os >> tok;
      opt.eps = std::stod(tok.substr(tok.find('=') + 1));
      os >> tok;
      opt.learning_rate = std::stod(tok.substr(tok.find('=') + 1));
    } catch (const std::exception&) {
      throw ParseError(path, line_no, "bad opt line");
    }
  }

  PolicyParams params;
  params.arch = arch;
  for (int l = 0; l < arch.n_layers(); ++l) {
    const int in = arch.layer_in(l), out = arch.layer_out(l);
    params.weights.emplace_back(out, in);
    params.biases.emplace_back(out, 0.0);
  }
  opt.acc = zeros_like(params);

  for (int l = 0; l < arch.n_layers(); ++l) {
    const std::string idx = std::to_string(l);
    const int in = arch.layer_in(l), out = arch.layer_out(l);
    reader.read("W" + idx, out, in, params.weights[l].a.data());
    reader.read("b" + idx, out, 1, params.biases[l].data());
    reader.read("AW" + idx, out, in, opt.acc.weights[l].a.data());
    reader.read("Ab" + idx, out, 1, opt.acc.biases[l].data());
  }
  return PolicyCheckpoint{std::move(params), std::move(opt)};
}

}  // namespace keysched
