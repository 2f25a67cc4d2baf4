#include "weakrec/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "weakrec/amp.hpp"
#include "weakrec/dense.hpp"
#include "weakrec/sensing.hpp"
#include "weakrec/spectral.hpp"
#include "weakrec/thresholds.hpp"

namespace weakrec::harness {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

double to_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(what + ": '" + s + "' is not a number");
  }
}

json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

// NaN-safe CSV field
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream o;
  o << std::setprecision(12) << v;
  return o.str();
}

json header(const ExperimentConfig& cfg) {
  return json{{"schema_version", kSchemaVersion},
              {"task", to_string(cfg.task)},
              {"seed", cfg.seed},
              {"config_hash", cfg.hash()},
              {"config", cfg.to_json()}};
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::Thresholds: return "thresholds";
    case Task::Predict: return "predict";
    case Task::Simulate: return "simulate";
    case Task::Amp: return "amp";
    case Task::CdpDemo: return "cdp-demo";
    case Task::SpikeCheck: return "spike-check";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  for (Task t : {Task::Thresholds, Task::Predict, Task::Simulate, Task::Amp, Task::CdpDemo, Task::SpikeCheck})
    if (to_string(t) == s) return t;
  throw Error("task: unknown task '" + s + "'");
}

std::vector<double> parse_delta_grid(const std::string& text) {
  std::vector<double> out;
  const auto parts = split(text, ':');
  if (parts.size() == 3 && text.find(',') == std::string::npos) {
    const double a = to_number(parts[0], "delta"), b = to_number(parts[1], "delta"),
                 s = to_number(parts[2], "delta");
    if (!(s > 0)) throw Error("delta: step must be positive");
    if (!(b >= a)) throw Error("delta: stop must not be below start");
    const long k_max = static_cast<long>(std::floor((b - a) / s + 1e-9));
    for (long k = 0; k <= k_max; ++k) out.push_back(std::round((a + static_cast<double>(k) * s) * 1e12) / 1e12);
  } else if (parts.size() == 1) {
    for (const auto& p : split(text, ',')) out.push_back(to_number(p, "delta"));
  } else {
    throw Error("delta: expected start:stop:step or a comma-separated list, got '" + text + "'");
  }
  if (out.empty()) throw Error("delta: empty grid");
  for (std::size_t i = 1; i < out.size(); ++i)
    if (!(out[i] > out[i - 1])) throw Error("delta: grid must be strictly increasing");
  return out;
}

std::uint64_t default_seed() {
  if (const char* s = std::getenv("WEAKREC_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(s, &used);
      if (used == std::string(s).size()) return v;
    } catch (const std::exception&) {
    }
    throw Error("WEAKREC_SEED: '" + std::string(s) + "' is not an unsigned integer");
  }
  return 0;
}

json ExperimentConfig::to_json() const {
  return json{{"task", to_string(task)},
              {"field", weakrec::to_string(field)},
              {"channel", channel},
              {"sigma2", sigma2},
              {"preprocess", preprocess},
              {"deltas", deltas},
              {"delta_relative", delta_relative},
              {"d", d},
              {"trials", trials},
              {"seed", seed},
              {"output", output},
              {"solver", solver},
              {"shift", finite_or_string(shift)},
              {"tol", tol},
              {"max_iter", max_iter},
              {"lanczos_max_dim", lanczos_max_dim},
              {"mu0", mu0},
              {"t_max", t_max},
              {"onsager", onsager},
              {"linearize", linearize},
              {"image", image},
              {"width", width},
              {"height", height},
              {"views", views},
              {"law", law},
              {"alpha", finite_or_string(alpha)},
              {"n", n}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, ExperimentConfig c) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  auto number = [](const json& v, const std::string& key) {
    if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!v.is_number()) throw Error("config: '" + key + "' must be a number");
    return v.get<double>();
  };
  auto integer = [](const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw Error("config: '" + key + "' must be an integer");
    return v.get<long long>();
  };
  auto string = [](const json& v, const std::string& key) {
    if (!v.is_string()) throw Error("config: '" + key + "' must be a string");
    return v.get<std::string>();
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "task") c.task = parse_task(string(v, key));
    else if (key == "field") c.field = parse_field(string(v, key));
    else if (key == "channel") c.channel = string(v, key);
    else if (key == "sigma2") c.sigma2 = number(v, key);
    else if (key == "preprocess") {
      if (v.is_string()) c.preprocess = split(v.get<std::string>(), ',');
      else if (v.is_array()) c.preprocess = v.get<std::vector<std::string>>();
      else throw Error("config: 'preprocess' must be a string or a list");
    } else if (key == "deltas" || key == "delta") {
      if (v.is_string()) c.deltas = parse_delta_grid(v.get<std::string>());
      else if (v.is_array()) c.deltas = v.get<std::vector<double>>();
      else if (v.is_number()) c.deltas = {v.get<double>()};
      else throw Error("config: 'deltas' must be a grid string, a number or a list");
    } else if (key == "delta_relative") c.delta_relative = v.get<bool>();
    else if (key == "d") c.d = static_cast<int>(integer(v, key));
    else if (key == "trials") c.trials = static_cast<int>(integer(v, key));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(integer(v, key));
    else if (key == "output") c.output = string(v, key);
    else if (key == "solver") c.solver = string(v, key);
    else if (key == "shift") c.shift = v.is_string() ? to_number(v.get<std::string>(), key) : number(v, key);
    else if (key == "tol") c.tol = number(v, key);
    else if (key == "max_iter") c.max_iter = static_cast<int>(integer(v, key));
    else if (key == "lanczos_max_dim") c.lanczos_max_dim = static_cast<int>(integer(v, key));
    else if (key == "mu0") c.mu0 = number(v, key);
    else if (key == "t_max") c.t_max = static_cast<int>(integer(v, key));
    else if (key == "onsager") c.onsager = string(v, key);
    else if (key == "linearize") c.linearize = v.get<bool>();
    else if (key == "image") c.image = string(v, key);
    else if (key == "width") c.width = static_cast<int>(integer(v, key));
    else if (key == "height") c.height = static_cast<int>(integer(v, key));
    else if (key == "views") c.views = static_cast<int>(integer(v, key));
    else if (key == "law") c.law = string(v, key);
    else if (key == "alpha") c.alpha = v.is_string() ? to_number(v.get<std::string>(), key) : number(v, key);
    else if (key == "n") c.n = static_cast<int>(integer(v, key));
    else throw Error("config: unknown key '" + key + "'");
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) { return from_json(j, ExperimentConfig{}); }

void ExperimentConfig::validate() const {
  if (trials < 1) throw Error("trials: must be >= 1");
  if (!(sigma2 >= 0.0)) throw Error("sigma2: must be >= 0");
  if (d < 2) throw Error("d: must be >= 2");
  if (!(tol > 0.0 && tol < 1.0)) throw Error("tol: must be in (0, 1)");
  if (max_iter < 1) throw Error("max_iter: must be >= 1");
  if (lanczos_max_dim < 2) throw Error("lanczos_max_dim: must be >= 2");
  if (solver != "power" && solver != "lanczos" && solver != "dense")
    throw Error("solver: expected power, lanczos or dense");
  if (onsager != "se" && onsager != "empirical" && onsager != "off")
    throw Error("onsager: expected se, empirical or off");
  if (preprocess.empty() && (task == Task::Predict || task == Task::Simulate || task == Task::CdpDemo))
    throw Error("preprocess: at least one preprocessing function is needed");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0)) throw Error("deltas: must be positive");
    if (i > 0 && !(deltas[i] > deltas[i - 1])) throw Error("deltas: grid must be strictly increasing");
  }
  const bool needs_delta = task == Task::Predict || task == Task::Simulate || task == Task::Amp;
  if (needs_delta && deltas.empty()) throw Error("deltas: the task needs a delta grid");
  if (task == Task::SpikeCheck && deltas.size() != 1) throw Error("deltas: spike-check takes exactly one delta");
  if (task == Task::SpikeCheck && !std::isfinite(alpha)) throw Error("alpha: spike-check needs alpha*");
  if (task == Task::SpikeCheck && n < 2) throw Error("n: must be >= 2");
  if (task == Task::CdpDemo && (views < 2 || views > 12)) throw Error("views: L must be in 2..12");
  if (task == Task::Amp) {
    if (field != Field::Real) throw Error("field: amp is real-field only");
    if (!(mu0 >= 0.0)) throw Error("mu0: must be >= 0");
    if (t_max < 0) throw Error("t_max: must be >= 0");
  }
  if (channel != "pr" && channel != "gap" && channel.rfind("custom:", 0) != 0)
    throw Error("channel: expected pr, gap or custom:<csv>");
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

std::shared_ptr<const Marginals> make_marginals(const ExperimentConfig& cfg) {
  if (cfg.channel == "pr") return std::make_shared<const Marginals>(Channel::phase_retrieval(cfg.field, cfg.sigma2));
  if (cfg.channel == "gap") {
    if (cfg.field != Field::Real) throw Error("channel: the gap example is a real-field channel");
    return std::make_shared<const Marginals>(Channel::gap_example());
  }
  if (cfg.channel.rfind("custom:", 0) == 0)
    return std::make_shared<const Marginals>(Channel::custom(cfg.field, read_channel_csv(cfg.channel.substr(7))));
  throw Error("channel: expected pr, gap or custom:<csv>");
}

namespace {

bool needs_delta_u(const std::vector<PreprocessSpec>& specs) {
  return std::any_of(specs.begin(), specs.end(), [](const auto& s) { return s.kind == PreprocessKind::OptimalDelta; });
}

std::vector<PreprocessSpec> parse_specs(const ExperimentConfig& cfg) {
  std::vector<PreprocessSpec> out;
  for (const auto& p : cfg.preprocess) out.push_back(PreprocessSpec::parse(p));
  return out;
}

// optimal-delta is built per delta; everything else once
Preprocessor make_preprocessor(const PreprocessSpec& spec, const std::shared_ptr<const Marginals>& mg, double delta,
                               std::optional<double> du) {
  PreprocessSpec s = spec;
  if (s.kind == PreprocessKind::OptimalDelta && !(s.delta > 0)) s.delta = delta;
  return Preprocessor(s, mg, du);
}

}  // namespace

std::vector<PredictionRow> predict(const ExperimentConfig& cfg) {
  const auto mg = make_marginals(cfg);
  const auto specs = parse_specs(cfg);
  std::optional<double> du;
  if (needs_delta_u(specs)) du = thresholds::delta_u(*mg);
  std::vector<PredictionRow> out;
  for (double delta : cfg.deltas) {
    for (const auto& spec : specs) {
      PredictionRow row;
      row.delta = delta;
      row.preprocess = spec.label();
      try {
        row.pred = rmt::predict(make_preprocessor(spec, mg, delta, du), delta);
      } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
      }
      out.push_back(std::move(row));
    }
  }
  return out;
}

namespace {

double auto_shift(const Preprocessor& t, const Eigen::VectorXd& w, double delta) {
  if (t.spec().kind == PreprocessKind::OptimalClamped) return t.spec().M + 1.0;
  const double lo = w.size() ? w.minCoeff() : 0.0;
  if (lo >= 0.0) return 0.0;
  // lambda_min(D) >= min T * lambda_max(Wishart), edge (1 + 1/sqrt(delta))^2
  const double edge = std::pow(1.0 + 1.0 / std::sqrt(delta), 2);
  return -lo * edge * 1.1;
}

template <class S>
void simulate_impl(const ExperimentConfig& cfg, double budget, SweepResult& res) {
  const auto t0 = Clock::now();
  const auto mg = make_marginals(cfg);
  const Channel& ch = mg->channel();
  const auto specs = parse_specs(cfg);
  std::optional<double> du;
  if (needs_delta_u(specs)) du = thresholds::delta_u(*mg);
  const Eigen::Index d = cfg.d;
  const int k = static_cast<int>(specs.size());
  const std::size_t nd = cfg.deltas.size();

  // predictions once per (delta, preprocessing)
  res.predictions = predict(cfg);
  for (const auto& p : res.predictions)
    if (!p.ok) res.warnings.push_back("prediction at delta = " + num(p.delta) + " for " + p.preprocess + ": " + p.error);

  std::vector<long> ns;
  for (double delta : cfg.deltas) ns.push_back(std::lround(delta * static_cast<double>(d)));
  const long n_max = *std::max_element(ns.begin(), ns.end());

  for (int trial = 0; trial < cfg.trials; ++trial) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(trial));
    const Vec<S> x = sample_signal<S>(d, rng);
    const auto ens = GaussianEnsemble<S>::sample(n_max, d, rng);
    const MeasurementSet meas = measure<S>(ens.apply(x), ch, rng);
    std::vector<TrialRecord> batch;
    for (std::size_t di = 0; di < nd; ++di) {
      const double delta = cfg.deltas[di];
      const Eigen::Index n = ns[di];
      if (n < 1) throw Error("delta * d rounds to zero measurements");
      Eigen::MatrixXd w(n, k);
      std::vector<Preprocessor> pre;
      for (int j = 0; j < k; ++j) {
        pre.push_back(make_preprocessor(specs[static_cast<std::size_t>(j)], mg, delta, du));
        w.col(j) = pre.back().apply(meas.y.head(n));
      }
      const spectral::WeightedGram<S> gram(ens.matrix(), n, w, static_cast<double>(d));
      Rng srng = make_rng(cfg.seed, (static_cast<std::uint64_t>(trial) << 24) | (di << 4) | 1u);
      std::vector<spectral::SpectralEstimate<S>> est(static_cast<std::size_t>(k));
      std::vector<double> ms(static_cast<std::size_t>(k));
      if (cfg.solver == "lanczos") {
        spectral::LanczosOptions lo;
        lo.nev = 2;
        lo.tol = cfg.tol;
        lo.max_dim = cfg.lanczos_max_dim;
        const auto s0 = Clock::now();
        est = spectral::lanczos<S>(gram.block(), k, d, lo, srng);
        const double per = seconds_since(s0) * 1e3 / k;
        std::fill(ms.begin(), ms.end(), per);
      } else {
        for (int j = 0; j < k; ++j) {
          const auto s0 = Clock::now();
          if (cfg.solver == "dense") {
            est[static_cast<std::size_t>(j)] =
                spectral::dense_top<S>(ens.matrix(), n, w.col(j), static_cast<double>(d));
          } else {
            spectral::PowerOptions po;
            po.shift = std::isfinite(cfg.shift) ? cfg.shift : auto_shift(pre[static_cast<std::size_t>(j)], w.col(j), delta);
            po.tol = cfg.tol;
            po.max_iter = cfg.max_iter;
            est[static_cast<std::size_t>(j)] = spectral::power_method<S>(gram.op(j), d, po, srng);
          }
          ms[static_cast<std::size_t>(j)] = seconds_since(s0) * 1e3;
        }
      }
      for (int j = 0; j < k; ++j) {
        const auto& e = est[static_cast<std::size_t>(j)];
        TrialRecord r;
        r.delta = delta;
        r.d = cfg.d;
        r.n = n;
        r.trial = trial;
        r.seed = cfg.seed;
        r.preprocess = specs[static_cast<std::size_t>(j)].label();
        const double ov = spectral::overlap<S>(e.xhat, x);
        r.overlap2 = ov * ov;
        r.eig1 = e.eigval;
        r.eig2 = e.eigval2;
        r.iters = e.iters;
        r.converged = e.converged;
        r.shift = e.shift;
        r.runtime_ms = ms[static_cast<std::size_t>(j)];
        const auto& p = res.predictions[di * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
        if (p.ok) {
          r.pred_rho2 = p.pred.rho2;
          r.pred_lam1 = p.pred.lam1;
          r.pred_lam2 = p.pred.lam2;
        }
        if (!e.converged)
          res.warnings.push_back("solver did not converge: trial " + std::to_string(trial) + ", delta " + num(delta) +
                                 ", " + r.preprocess);
        batch.push_back(r);
      }
      if (seconds_since(t0) > budget && (di + 1 < nd || trial + 1 < cfg.trials)) {
        res.complete = false;
        break;
      }
    }
    if (!res.complete) {
      res.warnings.push_back("time budget of " + num(budget) + " s exhausted during trial " + std::to_string(trial));
      break;
    }
    res.records.insert(res.records.end(), batch.begin(), batch.end());
    res.trials_done = trial + 1;
  }
  std::sort(res.records.begin(), res.records.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return std::tie(a.delta, a.preprocess, a.trial) < std::tie(b.delta, b.preprocess, b.trial);
  });
  res.seconds = seconds_since(t0);
}

}  // namespace

SweepResult simulate(const ExperimentConfig& cfg, double budget_seconds) {
  cfg.validate();
  SweepResult res;
  if (cfg.field == Field::Complex)
    simulate_impl<cplx>(cfg, budget_seconds, res);
  else
    simulate_impl<double>(cfg, budget_seconds, res);
  return res;
}

std::vector<SummaryRow> summarize(const SweepResult& r) {
  std::map<std::pair<double, std::string>, std::vector<const TrialRecord*>> groups;
  for (const auto& rec : r.records) groups[{rec.delta, rec.preprocess}].push_back(&rec);
  std::vector<SummaryRow> out;
  for (const auto& [key, recs] : groups) {
    SummaryRow s;
    s.delta = key.first;
    s.preprocess = key.second;
    s.trials = static_cast<int>(recs.size());
    double sum = 0, sum2 = 0, e1 = 0, e2 = 0;
    for (const auto* rec : recs) {
      sum += rec->overlap2;
      sum2 += rec->overlap2 * rec->overlap2;
      e1 += rec->eig1;
      e2 += rec->eig2;
    }
    const double m = static_cast<double>(recs.size());
    s.mean_overlap2 = sum / m;
    s.stderr_overlap2 = m > 1 ? std::sqrt(std::max(0.0, (sum2 - m * s.mean_overlap2 * s.mean_overlap2) / (m - 1)) / m) : 0.0;
    s.mean_eig1 = e1 / m;
    s.mean_eig2 = e2 / m;
    s.pred_rho2 = recs.front()->pred_rho2;
    s.pred_lam1 = recs.front()->pred_lam1;
    s.pred_lam2 = recs.front()->pred_lam2;
    out.push_back(s);
  }
  return out;
}

rmt::SpectralLaw parse_spectral_law(const std::string& text, double alpha_star, double delta) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const auto args = colon == std::string::npos ? std::vector<std::string>{} : split(text.substr(colon + 1), ',');
  rmt::SpectralLaw law;
  law.alpha_star = alpha_star;
  law.delta = delta;
  if (name == "two-atom") {
    if (args.size() != 2 && args.size() != 3) throw Error("law: two-atom:a,b[,p] (p = weight of a)");
    const double a = to_number(args[0], "law"), b = to_number(args[1], "law");
    const double p = args.size() == 3 ? to_number(args[2], "law") : 0.5;
    if (!(p > 0.0 && p < 1.0)) throw Error("law: weight must be in (0, 1)");
    law.h = ZLaw::atoms({a, b}, {p, 1.0 - p});
  } else if (name == "point") {
    if (args.size() != 1) throw Error("law: point:c");
    law.h = ZLaw::atoms({to_number(args[0], "law")}, {1.0});
  } else {
    throw Error("law: expected two-atom:a,b[,p] or point:c");
  }
  return law;
}

SpikeResult spike_check(const ExperimentConfig& cfg) {
  cfg.validate();
  const double delta = cfg.deltas.front();
  const rmt::SpectralLaw law = parse_spectral_law(cfg.law, cfg.alpha, delta);
  SpikeResult out;
  out.prediction = rmt::spike_map(law);
  out.psi_prime = rmt::SpectralFunctions(law.h, delta).psi_prime(law.alpha_star);
  const long n = cfg.n;
  const long d = std::lround(static_cast<double>(n) / delta);
  if (d < 2) throw Error("spike-check: n / delta must be at least 2");
  // diagonal of M: the spike, then the atoms in their exact proportions
  Eigen::VectorXd m(n);
  m(0) = law.alpha_star;
  const long na = std::lround(law.h.w[0] * static_cast<double>(n - 1));
  for (long i = 1; i < n; ++i) m(i) = (i - 1 < na) ? law.h.z[0] : law.h.z.back();
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  for (int s = 0; s < cfg.trials; ++s) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(s));
    RowMat<cplx> u(n, d - 1);  // rows are the columns of U
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < d - 1; ++j) {
        const double re = nd(rng);
        const double im = nd(rng);
        u(i, j) = cplx(re, im);
      }
    const auto top = dense::top_eigs<cplx>(dense::weighted_gram<cplx>(u, n, m, 1.0 / static_cast<double>(n)), 1, false);
    out.lambda1.push_back(top.values(0));
  }
  out.mean = std::accumulate(out.lambda1.begin(), out.lambda1.end(), 0.0) / static_cast<double>(out.lambda1.size());
  return out;
}

CdpResult cdp_demo(const ExperimentConfig& cfg) {
  cfg.validate();
  const GrayImage img = cfg.image.empty() ? synthetic_gradient(cfg.width, cfg.height) : read_pgm(cfg.image);
  const long long dd = static_cast<long long>(img.width) * img.height;
  if (dd > (1LL << 22)) throw Error("cdp-demo: image too large (d > 2^22)");
  const Eigen::VectorXcd x = image_to_signal(img);
  Rng rng = make_rng(cfg.seed, 0);
  const CdpEnsemble cdp = CdpEnsemble::sample(cfg.views, img.height, img.width, rng);
  const Eigen::VectorXcd ax = cdp.apply(x);
  const Eigen::VectorXd y = ax.cwiseAbs2();

  ExperimentConfig c2 = cfg;
  c2.field = Field::Complex;
  const auto mg = make_marginals(c2);
  const PreprocessSpec spec = PreprocessSpec::parse(cfg.preprocess.front());
  std::optional<double> du;
  if (spec.kind == PreprocessKind::OptimalDelta) du = thresholds::delta_u(*mg);
  const Preprocessor t = make_preprocessor(spec, mg, static_cast<double>(cfg.views), du);
  const double scale = static_cast<double>(cdp.d()) / static_cast<double>(cdp.n());
  const Eigen::VectorXd w = t.apply(y) * scale;
  spectral::Operator<cplx> op = [&](const Vec<cplx>& v, Vec<cplx>& out) {
    Eigen::VectorXcd av = cdp.apply(v);
    av.array() *= w.array();
    out = cdp.adjoint(av);
  };
  spectral::PowerOptions po;
  po.shift = std::isfinite(cfg.alpha) ? cfg.alpha : 100.0;
  po.tol = cfg.tol;
  po.max_iter = cfg.max_iter;
  Rng srng = make_rng(cfg.seed, 1);
  const auto est = spectral::power_method<cplx>(op, cdp.d(), po, srng);

  CdpResult out;
  const double ov = spectral::overlap<cplx>(est.xhat, x);
  out.overlap2 = ov * ov;
  out.eigval = est.eigval;
  out.iters = est.iters;
  out.converged = est.converged;
  out.views = cfg.views;
  out.preprocess = spec.label();
  const cplx c = est.xhat.dot(x);
  const cplx phase = std::abs(c) > 0 ? c / std::abs(c) : cplx(1.0);
  const Eigen::VectorXcd aligned = est.xhat * phase * std::sqrt(static_cast<double>(cdp.d()));
  out.image = signal_to_image(aligned, img.width, img.height).pixels;
  return out;
}

std::vector<AmpSummary> amp_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto mg = make_marginals(cfg);
  const amp::GampFunctions fn(mg);
  const double du = thresholds::delta_u(*mg);
  amp::AmpOptions opt;
  opt.onsager = cfg.onsager == "se" ? amp::OnsagerMode::StateEvolution
                : cfg.onsager == "empirical" ? amp::OnsagerMode::Empirical
                                             : amp::OnsagerMode::Off;
  std::vector<AmpSummary> out;
  for (std::size_t di = 0; di < cfg.deltas.size(); ++di) {
    const double delta = cfg.delta_relative ? cfg.deltas[di] * du : cfg.deltas[di];
    const auto se = amp::state_evolution(fn, delta, cfg.mu0, cfg.t_max, opt.onsager == amp::OnsagerMode::StateEvolution);
    const long n = std::lround(delta * cfg.d);
    for (int trial = 0; trial < cfg.trials; ++trial) {
      Rng rng = make_rng(cfg.seed, (static_cast<std::uint64_t>(di) << 32) | static_cast<std::uint64_t>(trial));
      const Eigen::VectorXd x = sample_signal<double>(cfg.d, rng);
      const auto ens = RealGaussian::sample(n, cfg.d, rng);
      const MeasurementSet meas = measure<double>(ens.apply(x), mg->channel(), rng);
      const Eigen::VectorXd z0 = amp::calibrated_init(x, cfg.mu0, rng);
      const auto res = amp::amp_run(ens.matrix(), meas.y, x, fn, se, z0, cfg.t_max, opt);
      AmpSummary s;
      s.delta = delta;
      s.delta_u = du;
      s.trial = trial;
      s.diverged = res.diverged;
      s.warnings = res.warnings;
      for (const auto& r : res.trajectory) {
        s.mu_se.push_back(r.mu_se);
        s.overlap.push_back(r.overlap_emp);
        s.znorm.push_back(r.znorm_emp);
        s.zhat_norm.push_back(r.zhat_norm);
      }
      if (cfg.linearize) {
        const auto lm = amp::linearized_top_eig(ens.matrix(), meas.y, *mg, du, false);
        if (!lm.real_spectrum) s.warnings.push_back("L_n has non-real eigenvalues");
        s.lin_top = lm.top_eig;
        s.lin_max_imag = lm.max_imag;
        s.dstar_top = lm.dstar_top;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

json run(const ExperimentConfig& cfg) {
  cfg.validate();
  json out = header(cfg);
  const std::string& pre = cfg.output;
  switch (cfg.task) {
    case Task::Thresholds: {
      const auto mg = make_marginals(cfg);
      const auto rep = thresholds::compute(*mg);
      out["field"] = weakrec::to_string(rep.field);
      out["sigma2"] = rep.sigma2;
      out["delta_l"] = finite_or_string(rep.delta_l);
      out["delta_u"] = finite_or_string(rep.delta_u);
      out["delta_l_sentinel"] = rep.delta_l_sentinel;
      out["warnings"] = rep.warnings;
      if (!pre.empty()) {
        auto f = open_csv(pre + "_F.csv");
        f << "m,F,seed,config_hash\n";
        for (std::size_t i = 0; i < rep.m.size(); ++i)
          f << num(rep.m[i]) << ',' << num(rep.F[i]) << ',' << cfg.seed << ',' << cfg.hash() << '\n';
        auto g = open_csv(pre + "_integrand.csv");
        g << "y,integrand,seed,config_hash\n";
        for (std::size_t i = 0; i < rep.y.size(); ++i)
          g << num(rep.y[i]) << ',' << num(rep.integrand[i]) << ',' << cfg.seed << ',' << cfg.hash() << '\n';
      }
      break;
    }
    case Task::Predict: {
      json rows = json::array();
      for (const auto& p : predict(cfg)) {
        json r{{"delta", p.delta}, {"preprocess", p.preprocess}};
        if (p.ok) {
          r["rho2"] = p.pred.rho2;
          r["lam1"] = p.pred.lam1;
          r["lam2"] = p.pred.lam2;
          r["lambda_bar"] = p.pred.lambda_bar;
          r["lambda_star"] = p.pred.lambda_star;
          r["informative"] = p.pred.informative;
          r["warnings"] = p.pred.warnings;
        } else {
          r["error"] = p.error;
        }
        rows.push_back(r);
      }
      out["predictions"] = rows;
      if (!pre.empty()) {
        auto f = open_csv(pre + ".csv");
        f << "delta,preprocess,rho2,lam1,lam2,lambda_bar,lambda_star,seed,config_hash\n";
        for (const auto& r : rows) {
          const bool ok = !r.contains("error");
          f << num(r["delta"].get<double>()) << ',' << r["preprocess"].get<std::string>() << ','
            << (ok ? num(r["rho2"].get<double>()) : "nan") << ',' << (ok ? num(r["lam1"].get<double>()) : "nan")
            << ',' << (ok ? num(r["lam2"].get<double>()) : "nan") << ','
            << (ok ? num(r["lambda_bar"].get<double>()) : "nan") << ','
            << (ok ? num(r["lambda_star"].get<double>()) : "nan") << ',' << cfg.seed << ',' << cfg.hash() << '\n';
        }
      }
      break;
    }
    case Task::Simulate: {
      const SweepResult res = simulate(cfg);
      json rows = json::array();
      for (const auto& s : summarize(res))
        rows.push_back({{"delta", s.delta},
                        {"preprocess", s.preprocess},
                        {"trials", s.trials},
                        {"mean_overlap2", s.mean_overlap2},
                        {"stderr_overlap2", s.stderr_overlap2},
                        {"mean_eig1", s.mean_eig1},
                        {"mean_eig2", finite_or_string(s.mean_eig2)},
                        {"pred_rho2", finite_or_string(s.pred_rho2)},
                        {"pred_lam1", finite_or_string(s.pred_lam1)},
                        {"pred_lam2", finite_or_string(s.pred_lam2)}});
      out["summary"] = rows;
      out["complete"] = res.complete;
      out["trials_done"] = res.trials_done;
      out["warnings"] = res.warnings;
      if (!pre.empty()) {
        auto f = open_csv(pre + ".csv");
        f << "delta,d,n,trial,seed,config_hash,preprocess,overlap2,eig1,eig2,iters,converged,shift,runtime_ms,"
             "pred_rho2,pred_lam1,pred_lam2\n";
        const std::string h = cfg.hash();
        for (const auto& r : res.records)
          f << num(r.delta) << ',' << r.d << ',' << r.n << ',' << r.trial << ',' << r.seed << ',' << h << ','
            << r.preprocess << ',' << num(r.overlap2) << ',' << num(r.eig1) << ',' << num(r.eig2) << ',' << r.iters
            << ',' << (r.converged ? 1 : 0) << ',' << num(r.shift) << ',' << num(r.runtime_ms) << ','
            << num(r.pred_rho2) << ',' << num(r.pred_lam1) << ',' << num(r.pred_lam2) << '\n';
      }
      break;
    }
    case Task::Amp: {
      const auto runs = amp_experiment(cfg);
      json rows = json::array();
      for (const auto& s : runs) {
        json r{{"delta", s.delta},       {"delta_u", finite_or_string(s.delta_u)},
               {"trial", s.trial},       {"diverged", s.diverged},
               {"mu_se", s.mu_se},       {"overlap_emp", s.overlap},
               {"znorm_emp", s.znorm},   {"warnings", s.warnings}};
        if (cfg.linearize) {
          r["lin_top_eig"] = s.lin_top;
          r["lin_max_imag"] = s.lin_max_imag;
          r["dstar_top"] = s.dstar_top;
        }
        rows.push_back(r);
      }
      out["runs"] = rows;
      if (!pre.empty()) {
        auto f = open_csv(pre + "_trajectory.csv");
        f << "delta,trial,t,mu_SE,q_SE,overlap_emp,znorm_emp,seed,config_hash\n";
        for (const auto& s : runs)
          for (std::size_t t = 0; t < s.mu_se.size(); ++t)
            f << num(s.delta) << ',' << s.trial << ',' << t << ',' << num(s.mu_se[t]) << ','
              << num(s.mu_se[t] / (1.0 + s.mu_se[t])) << ',' << num(s.overlap[t]) << ',' << num(s.znorm[t]) << ','
              << cfg.seed << ',' << cfg.hash() << '\n';
      }
      break;
    }
    case Task::CdpDemo: {
      const CdpResult r = cdp_demo(cfg);
      out["overlap2"] = r.overlap2;
      out["eigval"] = r.eigval;
      out["iters"] = r.iters;
      out["converged"] = r.converged;
      out["views"] = r.views;
      out["preprocess"] = r.preprocess;
      if (!pre.empty()) {
        GrayImage img;
        img.width = cfg.image.empty() ? cfg.width : read_pgm(cfg.image).width;
        img.height = static_cast<int>(r.image.size() / static_cast<std::size_t>(img.width));
        img.pixels = r.image;
        write_pgm(pre + ".pgm", img);
      }
      break;
    }
    case Task::SpikeCheck: {
      const SpikeResult r = spike_check(cfg);
      out["prediction"] = r.prediction;
      out["psi_prime"] = r.psi_prime;
      out["lambda1"] = r.lambda1;
      out["mean"] = r.mean;
      break;
    }
  }
  if (!pre.empty()) write_json(pre + ".json", out);
  return out;
}

}  // namespace weakrec::harness
