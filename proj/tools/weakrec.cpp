#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "weakrec/harness.hpp"

using namespace weakrec;
using namespace weakrec::harness;

namespace {

struct Flags {
  std::string config;
  std::string field, channel, preprocess, delta, output, solver, onsager, image, law;
  double sigma2 = 0, shift = 0, tol = 0, mu0 = 0, alpha = 0;
  int d = 0, trials = 0, max_iter = 0, lanczos_max_dim = 0, t_max = 0, width = 0, height = 0, views = 0, n = 0;
  std::uint64_t seed = 0;
  bool relative = false, linearize = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config file; flags given on the command line override it");
  app->add_option("--field", f.field, "real | complex");
  app->add_option("--channel", f.channel, "pr | gap | custom:<csv>");
  app->add_option("--sigma2", f.sigma2, "noise variance of the phase-retrieval channel");
  app->add_option("--seed", f.seed, "base seed (default: WEAKREC_SEED or 0)");
  app->add_option("--output,-o", f.output, "output file prefix");
}

void add_sweep(CLI::App* app, Flags& f) {
  app->add_option("--preprocess", f.preprocess, "comma-separated list, e.g. optimal-pr,trimming:5.25");
  app->add_option("--delta", f.delta, "start:stop:step or a,b,c");
  app->add_option("--d", f.d, "signal dimension");
  app->add_option("--trials", f.trials, "trials per delta");
}

ExperimentConfig build(CLI::App* app, Task task, const Flags& f) {
  ExperimentConfig c;
  c.task = task;
  c.seed = default_seed();
  if (task == Task::CdpDemo) c.preprocess = {"optimal-clamped"};
  if (task == Task::Amp) c.field = Field::Real;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw Error("config: cannot read " + f.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("config: ") + e.what());
    }
    j.erase("task");
    c = ExperimentConfig::from_json(j, c);
  }
  auto given = [&](const char* name) {
    const CLI::Option* o = app->get_option_no_throw(name);
    return o != nullptr && o->count() > 0;
  };
  if (given("--field")) c.field = parse_field(f.field);
  if (given("--channel")) c.channel = f.channel;
  if (given("--sigma2")) c.sigma2 = f.sigma2;
  if (given("--seed")) c.seed = f.seed;
  if (given("--output")) c.output = f.output;
  if (given("--preprocess")) {
    c.preprocess.clear();
    std::string cur;
    for (char ch : f.preprocess + ",") {
      if (ch == ',') {
        if (!cur.empty()) c.preprocess.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
  }
  if (given("--delta")) c.deltas = parse_delta_grid(f.delta);
  if (given("--relative")) c.delta_relative = f.relative;
  if (given("--d")) c.d = f.d;
  if (given("--trials")) c.trials = f.trials;
  if (given("--solver")) c.solver = f.solver;
  if (given("--shift")) c.shift = f.shift;
  if (given("--tol")) c.tol = f.tol;
  if (given("--max-iter")) c.max_iter = f.max_iter;
  if (given("--lanczos-max-dim")) c.lanczos_max_dim = f.lanczos_max_dim;
  if (given("--mu0")) c.mu0 = f.mu0;
  if (given("--t-max")) c.t_max = f.t_max;
  if (given("--onsager")) c.onsager = f.onsager;
  if (given("--linearize")) c.linearize = f.linearize;
  if (given("--image")) c.image = f.image;
  if (given("--width")) c.width = f.width;
  if (given("--height")) c.height = f.height;
  if (given("--views")) c.views = f.views;
  if (given("--law")) c.law = f.law;
  if (given("--alpha")) c.alpha = f.alpha;
  if (given("--n")) c.n = f.n;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weak recovery thresholds, optimal spectral initialization and AMP for generalized linear models"};
  app.require_subcommand(1);
  Flags f;

  auto* th = app.add_subcommand("thresholds", "delta_l and delta_u of a channel, plus F and integrand tables");
  add_common(th, f);

  auto* pr = app.add_subcommand("predict", "asymptotic overlap and top eigenvalues over a delta grid");
  add_common(pr, f);
  add_sweep(pr, f);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo sweep of the spectral estimator");
  add_common(sim, f);
  add_sweep(sim, f);
  sim->add_option("--solver", f.solver, "power | lanczos | dense");
  sim->add_option("--shift", f.shift, "power-method shift (default: automatic)");
  sim->add_option("--tol", f.tol, "eigensolver tolerance");
  sim->add_option("--max-iter", f.max_iter, "power-method iteration cap");
  sim->add_option("--lanczos-max-dim", f.lanczos_max_dim, "Krylov dimension cap");

  auto* amp = app.add_subcommand("amp", "AMP runs against state evolution (real field)");
  add_common(amp, f);
  add_sweep(amp, f);
  amp->add_flag("--relative", f.relative, "deltas are multiples of delta_u");
  amp->add_option("--mu0", f.mu0, "initial correlation");
  amp->add_option("--t-max", f.t_max, "iterations");
  amp->add_option("--onsager", f.onsager, "se | empirical | off");
  amp->add_flag("--linearize", f.linearize, "also report the top eigenvalue of the linearized operator");

  auto* cdp = app.add_subcommand("cdp-demo", "spectral estimate from coded diffraction patterns of an image");
  add_common(cdp, f);
  cdp->add_option("--image", f.image, "binary PGM; default: synthetic gradient");
  cdp->add_option("--width", f.width, "synthetic image width");
  cdp->add_option("--height", f.height, "synthetic image height");
  cdp->add_option("--L,--views", f.views, "number of masks, 2..12");
  cdp->add_option("--preprocess", f.preprocess, "preprocessing function (default optimal-clamped)");
  cdp->add_option("--alpha", f.alpha, "power-method shift (default 100)");
  cdp->add_option("--tol", f.tol, "power-method tolerance");
  cdp->add_option("--max-iter", f.max_iter, "power-method iteration cap");

  auto* spk = app.add_subcommand("spike-check", "simulated top eigenvalue of (1/n) U M U^* against the spike map");
  spk->add_option("--law", f.law, "two-atom:a,b[,p] or point:c");
  spk->add_option("--delta", f.delta, "n / d");
  spk->add_option("--alpha", f.alpha, "spike alpha*")->required();
  spk->add_option("--n", f.n, "rows");
  spk->add_option("--trials", f.trials, "seeds");
  spk->add_option("--seed", f.seed, "base seed");
  spk->add_option("--output,-o", f.output, "output file prefix");
  spk->add_option("--config", f.config, "JSON config file");

  CLI11_PARSE(app, argc, argv);

  const std::pair<CLI::App*, Task> subs[] = {{th, Task::Thresholds}, {pr, Task::Predict},  {sim, Task::Simulate},
                                             {amp, Task::Amp},       {cdp, Task::CdpDemo}, {spk, Task::SpikeCheck}};
  for (const auto& [sub, task] : subs) {
    if (!sub->parsed()) continue;
    ExperimentConfig cfg;
    try {
      cfg = build(sub, task, f);
      cfg.validate();
    } catch (const Error& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return 2;
    }
    try {
      const nlohmann::json out = run(cfg);
      std::cout << out.dump(2) << '\n';
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 0;
}
