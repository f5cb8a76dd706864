#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "atsmc/diagnostics.hpp"
#include "atsmc/dpm.hpp"
#include "atsmc/io.hpp"
#include "atsmc/lmm.hpp"
#include "atsmc/nrmii.hpp"
#include "atsmc/smc.hpp"
#include "atsmc/ts.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace atsmc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitIo = 4;

struct Overrides {
  std::string out;
  long seed = -1;
  int particles = -1;
  double epsilon = -1.0;
  int threads = -1;
};

io::RunConfig load_config(const std::string& path, const Overrides& ov) {
  io::RunConfig cfg = io::parse_config(path);
  if (!ov.out.empty()) cfg.out_dir = ov.out;
  if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
  if (ov.particles > 0) cfg.particles = ov.particles;
  if (ov.epsilon > 0.0) cfg.epsilon = ov.epsilon;
  if (ov.threads > 0) cfg.threads = ov.threads;
  cfg.validate();
  return cfg;
}

std::vector<double> load_series(const io::RunConfig& cfg) {
  std::vector<double> y = io::read_column_csv(cfg.data_path);
  switch (cfg.preprocess) {
    case io::Preprocess::Scale10k:
      for (double& v : y) v /= 10000.0;
      break;
    case io::Preprocess::Standardize:
      ts::standardize(y);
      break;
    case io::Preprocess::None:
      break;
  }
  return y;
}

dpm::NormalMixtureHyper hyper_from(const io::RunConfig& cfg,
                                   std::span<const double> y) {
  dpm::NormalMixtureHyper h = dpm::NormalMixtureHyper::from_data(y);
  h.sigma2 = cfg.sigma2;
  h.alpha = cfg.alpha;
  if (std::isfinite(cfg.mu0)) h.mu0 = cfg.mu0;
  if (std::isfinite(cfg.beta)) h.beta = cfg.beta;
  return h;
}

dpm::StickMixtureModel make_stick_model(const io::RunConfig& cfg,
                                        std::vector<double> y) {
  dpm::MixtureOptions opt;
  opt.truncation = cfg.truncation == io::TruncationKind::Sb
                       ? dpm::StickTruncation::Sb
                       : dpm::StickTruncation::Rsb;
  opt.stick.kind = cfg.model == io::ModelKind::Pym
                       ? measures::BetaStickParams::Kind::PoissonDirichlet
                       : measures::BetaStickParams::Kind::DirichletProcess;
  opt.stick.mass = cfg.mass;
  opt.stick.discount = cfg.model == io::ModelKind::Pym ? cfg.discount : 0.0;
  opt.mass_prior = cfg.mass_fixed ? dpm::MassPrior::Fixed
                                  : dpm::MassPrior::UnitExponential;
  opt.infer_discount = cfg.model == io::ModelKind::Pym;
  opt.initial_atoms = cfg.initial_atoms;
  const dpm::NormalMixtureHyper h = hyper_from(cfg, y);
  return dpm::StickMixtureModel(std::move(y), h, opt);
}

smc::SmcConfig smc_config(const io::RunConfig& cfg) {
  smc::SmcConfig s;
  s.particles = cfg.particles;
  s.epsilon = cfg.epsilon;
  s.m_stop = cfg.m_stop;
  s.n_rejuv = cfg.n_rejuv;
  s.resample_threshold = cfg.resample_threshold;
  s.max_iters = cfg.max_iters;
  s.burn_in = cfg.burn_in;
  s.thin = cfg.thin;
  s.seed = cfg.seed;
  s.threads = cfg.threads;
  s.discrepancy = cfg.discrepancy == "predictive" ? smc::Discrepancy::Predictive
                                                  : smc::Discrepancy::EssDiff;
  s.predictive_point = cfg.predictive_point;
  return s;
}

std::vector<double> make_grid(double lo, double hi, double step) {
  std::vector<double> g;
  for (double x = lo; x <= hi + 1e-12; x += step) g.push_back(x);
  return g;
}

template <class State, class F>
std::pair<double, double> weighted_mean_sd(const smc::ParticleSystem<State>& sys,
                                           F&& f) {
  const double m = smc::estimate(sys, f);
  const double v = smc::estimate(sys, [&](const State& s) {
    const double d = f(s) - m;
    return d * d;
  });
  return {m, std::sqrt(v)};
}

void write_summary(const fs::path& dir, ordered_json& summary) {
  io::write_text(dir / "summary.json", summary.dump(2) + "\n");
}

template <class Model>
int run_mixture_family(const Model& model, const io::RunConfig& cfg,
                       const fs::path& outdir,
                       const std::function<void(const smc::ParticleSystem<typename Model::State>&,
                                                ordered_json&)>& add_summaries) {
  const auto t0 = std::chrono::steady_clock::now();
  smc::RunResult<Model> result;
  try {
    result = smc::run_adaptive(model, smc_config(cfg));
  } catch (const smc::EssCollapseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNotConverged;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  io::write_ess_trace(outdir / "ess_trace.csv", result.system.ess_trace);
  const std::vector<double> grid = make_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_step);
  const std::vector<double> density =
      dpm::posterior_mean_density(model, result.system, grid);
  io::write_density_csv(outdir / "density_mixture.csv", "density", grid, density);

  ordered_json summary;
  summary["model"] = io::model_name(cfg.model);
  summary["truncation"] = io::truncation_name(cfg.truncation);
  summary["stop_index"] = result.diagnostics.stop_index;
  summary["converged"] = result.diagnostics.converged;
  summary["final_truncation_level"] = result.system.k;
  summary["final_ess"] = smc::ess_log(result.system.log_weights);
  summary["non_finite_particles"] = result.diagnostics.non_finite_particles;
  add_summaries(result.system, summary);
  write_summary(outdir, summary);

  if (cfg.save_particles) {
    std::ostringstream out;
    out << "index,log_weight,truncation\n";
    for (std::size_t j = 0; j < result.system.size(); ++j)
      out << j << "," << io::fmt17(result.system.log_weights[j]) << ","
          << model.truncation_size(result.system.particles[j]) << "\n";
    io::write_text(outdir / "particles.csv", out.str());
  }
  std::cout << "stop index R = " << result.diagnostics.stop_index
            << (result.diagnostics.converged ? "" : " (not converged)")
            << ", wall time " << wall << " s\n";
  return result.diagnostics.converged ? 0 : kExitNotConverged;
}

int run_command(const io::RunConfig& cfg) {
  fs::path outdir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory " << outdir << "\n";
    return kExitIo;
  }
  io::write_text(outdir / "config_effective.cfg", io::emit_config(cfg));

  switch (cfg.model) {
    case io::ModelKind::Dpm:
    case io::ModelKind::Pym: {
      std::vector<double> y = load_series(cfg);
      if (cfg.truncation == io::TruncationKind::Fk) {
        const dpm::NormalMixtureHyper h = hyper_from(cfg, y);
        const dpm::FkMixtureModel model(
            std::move(y), h, cfg.mass,
            cfg.mass_fixed ? dpm::MassPrior::Fixed : dpm::MassPrior::UnitExponential,
            cfg.initial_atoms);
        return run_mixture_family<dpm::FkMixtureModel>(
            model, cfg, outdir,
            [&](const auto& sys, ordered_json& s) {
              const auto [m, sd] = weighted_mean_sd(
                  sys, [](const dpm::FkState& st) { return st.mass; });
              s["posterior_mean_mass"] = m;
              s["posterior_sd_mass"] = sd;
            });
      }
      const dpm::StickMixtureModel model = make_stick_model(cfg, std::move(y));
      return run_mixture_family<dpm::StickMixtureModel>(
          model, cfg, outdir,
          [&](const auto& sys, ordered_json& s) {
            const auto [m, sd] = weighted_mean_sd(
                sys, [](const dpm::MixtureState& st) { return st.mass; });
            s["posterior_mean_mass"] = m;
            s["posterior_sd_mass"] = sd;
            if (cfg.model == io::ModelKind::Pym) {
              const auto [a, asd] = weighted_mean_sd(
                  sys, [](const dpm::MixtureState& st) { return st.discount; });
              s["posterior_mean_discount"] = a;
              s["posterior_sd_discount"] = asd;
            }
          });
    }
    case io::ModelKind::Nrmii: {
      std::vector<double> y = load_series(cfg);
      const dpm::NormalMixtureHyper h = hyper_from(cfg, y);
      const nrmii::CppMixtureModel model(
          std::move(y), h, cfg.mass, cfg.initial_atoms,
          cfg.level_scheme == "geometric" ? measures::LevelScheme::Geometric
                                          : measures::LevelScheme::OneAtom,
          cfg.xi);
      return run_mixture_family<nrmii::CppMixtureModel>(
          model, cfg, outdir,
          [&](const auto& sys, ordered_json& s) {
            const auto [k, ksd] = weighted_mean_sd(sys, [](const nrmii::CppState& st) {
              return static_cast<double>(st.jumps.size());
            });
            s["posterior_mean_atoms"] = k;
            s["posterior_sd_atoms"] = ksd;
            s["final_level"] = sys.particles.front().level;
          });
    }
    case io::ModelKind::Lmm: {
      const lmm::LmmData data = io::read_lmm_csv(cfg.data_path);
      const lmm::LmmModel model(data, lmm::LmmPriors{}, cfg.initial_atoms);
      const auto t0 = std::chrono::steady_clock::now();
      smc::RunResult<lmm::LmmModel> result;
      try {
        result = smc::run_adaptive(model, smc_config(cfg));
      } catch (const smc::EssCollapseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNotConverged;
      }
      const double wall = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0).count();
      io::write_ess_trace(outdir / "ess_trace.csv", result.system.ess_trace);
      const std::vector<double> grid =
          make_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_step);
      const std::vector<double> beta_grid = make_grid(-40.0, 200.0, 0.5);
      const lmm::LmmSummaries sums =
          lmm::lmm_summaries(model, result.system, grid, beta_grid);
      io::write_density_csv(outdir / "density_feps.csv", "density", grid, sums.f_eps);
      io::write_density_csv(outdir / "density_fgamma.csv", "density", grid, sums.f_gam);
      {
        std::ostringstream out;
        out << "coef,mean,sd,q025,q50,q975\n";
        for (std::size_t k = 0; k < sums.beta_mean.size(); ++k)
          out << k << "," << io::fmt17(sums.beta_mean[k]) << ","
              << io::fmt17(sums.beta_sd[k]) << "," << io::fmt17(sums.beta_q025[k])
              << "," << io::fmt17(sums.beta_q50[k]) << ","
              << io::fmt17(sums.beta_q975[k]) << "\n";
        io::write_text(outdir / "beta_marginals.csv", out.str());
      }
      {
        std::ostringstream out;
        out << "x";
        for (std::size_t k = 0; k < sums.beta_density.size(); ++k) out << ",beta" << k;
        out << "\n";
        for (std::size_t g = 0; g < beta_grid.size(); ++g) {
          out << io::fmt17(beta_grid[g]);
          for (const auto& col : sums.beta_density) out << "," << io::fmt17(col[g]);
          out << "\n";
        }
        io::write_text(outdir / "density_beta.csv", out.str());
      }
      ordered_json summary;
      summary["model"] = "lmm";
      summary["stop_index"] = result.diagnostics.stop_index;
      summary["converged"] = result.diagnostics.converged;
      summary["final_truncation_level"] = result.system.k;
      summary["final_ess"] = smc::ess_log(result.system.log_weights);
      for (std::size_t k = 0; k < sums.beta_mean.size(); ++k)
        summary["beta_mean"].push_back(sums.beta_mean[k]);
      const auto [me, sde] = weighted_mean_sd(
          result.system, [](const lmm::LmmState& s) { return s.eps.mass; });
      summary["posterior_mean_mass_eps"] = me;
      summary["posterior_sd_mass_eps"] = sde;
      write_summary(outdir, summary);
      std::cout << "stop index R = " << result.diagnostics.stop_index
                << (result.diagnostics.converged ? "" : " (not converged)")
                << ", wall time " << wall << " s\n";
      return result.diagnostics.converged ? 0 : kExitNotConverged;
    }
    case io::ModelKind::Ts: {
      std::vector<double> y = load_series(cfg);
      const ts::TsModel model(ts::TsData{std::move(y)}, ts::TsPriors{},
                              cfg.initial_atoms);
      const auto t0 = std::chrono::steady_clock::now();
      smc::RunResult<ts::TsModel> result;
      try {
        result = smc::run_adaptive(model, smc_config(cfg));
      } catch (const smc::EssCollapseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNotConverged;
      }
      const double wall = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0).count();
      io::write_ess_trace(outdir / "ess_trace.csv", result.system.ess_trace);
      const std::vector<double> grid =
          make_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_step);
      const std::vector<double> heat = make_grid(-2.5, 2.5, 0.1);
      const ts::TsSummaries sums = ts::ts_summaries(model, result.system, grid, heat);
      {
        std::ostringstream out;
        out << "t,y,median,lo95,hi95\n";
        for (std::size_t t = 0; t < sums.trend_median.size(); ++t)
          out << t + 1 << "," << io::fmt17(model.data().y[t]) << ","
              << io::fmt17(sums.trend_median[t]) << "," << io::fmt17(sums.trend_lo[t])
              << "," << io::fmt17(sums.trend_hi[t]) << "\n";
        io::write_text(outdir / "trend.csv", out.str());
      }
      io::write_density_csv(outdir / "density_nu.csv", "density", grid, sums.f_nu);
      io::write_density_csv(outdir / "density_eps.csv", "density", grid, sums.f_eps);
      {
        std::ostringstream out;
        out << "eps_prev,eps_next,density\n";
        for (std::size_t a = 0; a < heat.size(); ++a)
          for (std::size_t b = 0; b < heat.size(); ++b)
            out << io::fmt17(heat[a]) << "," << io::fmt17(heat[b]) << ","
                << io::fmt17(sums.transition[a * heat.size() + b]) << "\n";
        io::write_text(outdir / "transition_heatmap.csv", out.str());
      }
      ordered_json summary;
      summary["model"] = "ts";
      summary["stop_index"] = result.diagnostics.stop_index;
      summary["converged"] = result.diagnostics.converged;
      summary["final_truncation_level"] = result.system.k;
      summary["final_ess"] = smc::ess_log(result.system.log_weights);
      const auto [ae, aesd] = weighted_mean_sd(
          result.system, [](const ts::TsState& s) { return s.a_eps; });
      summary["posterior_mean_a_eps"] = ae;
      summary["posterior_sd_a_eps"] = aesd;
      write_summary(outdir, summary);
      std::cout << "stop index R = " << result.diagnostics.stop_index
                << (result.diagnostics.converged ? "" : " (not converged)")
                << ", wall time " << wall << " s\n";
      return result.diagnostics.converged ? 0 : kExitNotConverged;
    }
  }
  return kExitConfig;
}

int gold_standard_command(const io::RunConfig& cfg, long iters, long burn_in,
                          int fixed_atoms, int thin) {
  if (cfg.model != io::ModelKind::Dpm && cfg.model != io::ModelKind::Pym) {
    std::cerr << "error: gold-standard supports the stick mixture models\n";
    return kExitConfig;
  }
  fs::path outdir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) return kExitIo;
  io::RunConfig fixed = cfg;
  fixed.initial_atoms = fixed_atoms;
  std::vector<double> y = load_series(fixed);
  const dpm::StickMixtureModel model = make_stick_model(fixed, std::move(y));
  Rng rng(cfg.seed);
  const std::vector<double> grid = make_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_step);
  std::vector<std::string> names{"mass"};
  if (cfg.model == io::ModelKind::Pym) names.push_back("discount");
  const auto result = diag::gold_standard_run(
      model, burn_in, iters, thin, grid, names,
      [&](const dpm::MixtureState& s) {
        std::vector<double> v{s.mass};
        if (cfg.model == io::ModelKind::Pym) v.push_back(s.discount);
        return v;
      },
      rng);
  io::write_density_csv(outdir / "gold_density.csv", "density", grid, result.density);
  std::ostringstream out;
  out << "name,mean,se\n";
  for (std::size_t k = 0; k < result.names.size(); ++k)
    out << result.names[k] << "," << io::fmt17(result.means[k]) << ","
        << io::fmt17(result.se[k]) << "\n";
  io::write_text(outdir / "gold_summary.csv", out.str());
  std::cout << "gold standard finished: " << iters << " iterations at N="
            << fixed_atoms << "\n";
  return 0;
}

int geweke_command(const io::RunConfig& cfg, long iters, int thin) {
  fs::path outdir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) return kExitIo;
  Rng rng(cfg.seed);
  diag::GewekeResult result;
  switch (cfg.model) {
    case io::ModelKind::Dpm: {
      dpm::MixtureOptions opt;
      opt.truncation = dpm::StickTruncation::Rsb;
      opt.initial_atoms = 3;
      const dpm::NormalMixtureHyper h{0.0, 4.0, 3.0, 1.0};
      std::vector<double> y(5, 0.0);
      diag::DpmGewekeChain chain(dpm::StickMixtureModel(y, h, opt), 5);
      result = diag::geweke_test(chain, iters, thin, iters / thin, rng);
      break;
    }
    case io::ModelKind::Lmm: {
      lmm::LmmPriors priors;
      priors.s2_eps.upper = 25.0;
      priors.s2_gam.upper = 25.0;
      lmm::LmmData data;
      data.n = 2;
      data.periods = 2;
      data.p = 1;
      data.y = {0.0, 0.0, 0.0, 0.0};
      data.X = {1.0, 0.5, -0.5, 1.0};
      diag::LmmGewekeChain chain(lmm::LmmModel(data, priors, 2));
      result = diag::geweke_test(chain, iters, thin, iters / thin, rng);
      break;
    }
    case io::ModelKind::Ts: {
      ts::TsPriors priors;
      priors.s2_eps.upper = 25.0;
      priors.s2_trend.upper = 25.0;
      diag::TsGewekeChain chain(
          ts::TsModel(ts::TsData{{0.0, 0.0, 0.0, 0.0}}, priors, 2));
      result = diag::geweke_test(chain, iters, thin, iters / thin, rng);
      break;
    }
    default:
      std::cerr << "error: geweke supports models dpm, lmm, ts\n";
      return kExitConfig;
  }
  std::ostringstream out;
  out << "name,ks_statistic,p_value\n";
  for (std::size_t k = 0; k < result.names.size(); ++k)
    out << result.names[k] << "," << io::fmt17(result.ks[k].statistic) << ","
        << io::fmt17(result.ks[k].p_value) << "\n";
  io::write_text(outdir / "geweke.csv", out.str());
  std::cout << "geweke minimum p-value: " << result.min_p_value << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-truncation SMC for Bayesian nonparametric mixtures"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path;
  long gs_iters = 200000, gs_burn = 20000;
  int gs_atoms = 50, gs_thin = 10;
  long gw_iters = 20000;
  int gw_thin = 4;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file")->required();
    sub->add_option("--out", ov.out, "output directory override");
    sub->add_option("--seed", ov.seed, "seed override");
    sub->add_option("--particles", ov.particles, "particle count override");
    sub->add_option("--epsilon", ov.epsilon, "stopping tolerance override");
    sub->add_option("--threads", ov.threads, "worker thread override");
  };

  CLI::App* run = app.add_subcommand("run", "adaptive truncation run");
  add_common(run);
  CLI::App* gold = app.add_subcommand("gold-standard",
                                      "long fixed-truncation MCMC reference");
  add_common(gold);
  gold->add_option("--iters", gs_iters, "MCMC iterations");
  gold->add_option("--gs-burn-in", gs_burn, "MCMC burn-in");
  gold->add_option("--fixed-atoms", gs_atoms, "fixed truncation size");
  gold->add_option("--gs-thin", gs_thin, "thinning");
  CLI::App* geweke = app.add_subcommand("geweke", "joint-distribution test");
  add_common(geweke);
  geweke->add_option("--iters", gw_iters, "chain iterations");
  geweke->add_option("--gw-thin", gw_thin, "thinning");

  CLI11_PARSE(app, argc, argv);

  try {
    const io::RunConfig cfg = load_config(config_path, ov);
    if (run->parsed()) return run_command(cfg);
    if (gold->parsed()) return gold_standard_command(cfg, gs_iters, gs_burn,
                                                     gs_atoms, gs_thin);
    if (geweke->parsed()) return geweke_command(cfg, gw_iters, gw_thin);
  } catch (const io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
