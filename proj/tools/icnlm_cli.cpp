//! Batch front end for the implicit copula neural linear model engine.
//! Pipeline: simulate -> fit -> predict -> diagnose. Every command is
//! deterministic given its flags; commands that draw random numbers require
//! an explicit --seed. Exit codes: 0 success, 1 I/O or input-file error,
//! 2 configuration or validation error, 3 inference failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "icnlm/copula_model.hpp"
#include "icnlm/data_io.hpp"
#include "icnlm/diagnostics.hpp"
#include "icnlm/errors.hpp"
#include "icnlm/hmc.hpp"
#include "icnlm/marginal.hpp"
#include "icnlm/predictive.hpp"
#include "icnlm/vi.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInference = 3;

icnlm::PriorSpec make_prior(const std::string& name, double nu) {
  icnlm::PriorSpec prior;
  prior.kind = name == "horseshoe" ? icnlm::PriorKind::horseshoe
                                   : icnlm::PriorKind::ridge;
  prior.nu = nu;
  return prior;
}

icnlm::MarginKind parse_margin(const std::string& name) {
  if (name == "gaussian") return icnlm::MarginKind::gaussian;
  if (name == "skewed_mixture") return icnlm::MarginKind::skewed_mixture;
  return icnlm::MarginKind::bimodal_mixture;
}

icnlm::BasisKind parse_basis(const std::string& name) {
  if (name == "identity") return icnlm::BasisKind::identity;
  if (name == "polynomial") return icnlm::BasisKind::polynomial;
  return icnlm::BasisKind::random_relu;
}

struct SimulateOptions {
  std::size_t n = 0;
  std::size_t p = 0;
  std::string prior = "ridge";
  double nu = 2.5;
  std::string margin = "gaussian";
  std::string basis = "identity";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_simulate(const SimulateOptions& opt) {
  icnlm::SyntheticSpec spec;
  spec.n = opt.n;
  spec.p = opt.p;
  spec.prior = make_prior(opt.prior, opt.nu);
  spec.margin_kind = parse_margin(opt.margin);
  spec.basis_kind = parse_basis(opt.basis);
  spec.seed = opt.seed;
  const auto [dataset, truth] = icnlm::generate_synthetic(spec);

  std::error_code ec;
  std::filesystem::create_directories(opt.out, ec);
  if (ec) throw icnlm::IoError("cannot create output directory " + opt.out);
  const std::string base = opt.out + "/";
  icnlm::save_dataset(base + "features.csv", base + "responses.csv", dataset);
  icnlm::save_fit(base + "truth.icnlm", truth,
                  icnlm::FitMetadata{spec.prior, spec.p, spec.seed});
  std::cout << "wrote " << base << "features.csv, responses.csv, truth.icnlm ("
            << opt.n << " rows, " << opt.p << " columns)\n";
  return kExitOk;
}

struct FitOptions {
  std::string features;
  std::string responses;
  std::string method;
  std::string prior = "ridge";
  double nu = 2.5;
  std::optional<double> bandwidth;
  std::uint64_t seed = 0;
  std::string out;
  // hmc
  std::size_t burnin = 2000;
  std::size_t keep = 10000;
  std::size_t leapfrog = 50;
  double step = 0.1;
  // vi
  std::size_t k = 3;
  std::size_t m_samples = 50;
  std::size_t max_iter = 10000;
};

int cmd_fit(const FitOptions& opt) {
  const auto ds = icnlm::load_dataset(opt.features, opt.responses);
  const auto margin = opt.bandwidth
                          ? icnlm::MarginalEstimate(ds.responses, *opt.bandwidth)
                          : icnlm::fit_kde(ds.responses);
  const auto pseudo = margin.to_pseudo(ds.responses);
  const Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(
      pseudo.data(), static_cast<Eigen::Index>(pseudo.size()));
  const icnlm::PriorSpec prior = make_prior(opt.prior, opt.nu);
  const icnlm::FitMetadata meta{prior,
                                static_cast<std::size_t>(ds.basis.p()),
                                opt.seed};

  icnlm::save_fit(opt.out + ".margin.icnlm", margin, meta);
  if (opt.method == "hmc") {
    icnlm::HmcSettings settings;
    settings.n_burnin = opt.burnin;
    settings.n_keep = opt.keep;
    settings.leapfrog_steps = opt.leapfrog;
    settings.initial_step = opt.step;
    settings.seed = opt.seed;
    const auto draws = icnlm::sample(z, ds.basis, prior, settings);
    icnlm::save_fit(opt.out + ".model.icnlm", draws, meta);
    std::string log = "stat\tvalue\n";
    log += "accept_rate\t" + icnlm::detail::dec_str(draws.accept_rate) + "\n";
    for (Eigen::Index j = 0; j < draws.ess.size(); ++j)
      log += "ess_" + std::to_string(j + 1) + "\t" +
             icnlm::detail::dec_str(draws.ess[j]) + "\n";
    icnlm::detail::write_file(opt.out + ".fitlog.tsv", log);
    std::cout << "hmc fit complete: acceptance rate "
              << icnlm::detail::dec_str(draws.accept_rate) << ", "
              << draws.draws.rows() << " kept draws\n";
  } else {
    const auto fit = icnlm::fit(z, ds.basis, prior,
                                static_cast<Eigen::Index>(opt.k),
                                opt.m_samples, opt.max_iter, opt.seed);
    icnlm::save_fit(opt.out + ".model.icnlm", fit, meta);
    std::string log = "iteration\telbo\n";
    for (std::size_t t = 0; t < fit.elbo_trace.size(); ++t)
      log += std::to_string(t + 1) + "\t" +
             icnlm::detail::dec_str(fit.elbo_trace[t]) + "\n";
    icnlm::detail::write_file(opt.out + ".fitlog.tsv", log);
    std::cout << "vi fit complete: " << fit.iterations_run << " iterations, "
              << (fit.converged ? "converged" : "not converged") << "\n";
  }
  return kExitOk;
}

struct LoadedModel {
  icnlm::FitMetadata meta;
  icnlm::MarginalEstimate margin;
  std::optional<icnlm::PosteriorDraws> draws;
  std::optional<icnlm::VariationalFit> vifit;
};

LoadedModel load_model(const std::string& prefix,
                       const std::optional<std::string>& requested_prior) {
  auto margin_fit = icnlm::load_fit(prefix + ".margin.icnlm");
  if (margin_fit.kind != "marginal" || !margin_fit.margin)
    throw icnlm::ParseError(prefix + ".margin.icnlm does not hold a margin");
  auto model_fit = icnlm::load_fit(prefix + ".model.icnlm");
  if (!model_fit.draws && !model_fit.vifit)
    throw icnlm::ParseError(prefix +
                            ".model.icnlm holds neither draws nor a VI fit");
  if (requested_prior) {
    const auto stored =
        model_fit.meta.prior.kind == icnlm::PriorKind::ridge ? "ridge"
                                                             : "horseshoe";
    if (*requested_prior != stored)
      throw icnlm::SpecMismatch("model was fit with the " + std::string(stored) +
                                " prior but " + *requested_prior +
                                " was requested");
  }
  return LoadedModel{model_fit.meta, std::move(*margin_fit.margin),
                     std::move(model_fit.draws), std::move(model_fit.vifit)};
}

icnlm::PredictivePosterior query_posterior(const LoadedModel& model,
                                           const Eigen::VectorXd& row) {
  if (model.draws)
    return icnlm::posterior_at(row, *model.draws, model.meta.prior,
                               model.margin);
  return icnlm::posterior_at(row, *model.vifit, model.meta.prior, model.margin);
}

std::string row_id(const icnlm::Dataset& ds, std::size_t i) {
  return ds.ids.empty() ? icnlm::detail::u64_str(i + 1) : ds.ids[i];
}

struct PredictOptions {
  std::string features;
  std::string model;
  std::string out;
  std::optional<double> alpha;
  std::optional<std::string> prior;
};

int cmd_predict(const PredictOptions& opt) {
  const auto ds = icnlm::load_features(opt.features);
  const auto model = load_model(opt.model, opt.prior);
  std::vector<icnlm::PredictionRow> rows(
      static_cast<std::size_t>(ds.basis.n()));
  for (Eigen::Index i = 0; i < ds.basis.n(); ++i) {
    const auto pp = query_posterior(model, ds.basis.values.row(i).transpose());
    auto& row = rows[static_cast<std::size_t>(i)];
    row.id = row_id(ds, static_cast<std::size_t>(i));
    const auto [mean, variance] = icnlm::mean_and_variance(pp);
    row.mean = mean;
    row.variance = variance;
    row.q05 = icnlm::quantile(pp, 0.05);
    row.q50 = icnlm::quantile(pp, 0.50);
    row.q95 = icnlm::quantile(pp, 0.95);
    if (opt.alpha) {
      const auto bounds = icnlm::interval(pp, *opt.alpha);
      row.lower = bounds.first;
      row.upper = bounds.second;
    }
  }
  icnlm::save_predictions(opt.out, rows, opt.alpha);
  std::cout << "wrote " << rows.size() << " predictions to " << opt.out << "\n";
  return kExitOk;
}

struct DiagnoseOptions {
  std::string features;
  std::string responses;
  std::string model;
  std::string out;
};

int cmd_diagnose(const DiagnoseOptions& opt) {
  const auto ds = icnlm::load_dataset(opt.features, opt.responses);
  const auto model = load_model(opt.model, std::nullopt);
  const auto n = static_cast<std::size_t>(ds.basis.n());

  std::vector<icnlm::PredictivePosterior> posteriors;
  posteriors.reserve(n);
  for (Eigen::Index i = 0; i < ds.basis.n(); ++i)
    posteriors.push_back(
        query_posterior(model, ds.basis.values.row(i).transpose()));

  std::vector<icnlm::CdfEvaluator> cdfs;
  cdfs.reserve(n);
  for (const auto& pp : posteriors)
    cdfs.push_back([&pp](double g) { return icnlm::cdf(pp, g); });

  std::vector<double> pit(n), point(n), errors_sq(n), variances(n);
  for (std::size_t i = 0; i < n; ++i) {
    pit[i] = icnlm::cdf(posteriors[i], ds.responses[i]);
    const auto [mean, variance] = icnlm::mean_and_variance(posteriors[i]);
    point[i] = mean;
    variances[i] = variance;
    errors_sq[i] = (mean - ds.responses[i]) * (mean - ds.responses[i]);
  }

  const std::vector<double> alphas{0.5, 0.2, 0.1, 0.05, 0.01};
  std::vector<icnlm::IntervalSet> interval_sets;
  for (double alpha : alphas) {
    icnlm::IntervalSet set{1.0 - alpha, {}};
    set.bounds.reserve(n);
    for (const auto& pp : posteriors)
      set.bounds.push_back(icnlm::interval(pp, alpha));
    interval_sets.push_back(std::move(set));
  }

  const double vmin = *std::min_element(variances.begin(), variances.end());
  const double vmax = *std::max_element(variances.begin(), variances.end());
  std::vector<double> thresholds(10);
  for (std::size_t t = 0; t < thresholds.size(); ++t)
    thresholds[t] =
        vmin + (vmax - vmin) * static_cast<double>(t + 1) / 10.0;

  icnlm::CalibrationReport report;
  report.marginal_curve = icnlm::marginal_calibration(
      cdfs, ds.responses, icnlm::calibration_y_grid(ds.responses));
  report.pit_curve =
      icnlm::probabilistic_calibration(pit, icnlm::default_level_grid());
  report.coverage_curve = icnlm::coverage(interval_sets, ds.responses);
  report.metrics = icnlm::point_metrics(point, ds.responses);
  report.error_variance_curve =
      icnlm::error_vs_variance(errors_sq, variances, thresholds);

  std::error_code ec;
  std::filesystem::create_directories(opt.out, ec);
  if (ec) throw icnlm::IoError("cannot create output directory " + opt.out);
  icnlm::save_report(opt.out + "/", report);

  double sup_gap = 0.0;
  for (const auto& pt : report.marginal_curve)
    sup_gap = std::max(sup_gap, std::abs(pt.average_cdf - pt.empirical_cdf));
  std::cout << "marginal_calibration_sup_gap\t"
            << icnlm::detail::dec_str(sup_gap) << "\n";
  std::cout << "mae\t" << icnlm::detail::dec_str(report.metrics.mae) << "\n";
  std::cout << "mse\t" << icnlm::detail::dec_str(report.metrics.mse) << "\n";
  std::cout << "wrote report files under " << opt.out << "/\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"implicit copula neural linear model"};
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand(
      "simulate", "generate a well-specified synthetic dataset");
  simulate->add_option("--n", sim.n, "observation count")->required();
  simulate->add_option("--p", sim.p, "basis dimension")->required();
  simulate->add_option("--prior", sim.prior, "shrinkage prior")
      ->check(CLI::IsMember({"ridge", "horseshoe"}));
  simulate->add_option("--nu", sim.nu, "ridge Weibull scale");
  simulate->add_option("--margin", sim.margin, "response margin shape")
      ->check(CLI::IsMember({"gaussian", "skewed_mixture", "bimodal_mixture"}));
  simulate->add_option("--basis", sim.basis, "basis construction")
      ->check(CLI::IsMember({"identity", "polynomial", "random_relu"}));
  simulate->add_option("--seed", sim.seed, "rng seed")->required();
  simulate->add_option("--out", sim.out, "output directory")->required();

  FitOptions fit;
  auto* fit_cmd =
      app.add_subcommand("fit", "fit margin and posterior to a dataset");
  fit_cmd->add_option("--features", fit.features, "feature CSV")->required();
  fit_cmd->add_option("--responses", fit.responses, "response file")
      ->required();
  fit_cmd->add_option("--method", fit.method, "inference method")
      ->check(CLI::IsMember({"hmc", "vi"}))
      ->required();
  fit_cmd->add_option("--prior", fit.prior, "shrinkage prior")
      ->check(CLI::IsMember({"ridge", "horseshoe"}))
      ->required();
  fit_cmd->add_option("--nu", fit.nu, "ridge Weibull scale");
  double bandwidth_value = 0.0;
  auto* bw_opt = fit_cmd->add_option("--bandwidth", bandwidth_value,
                                     "kernel bandwidth (default Silverman)");
  fit_cmd->add_option("--seed", fit.seed, "rng seed")->required();
  fit_cmd->add_option("--out", fit.out, "output path prefix")->required();
  fit_cmd->add_option("--burnin", fit.burnin, "hmc burn-in iterations");
  fit_cmd->add_option("--keep", fit.keep, "hmc kept draws");
  fit_cmd->add_option("--leapfrog", fit.leapfrog, "hmc leapfrog steps");
  fit_cmd->add_option("--step", fit.step, "hmc initial step size");
  fit_cmd->add_option("--k", fit.k, "vi factor rank");
  fit_cmd->add_option("--m-samples", fit.m_samples, "vi gradient samples");
  fit_cmd->add_option("--max-iter", fit.max_iter, "vi iteration cap");

  PredictOptions pred;
  auto* predict =
      app.add_subcommand("predict", "evaluate predictive summaries");
  predict->add_option("--features", pred.features, "query feature CSV")
      ->required();
  predict->add_option("--model", pred.model, "model path prefix")->required();
  predict->add_option("--out", pred.out, "prediction table path")->required();
  double alpha_value = 0.0;
  auto* alpha_opt = predict->add_option(
      "--alpha", alpha_value, "interval level for lower/upper columns");
  std::string prior_check;
  auto* prior_opt =
      predict->add_option("--prior", prior_check, "expected prior (cross-check)")
          ->check(CLI::IsMember({"ridge", "horseshoe"}));

  DiagnoseOptions diag;
  auto* diagnose =
      app.add_subcommand("diagnose", "write the calibration report");
  diagnose->add_option("--features", diag.features, "validation feature CSV")
      ->required();
  diagnose->add_option("--responses", diag.responses, "validation responses")
      ->required();
  diagnose->add_option("--model", diag.model, "model path prefix")->required();
  diagnose->add_option("--out", diag.out, "report output directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim);
    if (fit_cmd->parsed()) {
      if (bw_opt->count() > 0) fit.bandwidth = bandwidth_value;
      return cmd_fit(fit);
    }
    if (predict->parsed()) {
      if (alpha_opt->count() > 0) pred.alpha = alpha_value;
      if (prior_opt->count() > 0) pred.prior = prior_check;
      return cmd_predict(pred);
    }
    if (diagnose->parsed()) return cmd_diagnose(diag);
  } catch (const icnlm::NonFiniteElbo& e) {
    std::cerr << "inference failure: " << e.what() << "\n";
    return kExitInference;
  } catch (const icnlm::AdaptationFailure& e) {
    std::cerr << "inference failure: " << e.what() << "\n";
    return kExitInference;
  } catch (const icnlm::NonFiniteTrajectory& e) {
    std::cerr << "inference failure: " << e.what() << "\n";
    return kExitInference;
  } catch (const icnlm::SingularCovariance& e) {
    std::cerr << "inference failure: " << e.what() << "\n";
    return kExitInference;
  } catch (const icnlm::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const icnlm::ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const icnlm::ShapeError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const icnlm::ZeroColumn& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const icnlm::ChecksumMismatch& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const icnlm::VersionMismatch& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const icnlm::NonFiniteValue& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const icnlm::EngineError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
