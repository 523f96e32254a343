#include "lab/experiments.hpp"

#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <thread>
#include <vector>

#include "json.hpp"
#include "lab/density_functional.hpp"
#include "lab/foundations.hpp"
#include "lab/missing_data.hpp"
#include "lab/mixed_model.hpp"
#include "lab/partial_linear.hpp"
#include "lab/sequence_models.hpp"
#include "lab/stats.hpp"

namespace lab {

namespace {

double positive_param(const ExperimentConfig& cfg, const std::string& name,
                      double fallback) {
  const double value = cfg.param_or(name, fallback);
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument("parameter '" + name +
                                "' must be positive");
  }
  return value;
}

std::size_t count_param(const ExperimentConfig& cfg, const std::string& name,
                        std::size_t fallback) {
  const double value =
      cfg.param_or(name, static_cast<double>(fallback));
  if (!(value >= 0.0) || value != std::floor(value) || value > 1e9) {
    throw std::invalid_argument("parameter '" + name +
                                "' must be a nonnegative integer");
  }
  return static_cast<std::size_t>(value);
}

struct Experiment {
  ExperimentInfo info;
  std::function<ReplicateFn(const ExperimentConfig&)> factory;
};

ReplicateFn make_neyman_scott(const ExperimentConfig& cfg) {
  MixedModelTruth truth;
  truth.kappa_w = cfg.param_or("kappa_w", 0.0);
  truth.observe_rate = cfg.param_or("observe_rate", 0.3);
  truth.validate();
  for (std::size_t n : cfg.size_grid) {
    if (n < 50) {
      throw std::invalid_argument(
          "ex1_neyman_scott needs sample sizes of at least 50");
    }
  }
  return [truth](std::size_t n, rng::RngStream& stream) {
    const auto records = generate_hospitals(truth, n, stream);
    const double target = truth.params.theta;
    std::vector<Observation> obs;
    obs.push_back({"differencing", differencing_estimator(records), target});
    obs.push_back({"joint_all_records",
                   gaussian_joint_fit(records, true).params.theta, target});
    obs.push_back({"joint_complete_only",
                   gaussian_joint_fit(records, false).params.theta, target});
    return obs;
  };
}

ReplicateFn make_white_noise(const ExperimentConfig& cfg) {
  const double xi = positive_param(cfg, "xi", 0.3);
  const double nu = positive_param(cfg, "nu", 1.5);
  const std::size_t prior_grid = count_param(cfg, "prior_grid", 24);
  std::size_t p = count_param(cfg, "p", 0);
  if (p == 0) {
    double max_cutoff = 1.0;
    for (std::size_t n : cfg.size_grid) {
      max_cutoff =
          std::max(max_cutoff, std::pow(static_cast<double>(n),
                                        1.0 / (2.0 * nu - 1.0)));
    }
    p = std::max<std::size_t>(
        64, 2 * static_cast<std::size_t>(std::llround(max_cutoff)));
  }

  struct Bundle {
    WhiteNoiseSpec spec;
    WhiteNoiseInstance instance;
  };
  auto bundles = std::make_shared<std::map<std::size_t, Bundle>>();
  for (std::size_t n : cfg.size_grid) {
    WhiteNoiseSpec spec;
    spec.n = static_cast<double>(n);
    spec.p = p;
    spec.xi = xi;
    spec.nu = nu;
    spec.validate();
    const WhiteNoiseInstance instance = worst_case_instance(spec);
    bundles->emplace(n, Bundle{spec, instance});
  }
  return [bundles, prior_grid](std::size_t n, rng::RngStream& stream) {
    const Bundle& bundle = bundles->at(n);
    const SequenceData data =
        sample_sequence(bundle.spec, bundle.instance, stream);
    std::vector<Observation> obs;
    obs.push_back({"truncated_linear",
                   freq_functional_estimate(data, bundle.spec),
                   bundle.instance.theta});
    obs.push_back({"bounded_bayes",
                   bounded_bayes_functional(data, bundle.spec, prior_grid),
                   bundle.instance.theta});
    return obs;
  };
}

ReplicateFn make_missing_data(const ExperimentConfig& cfg) {
  PanelGenConfig panel;
  panel.p_law = PanelGenConfig::PLaw::coupled;
  panel.p_value = cfg.param_or("p_base", 0.4);
  panel.kappa = cfg.param_or("kappa", 0.2);
  panel.clamp_eps = cfg.param_or("clamp_eps", 1e-3);
  panel.w_law = PanelGenConfig::WLaw::strata;
  panel.stratum_weights = cfg.vector_or("stratum_weights", {0.1, 0.9});
  panel.stratum_fractions = cfg.vector_or("stratum_fractions", {0.5, 0.5});
  panel.n = cfg.size_grid.front();
  panel.validate();
  return [panel](std::size_t n, rng::RngStream& stream) {
    PanelGenConfig sized = panel;
    sized.n = n;
    const BernoulliPanel data = generate_panel(sized, stream);
    const double target = data.true_mean();
    std::vector<Observation> obs;
    obs.push_back({"ipw_ratio", ht_hajek(data), target});
    obs.push_back({"observed_mean", naive_bayes_mean(data), target});
    obs.push_back({"stratified_posterior",
                   stratified_bayes(data, sized.stratum_weights), target});
    return obs;
  };
}

ReplicateFn make_sparse_means(const ExperimentConfig& cfg) {
  const std::size_t p = count_param(cfg, "p", 1000);
  if (p < 1) {
    throw std::invalid_argument("parameter 'p' must be at least 1");
  }
  const double signal = positive_param(cfg, "signal", 4.0);
  const double sparsity_alpha = positive_param(cfg, "sparsity_alpha", 1.0);
  SpikeSlabPrior prior;
  prior.gamma = cfg.param_or("gamma", 0.01);
  prior.tau2 = cfg.param_or("tau2", 1.0);
  prior.validate();
  const double lambda_override = cfg.param_or("lambda", 0.0);

  auto lambdas = std::make_shared<std::map<std::size_t, double>>();
  for (std::size_t n : cfg.size_grid) {
    (*lambdas)[n] =
        lambda_override > 0.0
            ? lambda_override
            : optimal_lambda(static_cast<double>(n), static_cast<double>(p),
                             sparsity_alpha);
  }
  return [p, signal, prior, lambdas](std::size_t n,
                                     rng::RngStream& stream) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    const double needle = signal * scale;
    SequenceData data;
    data.n = static_cast<double>(n);
    data.w.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      const double mu = j == 0 ? needle : 0.0;
      data.w[j] = mu + scale * stream.normal(0.0, 1.0);
    }
    std::vector<Observation> obs;
    obs.push_back({"soft_threshold",
                   lasso_toy(data, lambdas->at(n))[0], needle});
    obs.push_back({"spike_slab_mean",
                   spike_slab_posterior(data.w[0], data.n, prior)
                       .mixture_mean(),
                   needle});
    return obs;
  };
}

ReplicateFn make_density_functional(const ExperimentConfig& cfg) {
  const double alpha = positive_param(cfg, "alpha", 0.4);
  const bool sine_base = cfg.param_or("sine_base", 1.0) != 0.0;
  const bool adversarial = cfg.param_or("adversarial", 0.0) != 0.0;
  const double c_correction = cfg.param_or("c_correction", 2.0);
  const std::size_t freq_bins_override = count_param(cfg, "freq_bins", 0);
  const std::size_t family_bins_override =
      count_param(cfg, "family_bins", 0);
  const HolderDensity f0 =
      sine_base ? sine_density(alpha) : uniform_density(alpha);

  struct Bundle {
    std::size_t freq_bins = 0;
    std::size_t family_bins = 0;
    std::shared_ptr<DensitySampler> sampler;
    double truth = 0.0;
  };
  auto bundles = std::make_shared<std::map<std::size_t, Bundle>>();
  for (std::size_t n : cfg.size_grid) {
    if (n < 4 || n % 2 != 0) {
      throw std::invalid_argument(
          "ex6_density_functional needs even sample sizes of at least 4");
    }
    Bundle bundle;
    bundle.freq_bins = freq_bins_override > 0
                           ? freq_bins_override
                           : default_freq_bins(static_cast<double>(n));
    if (adversarial) {
      bundle.family_bins =
          family_bins_override > 0
              ? family_bins_override
              : default_family_bins(static_cast<double>(n), alpha);
      const AdversarialDensity member(
          f0, adversarial_signs(f0, bundle.family_bins));
      bundle.sampler = std::make_shared<DensitySampler>(member);
      bundle.truth = integral_of_square(member);
    } else {
      bundle.sampler = std::make_shared<DensitySampler>(f0);
      bundle.truth = integral_of_square(f0);
    }
    bundles->emplace(n, bundle);
  }
  return [bundles, f0, c_correction, adversarial](std::size_t n,
                                                  rng::RngStream& stream) {
    const Bundle& bundle = bundles->at(n);
    std::vector<double> points(n);
    for (std::size_t i = 0; i < n; ++i) {
      points[i] = bundle.sampler->draw(stream);
    }
    std::vector<Observation> obs;
    const HistogramPair split =
        histogram_split(points, bundle.freq_bins, stream);
    obs.push_back({"two_split_freq", theta_hat_freq(split, c_correction),
                   bundle.truth});
    if (adversarial) {
      const auto counts = bin_counts(points, bundle.family_bins);
      obs.push_back(
          {"posterior_plugin", theta_bayes_plugin(counts, f0),
           bundle.truth});
    }
    return obs;
  };
}

ReplicateFn make_partial_linear(const ExperimentConfig& cfg) {
  const std::size_t p = count_param(cfg, "p", 10);
  const std::size_t m = count_param(cfg, "m", 3);
  const double alpha_override = cfg.param_or("alpha", 0.0);

  struct Bundle {
    PlmDesign design;
    double alpha = 0.0;
  };
  auto bundles = std::make_shared<std::map<std::size_t, Bundle>>();
  for (std::size_t n : cfg.size_grid) {
    Bundle bundle;
    bundle.design = adversarial_disjoint_design(n, p, m);
    bundle.alpha =
        alpha_override > 0.0
            ? alpha_override
            : 8.0 * std::max(bundle.design.var_zeta, bundle.design.var_xi);
    bundles->emplace(n, bundle);
  }
  return [bundles](std::size_t n, rng::RngStream& stream) {
    const Bundle& bundle = bundles->at(n);
    const PlmData data = generate_plm(bundle.design, stream);
    std::vector<Observation> obs;
    obs.push_back({"exp_weighted_ratio",
                   beta_hat_plm(data.w, data.x, data.y, bundle.design.m,
                                bundle.alpha),
                   bundle.design.beta});
    obs.push_back({"min_rss_ratio",
                   beta_hat_minrss(data.w, data.x, data.y, bundle.design.m),
                   bundle.design.beta});
    return obs;
  };
}

ReplicateFn make_persistence(const ExperimentConfig& cfg) {
  const double delta_param = cfg.param_or("delta", 0.0);
  const FiniteModel model = two_point_gaussian_model();
  const double delta =
      delta_param > 0.0 ? delta_param : model.default_threshold();
  const GridEstimator mle = grid_mle(model);
  auto oracles = std::make_shared<std::map<std::size_t, TwoPointOracle>>();
  for (std::size_t n : cfg.size_grid) {
    oracles->emplace(n, two_point_exceedance_oracle(n));
  }
  return [model, mle, delta, oracles](std::size_t n,
                                      rng::RngStream& stream) {
    const TwoPointOracle& oracle = oracles->at(n);
    const ChainDraw draw =
        chain_replicate(model, {0.5, 0.5}, mle, n, stream);
    const auto miss = [&](double a, double b) {
      return model.loss(a, b) > delta ? 1.0 : 0.0;
    };
    std::vector<Observation> obs;
    obs.push_back({"estimator_miss", miss(draw.parameter, draw.estimate),
                   oracle.p_estimator});
    obs.push_back({"posterior_draw_miss",
                   miss(draw.posterior_draw, draw.estimate),
                   oracle.p_posterior});
    obs.push_back({"pair_miss", miss(draw.parameter, draw.posterior_draw),
                   oracle.p_pair});
    return obs;
  };
}

ReplicateFn make_bayes_bias(const ExperimentConfig& cfg) {
  const double a = positive_param(cfg, "a", 1.0);
  const double b = positive_param(cfg, "b", 1.0);
  auto models = std::make_shared<std::map<std::size_t, JointModel>>();
  for (std::size_t n : cfg.size_grid) {
    if (n > 100000) {
      throw std::invalid_argument(
          "thm_bayes_bias uses n as the trial count; keep it <= 1e5");
    }
    models->emplace(n, beta_binomial_model(a, b, static_cast<int>(n)));
  }
  const double prior_mean = a / (a + b);
  return [models, prior_mean](std::size_t n, rng::RngStream& stream) {
    const JointModel& model = models->at(n);
    const double theta = model.sample_parameter(stream);
    const double x = model.sample_observation(theta, stream);
    std::vector<Observation> obs;
    obs.push_back({"posterior_mean", model.posterior_mean(x), prior_mean});
    obs.push_back({"parameter_draw", theta, prior_mean});
    return obs;
  };
}

const std::vector<Experiment>& registry() {
  static const std::vector<Experiment> experiments = [] {
    std::vector<Experiment> list;
    list.push_back(
        {{"ex1_neyman_scott",
          "Hierarchical Gaussian panel: differencing versus joint "
          "maximum likelihood with and without incomplete records.",
          {{"kappa_w",
            "second-visit observation tilt towards large responses "
            "(default 0)"},
           {"observe_rate", "marginal second-visit rate (default 0.3)"}}},
         make_neyman_scott});
    list.push_back(
        {{"ex2_white_noise",
          "Weighted linear functional of a bounded Gaussian sequence: "
          "truncated sum versus bounded-prior posterior mean on the "
          "hardest feasible mean sequence.",
          {{"p", "number of coordinates (default auto from the grid)"},
           {"xi", "weight decay exponent in (0, 1/2) (default 0.3)"},
           {"nu", "bound decay exponent, nu + xi > 1 (default 1.5)"},
           {"prior_grid",
            "quadrature nodes for the posterior mean (default 24)"}}},
         make_white_noise});
    list.push_back(
        {{"ex4_missing_data",
          "Bernoulli panel with known selection weights: inverse-"
          "probability ratio versus the observed mean and the stratified "
          "posterior mean.",
          {{"kappa",
            "coupling of success probabilities to the weights (default "
            "0.2)"},
           {"p_base", "base success level (default 0.4)"},
           {"clamp_eps", "probability clamp margin (default 1e-3)"},
           {"stratum_weights",
            "selection probability per stratum (default 0.1 0.9)"},
           {"stratum_fractions",
            "population share per stratum (default 0.5 0.5)"}}},
         make_missing_data});
    list.push_back(
        {{"ex5_sparse_means",
          "Sparse Gaussian sequence with one needle coordinate: soft "
          "thresholding at the tail-calibrated penalty versus the "
          "spike-and-slab posterior mean.",
          {{"p", "number of coordinates (default 1000)"},
           {"signal",
            "needle amplitude in noise units, mu_1 = signal/sqrt(n) "
            "(default 4)"},
           {"gamma", "slab probability (default 0.01)"},
           {"tau2", "slab variance (default 1)"},
           {"lambda", "penalty override (default 0 = calibrated)"},
           {"sparsity_alpha",
            "decay exponent in the penalty formula (default 1)"}}},
         make_sparse_means});
    list.push_back(
        {{"ex6_density_functional",
          "Integral of the squared density: sample-splitting histogram "
          "estimator, optionally against the posterior plug-in on the "
          "least favorable bump-family member.",
          {{"alpha", "roughness exponent (default 0.4)"},
           {"sine_base",
            "1 = sine base density, 0 = uniform (default 1)"},
           {"adversarial",
            "1 = sample the least favorable family member and add the "
            "posterior plug-in (default 0)"},
           {"c_correction",
            "additive small-count correction (default 2)"},
           {"freq_bins", "histogram bins override (default 0 = auto)"},
           {"family_bins", "family bins override (default 0 = auto)"}}},
         make_density_functional});
    list.push_back(
        {{"ex7_partial_linear",
          "Partial linear regression with disjoint working supports: "
          "exponentially weighted subset aggregation versus the single "
          "minimum-RSS subset.",
          {{"p", "number of regressors (default 10)"},
           {"m", "working model size (default 3)"},
           {"alpha",
            "aggregation temperature (default 0 = 8 max noise "
            "variance)"}}},
         make_partial_linear});
    list.push_back(
        {{"thm1_persistence",
          "Two-point Gaussian chain parameter -> data -> posterior draw: "
          "exceedance indicators for the estimator, the posterior draw, "
          "and the pair, with exact probabilities as the targets.",
          {{"delta",
            "exceedance threshold (default 0 = half the grid spacing)"}}},
         make_persistence});
    list.push_back(
        {{"thm_bayes_bias",
          "Beta-binomial posterior mean versus the parameter draw; the "
          "sample size is the trial count.",
          {{"a", "prior shape a (default 1)"},
           {"b", "prior shape b (default 1)"}}},
         make_bayes_bias});
    std::sort(list.begin(), list.end(),
              [](const Experiment& x, const Experiment& y) {
                return x.info.id < y.info.id;
              });
    return list;
  }();
  return experiments;
}

const Experiment& find_experiment(const std::string& id) {
  for (const Experiment& experiment : registry()) {
    if (experiment.info.id == id) return experiment;
  }
  throw std::invalid_argument("unknown experiment id '" + id + "'");
}

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.12g", value);
  return buffer;
}

std::string csv_escape(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace

McSummary summarize(const std::string& experiment_id,
                    const std::string& estimator, std::size_t n,
                    std::uint64_t master_seed,
                    const std::vector<double>& values,
                    const std::vector<double>& truths) {
  if (values.empty() || values.size() != truths.size()) {
    throw std::invalid_argument(
        "summarize needs equal nonempty values and truths");
  }
  stats::RunningMoments value_moments;
  stats::RunningMoments error_moments;
  for (std::size_t r = 0; r < values.size(); ++r) {
    value_moments.add(values[r]);
    error_moments.add(values[r] - truths[r]);
  }
  McSummary summary;
  summary.experiment_id = experiment_id;
  summary.estimator = estimator;
  summary.n = n;
  summary.reps = values.size();
  summary.master_seed = master_seed;
  summary.mean = value_moments.mean();
  summary.bias = error_moments.mean();
  summary.variance = error_moments.variance_population();
  summary.rmse =
      std::sqrt(summary.bias * summary.bias + summary.variance);
  summary.mc_se =
      std::sqrt(summary.variance / static_cast<double>(summary.reps));
  summary.ci_low = summary.mean - stats::kZ975 * summary.mc_se;
  summary.ci_high = summary.mean + stats::kZ975 * summary.mc_se;
  return summary;
}

std::vector<ExperimentInfo> list_experiments() {
  std::vector<ExperimentInfo> infos;
  for (const Experiment& experiment : registry()) {
    infos.push_back(experiment.info);
  }
  return infos;
}

const ExperimentInfo& describe_experiment(const std::string& id) {
  return find_experiment(id).info;
}

ReplicateFn make_replicator(const ExperimentConfig& cfg) {
  cfg.validate();
  return find_experiment(cfg.experiment_id).factory(cfg);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                std::size_t workers) {
  const ReplicateFn replicate = make_replicator(cfg);

  struct Slot {
    std::vector<Observation> observations;
    std::string error;
  };
  const std::size_t total = cfg.size_grid.size() * cfg.reps;
  std::vector<Slot> slots(total);
  std::atomic<std::size_t> next{0};

  const auto run_tasks = [&]() {
    while (true) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total) break;
      const std::size_t grid_index = task / cfg.reps;
      const std::size_t rep = task % cfg.reps;
      const std::size_t n = cfg.size_grid[grid_index];
      try {
        rng::RngStream rep_stream(cfg.master_seed,
                                  static_cast<std::uint64_t>(rep));
        rng::RngStream stream =
            rep_stream.substream(static_cast<std::uint64_t>(n));
        slots[task].observations = replicate(n, stream);
      } catch (const std::exception& e) {
        slots[task].observations.clear();
        slots[task].error = e.what();
      }
    }
  };

  const std::size_t thread_count =
      std::max<std::size_t>(1, std::min(workers, total));
  if (thread_count == 1) {
    run_tasks();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (std::size_t t = 0; t < thread_count; ++t) {
      pool.emplace_back(run_tasks);
    }
    for (std::thread& thread : pool) thread.join();
  }

  ExperimentResult result;
  std::string first_error;
  for (std::size_t grid_index = 0; grid_index < cfg.size_grid.size();
       ++grid_index) {
    const std::size_t n = cfg.size_grid[grid_index];
    std::vector<std::string> estimator_order;
    std::map<std::string, std::pair<std::vector<double>,
                                    std::vector<double>>> collected;
    for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
      const Slot& slot = slots[grid_index * cfg.reps + rep];
      if (!slot.error.empty()) {
        ++result.failed_replications;
        if (first_error.empty()) first_error = slot.error;
        RawRow row;
        row.n = n;
        row.rep = rep;
        row.value = std::numeric_limits<double>::quiet_NaN();
        row.truth = std::numeric_limits<double>::quiet_NaN();
        row.error = slot.error;
        result.raw.push_back(row);
        continue;
      }
      for (const Observation& obs : slot.observations) {
        auto it = collected.find(obs.estimator);
        if (it == collected.end()) {
          estimator_order.push_back(obs.estimator);
          it = collected.emplace(obs.estimator,
                                 std::make_pair(std::vector<double>{},
                                                std::vector<double>{}))
                   .first;
        }
        it->second.first.push_back(obs.value);
        it->second.second.push_back(obs.truth);
        RawRow row;
        row.estimator = obs.estimator;
        row.n = n;
        row.rep = rep;
        row.value = obs.value;
        row.truth = obs.truth;
        result.raw.push_back(row);
      }
    }
    for (const std::string& estimator : estimator_order) {
      const auto& [values, truths] = collected.at(estimator);
      result.summaries.push_back(summarize(cfg.experiment_id, estimator, n,
                                           cfg.master_seed, values,
                                           truths));
    }
  }

  if (result.failed_replications * 100 > total) {
    throw std::runtime_error(
        std::to_string(result.failed_replications) + " of " +
        std::to_string(total) + " replications failed; first error: " +
        first_error);
  }
  return result;
}

std::string summary_csv(const std::vector<McSummary>& summaries) {
  std::string out =
      "experiment_id,estimator,n,reps,mean,bias,variance,rmse,mc_se,"
      "ci_low,ci_high,master_seed\n";
  for (const McSummary& s : summaries) {
    out += csv_escape(s.experiment_id) + ',' + csv_escape(s.estimator) +
           ',' + std::to_string(s.n) + ',' + std::to_string(s.reps) + ',' +
           format_double(s.mean) + ',' + format_double(s.bias) + ',' +
           format_double(s.variance) + ',' + format_double(s.rmse) + ',' +
           format_double(s.mc_se) + ',' + format_double(s.ci_low) + ',' +
           format_double(s.ci_high) + ',' + std::to_string(s.master_seed) +
           '\n';
  }
  return out;
}

std::string summary_json(const std::vector<McSummary>& summaries) {
  nlohmann::json array = nlohmann::json::array();
  for (const McSummary& s : summaries) {
    array.push_back({{"experiment_id", s.experiment_id},
                     {"estimator", s.estimator},
                     {"n", s.n},
                     {"reps", s.reps},
                     {"mean", s.mean},
                     {"bias", s.bias},
                     {"variance", s.variance},
                     {"rmse", s.rmse},
                     {"mc_se", s.mc_se},
                     {"ci_low", s.ci_low},
                     {"ci_high", s.ci_high},
                     {"master_seed", s.master_seed}});
  }
  return array.dump(2) + "\n";
}

std::string raw_csv(const std::vector<RawRow>& rows) {
  std::string out = "estimator,n,rep,value,truth,error\n";
  for (const RawRow& row : rows) {
    out += csv_escape(row.estimator) + ',' + std::to_string(row.n) + ',' +
           std::to_string(row.rep) + ',' + format_double(row.value) + ',' +
           format_double(row.truth) + ',' + csv_escape(row.error) + '\n';
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  out << text;
  out.flush();
  if (!out) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

void write_gzip_file(const std::string& path, const std::string& text) {
  z_stream strm;
  std::memset(&strm, 0, sizeof(strm));
  if (deflateInit2(&strm, 9, Z_DEFLATED, 15 + 16, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK) {
    throw std::runtime_error("deflateInit2 failed for '" + path + "'");
  }
  gz_header header;
  std::memset(&header, 0, sizeof(header));
  header.time = 0;
  header.os = 3;
  deflateSetHeader(&strm, &header);

  std::string compressed;
  compressed.resize(deflateBound(&strm, text.size()) + 32);
  strm.next_in = reinterpret_cast<Bytef*>(
      const_cast<char*>(text.data()));
  strm.avail_in = static_cast<uInt>(text.size());
  strm.next_out = reinterpret_cast<Bytef*>(compressed.data());
  strm.avail_out = static_cast<uInt>(compressed.size());
  const int status = deflate(&strm, Z_FINISH);
  const std::size_t written = compressed.size() - strm.avail_out;
  deflateEnd(&strm);
  if (status != Z_STREAM_END) {
    throw std::runtime_error("gzip compression failed for '" + path + "'");
  }
  compressed.resize(written);
  write_text_file(path, compressed);
}

SlopeFit slope_fit(const std::vector<McSummary>& points) {
  if (points.size() < 3) {
    throw std::invalid_argument("slope_fit needs at least three points");
  }
  std::vector<double> log_n;
  std::vector<double> log_rmse;
  for (const McSummary& point : points) {
    if (point.estimator != points.front().estimator) {
      throw std::invalid_argument(
          "slope_fit expects a single estimator's summaries");
    }
    if (!(point.rmse > 0.0) || !std::isfinite(point.rmse)) {
      throw std::invalid_argument("slope_fit needs positive rmse values");
    }
    log_n.push_back(std::log(static_cast<double>(point.n)));
    log_rmse.push_back(std::log(point.rmse));
  }
  const stats::OlsFit fit = stats::ols(log_n, log_rmse);
  return SlopeFit{fit.slope, fit.r2};
}

}  // namespace lab
