#pragma once

#include <vector>

namespace outbreak {

/// Epidemiological and protocol parameters of the cluster simulator.
/// Defaults reproduce the SARS-CoV-2 parameterization (incubation, infectious
/// window, transmission, symptom and test characteristics).
struct EpiParams {
  double incubation_mean_days = 1.57;  // mean of the log-normal itself
  double incubation_std_days = 0.65;   // std of the log-normal itself
  int infectious_pre_onset_days = 2;
  int infectious_post_onset_days = 5;
  double base_transmission_prob = 0.03;
  double p_symptomatic_given_infected = 0.8;
  double p_false_symptom_per_day = 0.01;
  double p_high_transmissive_index = 0.109;
  double infectiousness_multiplier = 24.4;
  double test_sensitivity = 0.71;
  double test_specificity = 0.99;
  int tracing_delay_days = 3;
  int result_delay_days = 1;
  int cluster_size_min = 2;
  int cluster_size_max = 40;
  int episode_days = 30;
  int decision_start_day = 3;
  /// Daily infectious-to-susceptible transmission inside a cluster after the
  /// initial exposure. Off = exposure-only mode.
  bool within_cluster_transmission = true;

  /// Throws ParameterError on the first violated invariant.
  void validate() const;

  /// Per-contact infection probability at exposure, min(1, base x multiplier).
  double exposure_prob(bool high_transmissive_index) const;

  /// Underlying normal parameters (mu, sigma) matching the configured mean/std.
  double lognormal_mu() const;
  double lognormal_sigma() const;

  /// Largest representable onset offset; longer incubations are clamped here.
  int onset_cap() const { return episode_days; }
};

/// Probability mass of the rounded incubation offset k = min(cap, round(X)),
/// X ~ LogNormal, for k = 0..onset_cap().
std::vector<double> onset_offset_pmf(const EpiParams& epi);

/// Sample-path helper: the rounded, clamped onset offset for a raw draw.
int onset_offset_from_incubation(const EpiParams& epi, double incubation_days);

/// True when an individual infected on `infection_day` with symptom onset on
/// `onset_day` is infectious on `day`. The window is
/// [max(infection_day, onset - pre), onset + post).
bool infectious_on(const EpiParams& epi, int infection_day, int onset_day, int day);

/// True symptoms of a symptomatic case are shown on [onset, onset + post).
bool true_symptom_on(const EpiParams& epi, bool symptomatic, int onset_day, int day);

}  // namespace outbreak
