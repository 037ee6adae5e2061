#include "outbreak/observation.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "outbreak/errors.hpp"

namespace outbreak {

namespace {

constexpr double kMissing = -1.0;
constexpr double kLo = -1.0;
constexpr double kHi = 4.0;

double clip(double v, int& clipped) {
  if (v < kLo) {
    ++clipped;
    return kLo;
  }
  if (v > kHi) {
    ++clipped;
    return kHi;
  }
  return v;
}

std::uint8_t at(const std::vector<std::uint8_t>& v, int day) {
  if (day < 0 || day >= static_cast<int>(v.size())) return 0;
  return v[static_cast<std::size_t>(day)];
}

}  // namespace

LocalObs build_local(const IndividualState& ind, const BeliefRecord& belief, double alpha3_active,
                     int day, const EpiParams& epi) {
  LocalObs o;
  for (int k = 0; k < 3; ++k) {
    o[k] = belief.q_past[static_cast<std::size_t>(k)];
    o[3 + k] = belief.q_future[static_cast<std::size_t>(k)];
    o[6 + k] = at(ind.symptom_observed_history, day - 2 + k);
    const int test_day = day - 3 + k;
    const bool tested = at(ind.tested_history, test_day) != 0;
    o[9 + k] = tested ? 1.0 : 0.0;
    double code = kMissing;
    if (tested && test_day + epi.result_delay_days <= day) {
      code = static_cast<double>(ind.reported_results[static_cast<std::size_t>(test_day)]);
    }
    o[12 + k] = code;
  }
  o[kAlpha3Slot] = alpha3_active;
  return o;
}

std::string serialize_local(const LocalObs& obs) {
  std::string out;
  char buf[32];
  for (int i = 0; i < kLocalObsDim; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", obs[i]);
    if (i > 0) out += ',';
    out += buf;
  }
  return out;
}

LocalObs parse_local(const std::string& text) {
  LocalObs o;
  std::stringstream ss(text);
  std::string field;
  int i = 0;
  while (std::getline(ss, field, ',')) {
    if (i >= kLocalObsDim) throw InputError("local observation has more than 16 fields");
    char* end = nullptr;
    o[i] = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0') throw InputError("bad number '" + field + "'");
    ++i;
  }
  if (i != kLocalObsDim) throw InputError("local observation has " + std::to_string(i) + " fields");
  return o;
}

const std::array<const char*, kLocalObsDim>& local_obs_columns() {
  static const std::array<const char*, kLocalObsDim> cols = {
      "q_past_3",   "q_past_2",   "q_past_1",   "q_future_1", "q_future_2", "q_future_3",
      "symptom_2",  "symptom_1",  "symptom_0",  "tested_3",   "tested_2",   "tested_1",
      "result_3",   "result_2",   "result_1",   "alpha3_active"};
  return cols;
}

int GlobalObs::active_blocks() const {
  return static_cast<int>(std::count_if(block_cluster.begin(), block_cluster.end(),
                                        [](int id) { return id >= 0; }));
}

GlobalObsScale global_scale(const SystemConfig& config) {
  GlobalObsScale s;
  s.n_clusters = std::max(1, config.n_clusters);
  s.nominal_budget = config.nominal_budget;
  s.cluster_size_max = config.epi.cluster_size_max;
  s.episode_days = config.epi.episode_days;
  s.result_delay_days = config.epi.result_delay_days;
  s.alpha3_true = config.alpha3_true;
  return s;
}

GlobalObs build_global(const MultiClusterState& state,
                       std::span<const ClusterBeliefTracker* const> beliefs,
                       const GlobalObsScale& scale, int n_max) {
  const auto ids = state.active_ids();
  if (static_cast<int>(ids.size()) > n_max) {
    throw CapacityError(std::to_string(ids.size()) + " active clusters exceed n_max " +
                        std::to_string(n_max));
  }
  GlobalObs g;
  g.n_max = n_max;
  g.values.assign(static_cast<std::size_t>(kGlobalDim + kClusterDim * n_max), 0.0);
  g.block_cluster.assign(static_cast<std::size_t>(n_max), -1);

  int active_people = 0;
  for (int id : ids) active_people += state.clusters[static_cast<std::size_t>(id)].size;
  const double budget = state.budget;
  const double nominal = scale.nominal_budget > 0 ? scale.nominal_budget : budget;

  auto& v = g.values;
  int& clipped = g.clipped;
  v[0] = state.horizon > 0 ? static_cast<double>(state.day) / state.horizon : 0.0;
  v[1] = static_cast<double>(ids.size()) / std::max(1, scale.n_clusters);
  v[2] = static_cast<double>(active_people) / (static_cast<double>(n_max) * scale.cluster_size_max);
  v[3] = clip(nominal > 0 ? budget / nominal : 1.0, clipped);
  v[4] = clip(active_people > 0 ? budget / active_people : 0.0, clipped);
  v[5] = clip(budget > 0 ? state.last_demand / budget : (state.last_demand > 0 ? kHi : 0.0),
              clipped);
  v[6] = clip(state.last_multiplier, clipped);
  v[7] = state.last_shortage ? 1.0 : 0.0;
  for (int k = 0; k < kGlobalDim; ++k) v[static_cast<std::size_t>(k)] = clip(v[static_cast<std::size_t>(k)], clipped);

  const double alpha3_active = state.last_multiplier * scale.alpha3_true;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& c = state.clusters[static_cast<std::size_t>(ids[k])];
    const ClusterBeliefTracker* tracker =
        static_cast<std::size_t>(c.id) < beliefs.size() ? beliefs[static_cast<std::size_t>(c.id)]
                                                        : nullptr;
    g.block_cluster[k] = c.id;
    double* b = v.data() + kGlobalDim + k * kClusterDim;
    const int t = c.current_day;
    const double n = c.size;
    b[0] = n / scale.cluster_size_max;
    b[1] = static_cast<double>(t) / scale.episode_days;

    int recent_tests = 0;
    for (int j = 0; j < 3; ++j) {
      // Tests on t-3..t-1, symptoms and newly reported positives on t-2..t.
      const int test_day = t - 3 + j;
      if (test_day < 0) {
        b[2 + j] = kMissing;
      } else {
        const int tests = c.tests_per_day[static_cast<std::size_t>(test_day)];
        recent_tests += tests;
        b[2 + j] = tests / n;
      }
      const int obs_day = t - 2 + j;
      if (obs_day < 0) {
        b[5 + j] = kMissing;
        b[8 + j] = kMissing;
      } else {
        int symptomatic = 0;
        int positives = 0;
        const int sample_day = obs_day - scale.result_delay_days;
        for (const auto& ind : c.individuals) {
          symptomatic += ind.symptom_observed_history[static_cast<std::size_t>(obs_day)];
          if (sample_day >= 0 &&
              ind.reported_results[static_cast<std::size_t>(sample_day)] == ResultCode::kPositive) {
            ++positives;
          }
        }
        b[5 + j] = symptomatic / n;
        b[8 + j] = positives / n;
      }
    }
    b[11] = alpha3_active * recent_tests / n;

    double past_sum = 0.0, past_max = 0.0, fut_sum = 0.0, fut_max = 0.0;
    if (tracker != nullptr) {
      for (int i = 0; i < c.size; ++i) {
        const auto& r = tracker->record(i);
        for (int j = 0; j < 3; ++j) {
          past_sum += r.q_past[static_cast<std::size_t>(j)];
          past_max = std::max(past_max, r.q_past[static_cast<std::size_t>(j)]);
          fut_sum += r.q_future[static_cast<std::size_t>(j)];
          fut_max = std::max(fut_max, r.q_future[static_cast<std::size_t>(j)]);
        }
      }
    }
    b[12] = past_sum / (3.0 * n);
    b[13] = past_max;
    b[14] = fut_sum / (3.0 * n);
    b[15] = fut_max;
    b[16] = 1.0;
    for (int j = 0; j < kClusterDim; ++j) b[j] = clip(b[j], clipped);
  }
  return g;
}

}  // namespace outbreak
