#include "outbreak/config.hpp"

#include <fstream>
#include <set>

#include "outbreak/errors.hpp"

namespace outbreak {

using nlohmann::json;

namespace {

void reject_unknown(const json& doc, const std::set<std::string>& known, const std::string& where) {
  if (!doc.is_object()) throw InputError(where + " must be an object");
  for (const auto& item : doc.items()) {
    if (!known.count(item.key())) throw InputError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& doc, const char* key, T& out, const std::string& where) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + "." + key + " has the wrong type");
  }
}

}  // namespace

json to_json(const EpiParams& e) {
  return json{{"incubation_mean_days", e.incubation_mean_days},
              {"incubation_std_days", e.incubation_std_days},
              {"infectious_pre_onset_days", e.infectious_pre_onset_days},
              {"infectious_post_onset_days", e.infectious_post_onset_days},
              {"base_transmission_prob", e.base_transmission_prob},
              {"p_symptomatic_given_infected", e.p_symptomatic_given_infected},
              {"p_false_symptom_per_day", e.p_false_symptom_per_day},
              {"p_high_transmissive_index", e.p_high_transmissive_index},
              {"infectiousness_multiplier", e.infectiousness_multiplier},
              {"test_sensitivity", e.test_sensitivity},
              {"test_specificity", e.test_specificity},
              {"tracing_delay_days", e.tracing_delay_days},
              {"result_delay_days", e.result_delay_days},
              {"cluster_size_min", e.cluster_size_min},
              {"cluster_size_max", e.cluster_size_max},
              {"episode_days", e.episode_days},
              {"decision_start_day", e.decision_start_day},
              {"within_cluster_transmission", e.within_cluster_transmission}};
}

EpiParams epi_from_json(const json& doc, const EpiParams& base) {
  const std::string w = "epi";
  reject_unknown(doc, {"incubation_mean_days", "incubation_std_days", "infectious_pre_onset_days",
                       "infectious_post_onset_days", "base_transmission_prob",
                       "p_symptomatic_given_infected", "p_false_symptom_per_day",
                       "p_high_transmissive_index", "infectiousness_multiplier", "test_sensitivity",
                       "test_specificity", "tracing_delay_days", "result_delay_days",
                       "cluster_size_min", "cluster_size_max", "episode_days", "decision_start_day",
                       "within_cluster_transmission"},
                 w);
  EpiParams e = base;
  read(doc, "incubation_mean_days", e.incubation_mean_days, w);
  read(doc, "incubation_std_days", e.incubation_std_days, w);
  read(doc, "infectious_pre_onset_days", e.infectious_pre_onset_days, w);
  read(doc, "infectious_post_onset_days", e.infectious_post_onset_days, w);
  read(doc, "base_transmission_prob", e.base_transmission_prob, w);
  read(doc, "p_symptomatic_given_infected", e.p_symptomatic_given_infected, w);
  read(doc, "p_false_symptom_per_day", e.p_false_symptom_per_day, w);
  read(doc, "p_high_transmissive_index", e.p_high_transmissive_index, w);
  read(doc, "infectiousness_multiplier", e.infectiousness_multiplier, w);
  read(doc, "test_sensitivity", e.test_sensitivity, w);
  read(doc, "test_specificity", e.test_specificity, w);
  read(doc, "tracing_delay_days", e.tracing_delay_days, w);
  read(doc, "result_delay_days", e.result_delay_days, w);
  read(doc, "cluster_size_min", e.cluster_size_min, w);
  read(doc, "cluster_size_max", e.cluster_size_max, w);
  read(doc, "episode_days", e.episode_days, w);
  read(doc, "decision_start_day", e.decision_start_day, w);
  read(doc, "within_cluster_transmission", e.within_cluster_transmission, w);
  return e;
}

std::string mode_name(ActivationMode mode) {
  return mode == ActivationMode::kSynchronous ? "sync" : "async";
}

ActivationMode parse_mode(const std::string& name) {
  if (name == "sync" || name == "synchronous") return ActivationMode::kSynchronous;
  if (name == "async" || name == "asynchronous") return ActivationMode::kAsynchronous;
  throw ParameterError("mode must be 'sync' or 'async', got '" + name + "'");
}

json to_json(const SystemConfig& c) {
  return json{{"epi", to_json(c.epi)},
              {"mode", mode_name(c.mode)},
              {"n_clusters", c.n_clusters},
              {"n_max", c.n_max},
              {"stagger_window", c.stagger_window},
              {"budget", c.budget},
              {"nominal_budget", c.nominal_budget},
              {"alpha2", c.alpha2},
              {"alpha3_true", c.alpha3_true},
              {"fixed_cluster_size", c.fixed_cluster_size}};
}

SystemConfig system_from_json(const json& doc, const SystemConfig& base) {
  const std::string w = "system";
  reject_unknown(doc, {"epi", "mode", "n_clusters", "n_max", "stagger_window", "budget",
                       "nominal_budget", "alpha2", "alpha3_true", "fixed_cluster_size"},
                 w);
  SystemConfig c = base;
  if (doc.contains("epi")) c.epi = epi_from_json(doc.at("epi"), base.epi);
  if (doc.contains("mode")) {
    if (!doc.at("mode").is_string()) throw InputError("system.mode has the wrong type");
    c.mode = parse_mode(doc.at("mode").get<std::string>());
  }
  read(doc, "n_clusters", c.n_clusters, w);
  read(doc, "n_max", c.n_max, w);
  read(doc, "stagger_window", c.stagger_window, w);
  read(doc, "budget", c.budget, w);
  read(doc, "nominal_budget", c.nominal_budget, w);
  read(doc, "alpha2", c.alpha2, w);
  read(doc, "alpha3_true", c.alpha3_true, w);
  read(doc, "fixed_cluster_size", c.fixed_cluster_size, w);
  return c;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  try {
    json doc;
    in >> doc;
    return doc;
  } catch (const json::exception& e) {
    throw InputError(path + " is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << doc.dump(2) << '\n';
}

std::uint64_t content_hash(const json& doc) {
  const std::string s = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace outbreak
