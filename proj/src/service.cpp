#include "outbreak/service.hpp"

#include <algorithm>
#include <cctype>

#include "outbreak/config.hpp"
#include "outbreak/errors.hpp"
#include "outbreak/objective.hpp"

namespace outbreak {

using nlohmann::json;

json ServiceError::to_json() const {
  json e{{"code", code_}, {"message", what()}};
  if (!field_.empty()) e["field"] = field_;
  return json{{"error", e}};
}

namespace {

// Pulls the field name out of validation messages such as
// "alpha2 must be >= 0" or "unknown key 'foo' in system".
std::string field_of(const std::string& message) {
  const auto q = message.find("key '");
  if (q != std::string::npos) {
    const auto end = message.find('\'', q + 5);
    if (end != std::string::npos) return message.substr(q + 5, end - q - 5);
  }
  std::size_t n = 0;
  while (n < message.size() && (std::isalnum(static_cast<unsigned char>(message[n])) ||
                                message[n] == '_' || message[n] == '.')) {
    ++n;
  }
  return message.substr(0, n);
}

[[noreturn]] void rethrow_validation(const std::exception& ex, const std::string& fallback_field) {
  std::string field = field_of(ex.what());
  if (field.empty()) field = fallback_field;
  throw ServiceError(422, "validation", ex.what(), field);
}

std::string canonical_policy(const std::string& name) {
  if (name == kManualPolicy) return name;
  return policy_name(parse_policy(name));
}

PolicyBinding binding_for(const ExperimentSpec& base, const std::string& policy) {
  ExperimentSpec spec = base;
  spec.policy = policy == kManualPolicy ? PolicyKind::kFixedMQr : parse_policy(policy);
  if (policy == kManualPolicy) spec.fixed_m = 1.0;
  return make_binding(spec);
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Mutable part of a session; everything replay has to reproduce.
struct Core {
  Engine engine;
  std::string policy;
  double pending_m = 1.0;
  std::vector<json> deltas;

  Core(const SessionRequest& r)
      : engine(r.spec.system, r.seed, binding_for(r.spec, r.policy), false), policy(r.policy) {}
};

json cluster_totals(const Engine& engine) {
  const auto& cfg = engine.config();
  CostParams costs;
  costs.alpha2 = cfg.alpha2;
  costs.alpha3_true = cfg.alpha3_true;
  long s1 = 0, s2 = 0, s3 = 0;
  double ret = 0.0;
  const auto& clusters = engine.state().clusters;
  for (const auto& c : clusters) {
    s1 += c.s1_days;
    s2 += c.s2_days;
    s3 += c.s3_tests;
    ret += cluster_reward(static_cast<double>(c.s1_days), static_cast<double>(c.s2_days),
                          static_cast<double>(c.s3_tests), c.size, costs)
               .reward;
  }
  if (!clusters.empty()) ret /= static_cast<double>(clusters.size());
  return json{{"s1", s1}, {"s2", s2}, {"s3", s3}, {"tests", s3}, {"return", ret}};
}

json apply(Core& core, const SessionAction& action, std::size_t index,
           const ExperimentSpec& spec) {
  if (action.kind == SessionAction::Kind::kPolicy) {
    core.engine.set_policy(binding_for(spec, action.policy));
    core.policy = action.policy;
    return json();
  }
  StepOverride ov = action.override_;
  if (core.policy == kManualPolicy) {
    if (ov.multiplier) core.pending_m = *ov.multiplier;
    ov.multiplier = core.pending_m;
  }
  // Belief summaries of the clusters about to play, as seen by the decision.
  std::map<int, std::pair<double, double>> beliefs;
  core.engine.observe_global();
  for (int id : core.engine.state().active_ids()) {
    const auto* t = core.engine.tracker(id);
    if (t == nullptr) continue;
    std::vector<double> q;
    for (const auto& r : t->belief().records) q.push_back(r.q_now);
    beliefs[id] = {mean_of(q), q.empty() ? 0.0 : *std::max_element(q.begin(), q.end())};
  }
  const DayRecord rec = core.engine.step(ov);
  const auto& d = rec.decision;
  json clusters = json::array();
  for (const auto& cr : rec.step.rewards) {
    const auto& c = core.engine.state().clusters[static_cast<std::size_t>(cr.cluster_id)];
    int quarantined = 0;
    for (const auto& ind : c.individuals) {
      const auto day = static_cast<std::size_t>(cr.outcome.day);
      if (day < ind.quarantine_history.size() && ind.quarantine_history[day]) ++quarantined;
    }
    const auto b = beliefs.count(cr.cluster_id) ? beliefs[cr.cluster_id] : std::pair{0.0, 0.0};
    clusters.push_back({{"id", cr.cluster_id},
                        {"local_day", cr.outcome.day},
                        {"ds1", cr.outcome.ds1},
                        {"ds2", cr.outcome.ds2},
                        {"ds3", cr.outcome.ds3},
                        {"tests", cr.outcome.ds3},
                        {"quarantined", quarantined},
                        {"reward", cr.reward},
                        {"mean_q", b.first},
                        {"max_q", b.second}});
  }
  json delta{{"step", index},
             {"day", rec.day},
             {"active_clusters", rec.active_clusters},
             {"decision",
              {{"multiplier", d.multiplier},
               {"budget", d.budget},
               {"candidates", d.candidates},
               {"demand", d.demand},
               {"executed", d.executed},
               {"demand_evaluations", d.demand_evaluations},
               {"policy_evaluations", d.policy_evaluations},
               {"overridden", d.overridden}}},
             {"policy", core.policy},
             {"executed_tests", rec.step.executed_tests},
             {"clusters", clusters},
             {"totals", cluster_totals(core.engine)},
             {"done", core.engine.done()},
             {"timing", {{"decision_ms", 1e3 * d.decision_seconds}}}};
  core.deltas.push_back(delta);
  return delta;
}

json state_of(const Core& core) {
  const auto& s = core.engine.state();
  json clusters = json::array();
  for (const auto& c : s.clusters) {
    const auto* t = core.engine.tracker(c.id);
    json inds = json::array();
    for (std::size_t i = 0; i < c.individuals.size(); ++i) {
      const auto& ind = c.individuals[i];
      inds.push_back({{"infected", ind.infected},
                      {"infection_day", ind.infection_day ? json(*ind.infection_day) : json()},
                      {"symptom_onset_day",
                       ind.symptom_onset_day ? json(*ind.symptom_onset_day) : json()},
                      {"quarantined", ind.quarantined},
                      {"q_now", t ? json(t->record(static_cast<int>(i)).q_now) : json()}});
    }
    const char* status = c.status == ClusterStatus::kPending  ? "pending"
                         : c.status == ClusterStatus::kActive ? "active"
                                                               : "finished";
    clusters.push_back({{"id", c.id},
                        {"size", c.size},
                        {"activation_day", c.activation_day},
                        {"status", status},
                        {"local_day", c.current_day},
                        {"index_high_transmissive", c.index_high_transmissive},
                        {"s1", c.s1_days},
                        {"s2", c.s2_days},
                        {"s3", c.s3_tests},
                        {"belief_day", t ? json(t->day()) : json()},
                        {"p_high", t ? json(t->belief().p_high) : json()},
                        {"individuals", inds}});
  }
  return json{{"day", s.day},
              {"horizon", s.horizon},
              {"budget", s.budget},
              {"done", s.done()},
              {"policy", core.policy},
              {"pending_multiplier", core.pending_m},
              {"last_multiplier", s.last_multiplier},
              {"last_demand", s.last_demand},
              {"clusters", clusters},
              {"totals", cluster_totals(core.engine)}};
}

json without_timing(json delta) {
  delta.erase("timing");
  return delta;
}

json action_json(const SessionAction& a) {
  if (a.kind == SessionAction::Kind::kPolicy) return json{{"kind", "policy"}, {"policy", a.policy}};
  json j{{"kind", "step"}};
  if (a.override_.multiplier) j["m_t"] = *a.override_.multiplier;
  if (a.override_.budget) j["budget"] = *a.override_.budget;
  return j;
}

}  // namespace

struct SessionManager::Session {
  std::string id;
  std::string parent;
  std::uint64_t hash = 0;
  SessionRequest request;
  mutable std::mutex mutex;
  mutable std::condition_variable cv;
  std::unique_ptr<Core> core;
  std::vector<SessionAction> log;
  std::uint64_t generation = 0;
  bool closed = false;
};

SessionRequest parse_session_request(const json& body, const ExperimentSpec& defaults) {
  if (!body.is_object()) throw ServiceError(422, "validation", "request body must be an object");
  SessionRequest r;
  r.spec = defaults;
  r.policy = policy_name(defaults.policy);
  for (const auto& item : body.items()) {
    const auto& k = item.key();
    const auto& v = item.value();
    if (k == "config") {
      try {
        r.spec = experiment_from_json(v, defaults);
        r.spec.system.validate();
      } catch (const ParameterError& ex) {
        rethrow_validation(ex, "config");
      } catch (const InputError& ex) {
        rethrow_validation(ex, "config");
      }
      r.policy = policy_name(r.spec.policy);
    } else if (k != "seed" && k != "policy") {
      throw ServiceError(422, "validation", "unknown key '" + k + "'", k);
    }
  }
  if (body.contains("seed")) {
    if (!body["seed"].is_number_unsigned()) {
      throw ServiceError(422, "validation", "seed must be a non-negative integer", "seed");
    }
    r.seed = body["seed"].get<std::uint64_t>();
  }
  if (body.contains("policy")) {
    if (!body["policy"].is_string()) {
      throw ServiceError(422, "validation", "policy must be a string", "policy");
    }
    try {
      r.policy = canonical_policy(body["policy"].get<std::string>());
    } catch (const ParameterError& ex) {
      throw ServiceError(422, "validation", ex.what(), "policy");
    }
  }
  return r;
}

StepOverride parse_step_override(const json& body) {
  StepOverride ov;
  if (body.is_null()) return ov;
  if (!body.is_object()) throw ServiceError(422, "validation", "request body must be an object");
  for (const auto& item : body.items()) {
    const auto& k = item.key();
    const auto& v = item.value();
    if (k == "m_t") {
      if (!v.is_number()) throw ServiceError(422, "validation", "m_t must be a number", "m_t");
      ov.multiplier = v.get<double>();
    } else if (k == "budget") {
      if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ServiceError(422, "validation", "budget must be a non-negative integer", "budget");
      }
      ov.budget = v.get<int>();
    } else {
      throw ServiceError(422, "validation", "unknown key '" + k + "'", k);
    }
  }
  return ov;
}

SessionManager::SessionManager(ServiceConfig config) : config_(std::move(config)) {
  if (config_.max_sessions < 1) throw ParameterError("max_sessions must be >= 1");
}

json SessionManager::describe() const {
  json policies = json::array();
  for (auto k : all_policies()) policies.push_back(policy_name(k));
  policies.push_back(kManualPolicy);
  const auto& d = config_.defaults;
  return json{
      {"schema_version", kServiceSchemaVersion},
      {"multiplier", {{"min", d.m_min}, {"max", d.m_max}, {"default", 1.0}}},
      {"budget", {{"min", 0}, {"default", d.system.budget}}},
      {"policies", policies},
      {"session_cap", config_.max_sessions},
      {"evict_lru", config_.evict_lru},
      {"defaults", to_json(d)},
      {"units",
       {{"day", "days since the first activation"},
        {"local_day", "days since the cluster's exposure"},
        {"multiplier", "dimensionless factor on the true per-test cost"},
        {"m_t", "dimensionless factor on the true per-test cost"},
        {"budget", "tests per day, all clusters"},
        {"candidates", "individuals eligible for testing"},
        {"demand", "individuals with positive marginal test value"},
        {"executed", "tests performed"},
        {"ds1", "person-days infectious and unquarantined"},
        {"ds2", "person-days quarantined while uninfected"},
        {"ds3", "tests"},
        {"s1", "person-days infectious and unquarantined, cumulative"},
        {"s2", "person-days quarantined while uninfected, cumulative"},
        {"s3", "tests, cumulative"},
        {"reward", "negative weighted cost per cluster member"},
        {"return", "cumulative reward averaged over clusters"},
        {"mean_q", "probability"},
        {"max_q", "probability"},
        {"p_high", "probability"},
        {"decision_ms", "milliseconds, wall clock"}}}};
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    if (std::find(evicted_.begin(), evicted_.end(), id) != evicted_.end()) {
      throw ServiceError(410, "evicted", "session " + id + " was evicted");
    }
    throw ServiceError(404, "not_found", "unknown session " + id);
  }
  lru_.remove(id);
  lru_.push_front(id);
  return it->second;
}

std::vector<std::string> SessionManager::make_room() {
  std::vector<std::string> evicted;
  while (sessions_.size() >= static_cast<std::size_t>(config_.max_sessions)) {
    if (!config_.evict_lru) {
      throw ServiceError(503, "capacity", "session cap of " +
                                              std::to_string(config_.max_sessions) + " reached");
    }
    const std::string victim = lru_.back();
    lru_.pop_back();
    auto s = sessions_.at(victim);
    sessions_.erase(victim);
    if (s->hash != 0) by_hash_.erase(s->hash);
    {
      std::lock_guard<std::mutex> lock(s->mutex);
      s->closed = true;
    }
    s->cv.notify_all();
    evicted_.push_back(victim);
    if (evicted_.size() > 4096) evicted_.pop_front();
    evicted.push_back(victim);
  }
  return evicted;
}

std::string SessionManager::insert(std::shared_ptr<Session> session) {
  session->id = "s" + std::to_string(next_id_++);
  sessions_[session->id] = session;
  lru_.push_front(session->id);
  if (session->hash != 0) by_hash_[session->hash] = session->id;
  return session->id;
}

CreateResult SessionManager::create(const json& body) {
  return create(parse_session_request(body, config_.defaults));
}

CreateResult SessionManager::create(const SessionRequest& request) {
  const std::uint64_t hash = content_hash(
      json{{"config", to_json(request.spec)}, {"seed", request.seed}, {"policy", request.policy}});
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = by_hash_.find(hash);
    if (it != by_hash_.end()) {
      lru_.remove(it->second);
      lru_.push_front(it->second);
      return {it->second, false, {}};
    }
  }
  auto s = std::make_shared<Session>();
  s->request = request;
  s->hash = hash;
  try {
    s->core = std::make_unique<Core>(request);
  } catch (const ParameterError& ex) {
    rethrow_validation(ex, "config");
  } catch (const InputError& ex) {
    rethrow_validation(ex, "config");
  }
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = by_hash_.find(hash);  // a concurrent create may have won
  if (it != by_hash_.end()) return {it->second, false, {}};
  CreateResult r;
  r.evicted = make_room();
  r.id = insert(s);
  return r;
}

json SessionManager::step(const std::string& id, const StepOverride& override_) {
  auto s = find(id);
  std::unique_lock<std::mutex> lock(s->mutex);
  if (s->closed) throw ServiceError(410, "evicted", "session " + id + " was evicted");
  if (s->core->engine.done()) {
    throw ServiceError(409, "episode_over", "session " + id + " has finished its episode");
  }
  if (override_.multiplier) {
    const auto& range = s->core->engine.policy().range;
    const double m = *override_.multiplier;
    if (!(m >= range.m_min && m <= range.m_max)) {
      throw ServiceError(422, "validation",
                         "m_t must lie in [" + std::to_string(range.m_min) + ", " +
                             std::to_string(range.m_max) + "]",
                         "m_t");
    }
  }
  SessionAction action;
  action.override_ = override_;
  json delta;
  try {
    delta = apply(*s->core, action, s->core->deltas.size(), s->request.spec);
  } catch (const ParameterError& ex) {
    rethrow_validation(ex, "body");
  }
  delta["session"] = id;
  s->core->deltas.back()["session"] = id;
  s->log.push_back(action);
  lock.unlock();
  s->cv.notify_all();
  return delta;
}

CreateResult SessionManager::fork(const std::string& id) {
  auto src = find(id);
  auto s = std::make_shared<Session>();
  {
    std::lock_guard<std::mutex> lock(src->mutex);
    s->request = src->request;
    s->core = std::make_unique<Core>(*src->core);
    s->log = src->log;
    s->parent = src->id;
  }
  std::lock_guard<std::mutex> lock(mutex_);
  CreateResult r;
  r.evicted = make_room();
  r.id = insert(s);
  for (auto& d : s->core->deltas) d["session"] = r.id;
  return r;
}

json SessionManager::reset(const std::string& id) {
  auto s = find(id);
  {
    std::lock_guard<std::mutex> lock(s->mutex);
    s->core = std::make_unique<Core>(s->request);
    s->log.clear();
    ++s->generation;
  }
  s->cv.notify_all();
  return state(id);
}

json SessionManager::set_policy(const std::string& id, const std::string& policy) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  SessionAction action;
  action.kind = SessionAction::Kind::kPolicy;
  try {
    action.policy = canonical_policy(policy);
    apply(*s->core, action, 0, s->request.spec);
  } catch (const ParameterError& ex) {
    throw ServiceError(422, "validation", ex.what(), "policy");
  } catch (const InputError& ex) {
    throw ServiceError(422, "validation", ex.what(), "policy");
  }
  s->log.push_back(action);
  return json{{"session", id}, {"policy", action.policy}};
}

void SessionManager::remove(const std::string& id) {
  auto s = find(id);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    sessions_.erase(id);
    lru_.remove(id);
    if (s->hash != 0) by_hash_.erase(s->hash);
  }
  {
    std::lock_guard<std::mutex> lock(s->mutex);
    s->closed = true;
  }
  s->cv.notify_all();
}

json SessionManager::state(const std::string& id) const {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  json j = state_of(*s->core);
  j["session"] = id;
  j["seed"] = s->request.seed;
  j["parent"] = s->parent.empty() ? json() : json(s->parent);
  j["steps"] = s->core->deltas.size();
  j["config"] = to_json(s->request.spec);
  return j;
}

json SessionManager::metrics(const std::string& id) const {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  json m = json::array(), b = json::array(), e = json::array(), dem = json::array(),
       cand = json::array(), rew = json::array();
  for (const auto& d : s->core->deltas) {
    m.push_back(d["decision"]["multiplier"]);
    b.push_back(d["decision"]["budget"]);
    e.push_back(d["executed_tests"]);
    dem.push_back(d["decision"]["demand"]);
    cand.push_back(d["decision"]["candidates"]);
    double r = 0.0;
    for (const auto& c : d["clusters"]) r += c["reward"].get<double>();
    rew.push_back(r);
  }
  const auto& engine = s->core->engine;
  return json{{"session", id},
              {"day", engine.state().day},
              {"steps", s->core->deltas.size()},
              {"done", engine.done()},
              {"totals", cluster_totals(engine)},
              {"history",
               {{"multiplier", m},
                {"budget", b},
                {"executed", e},
                {"demand", dem},
                {"candidates", cand},
                {"reward", rew}}}};
}

json SessionManager::actions(const std::string& id) const {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  json a = json::array();
  for (const auto& x : s->log) a.push_back(action_json(x));
  return json{{"session", id}, {"seed", s->request.seed}, {"actions", a}};
}

json SessionManager::diff(const std::string& a, const std::string& b) const {
  std::vector<json> da, db;
  {
    auto sa = find(a);
    std::lock_guard<std::mutex> lock(sa->mutex);
    da = sa->core->deltas;
  }
  {
    auto sb = find(b);
    std::lock_guard<std::mutex> lock(sb->mutex);
    db = sb->core->deltas;
  }
  json diffs = json::array();
  json first = json();
  const std::size_t n = std::min(da.size(), db.size());
  auto note = [&](std::size_t k, const json& cluster, const std::string& field, const json& va,
                  const json& vb) {
    if (va == vb) return;
    if (first.is_null()) first = k;
    diffs.push_back({{"step", k}, {"day", da[k]["day"]}, {"cluster", cluster}, {"field", field},
                     {"a", va}, {"b", vb}});
  };
  for (std::size_t k = 0; k < n; ++k) {
    for (const auto& item : da[k]["decision"].items()) {
      note(k, json(), item.key(), item.value(), db[k]["decision"][item.key()]);
    }
    note(k, json(), "executed_tests", da[k]["executed_tests"], db[k]["executed_tests"]);
    note(k, json(), "policy", da[k]["policy"], db[k]["policy"]);
    std::map<int, json> cb;
    for (const auto& c : db[k]["clusters"]) cb[c["id"].get<int>()] = c;
    for (const auto& c : da[k]["clusters"]) {
      const int cid = c["id"].get<int>();
      const json other = cb.count(cid) ? cb[cid] : json::object();
      for (const auto& item : c.items()) {
        if (item.key() == "id") continue;
        note(k, cid, item.key(), item.value(), other.value(item.key(), json()));
      }
    }
  }
  if (da.size() != db.size() && first.is_null()) first = n;
  return json{{"a", a},
              {"b", b},
              {"steps_a", da.size()},
              {"steps_b", db.size()},
              {"steps_compared", n},
              {"first_divergent_step", first},
              {"identical", diffs.empty() && da.size() == db.size()},
              {"differences", diffs}};
}

bool SessionManager::verify_replay(const std::string& id) const {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->mutex);
  Core fresh(s->request);
  std::size_t steps = 0;
  for (const auto& a : s->log) {
    apply(fresh, a, steps, s->request.spec);
    if (a.kind == SessionAction::Kind::kStep) ++steps;
  }
  if (fresh.deltas.size() != s->core->deltas.size()) return false;
  for (std::size_t k = 0; k < fresh.deltas.size(); ++k) {
    json live = without_timing(s->core->deltas[k]);
    live.erase("session");
    if (without_timing(fresh.deltas[k]) != live) return false;
  }
  return state_of(fresh) == state_of(*s->core);
}

std::vector<std::string> SessionManager::list() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& kv : sessions_) ids.push_back(kv.first);
  return ids;
}

std::size_t SessionManager::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return sessions_.size();
}

StreamBatch SessionManager::wait_deltas(const std::string& id, std::size_t from,
                                        std::uint64_t generation,
                                        std::chrono::milliseconds timeout) const {
  std::shared_ptr<Session> s;
  try {
    s = find(id);
  } catch (const ServiceError& ex) {
    if (ex.status() == 410) return StreamBatch{{}, from, generation, true};
    throw;
  }
  std::unique_lock<std::mutex> lock(s->mutex);
  s->cv.wait_for(lock, timeout, [&] {
    return s->closed || s->generation != generation || s->core->deltas.size() > from;
  });
  StreamBatch batch;
  batch.generation = s->generation;
  batch.closed = s->closed;
  if (s->generation != generation) from = 0;
  for (std::size_t k = from; k < s->core->deltas.size(); ++k) {
    batch.deltas.push_back(s->core->deltas[k]);
  }
  batch.next = s->core->deltas.size();
  return batch;
}

}  // namespace outbreak
