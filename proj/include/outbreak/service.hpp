#pragma once

// Simulation sessions for interactive what-if exploration. SessionManager is
// the transport-free core; HttpService exposes it under /v1.
//
// A session is a pure function of (config, seed, ordered action log), so
// forks share future randomness and replay reconstructs any state.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "outbreak/engine.hpp"
#include "outbreak/harness.hpp"

namespace outbreak {

inline constexpr int kServiceSchemaVersion = 1;
inline constexpr const char* kSchemaHeader = "X-Schema-Version";
inline constexpr const char* kManualPolicy = "manual";

/// Maps onto an HTTP status. `field` names the offending request field.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message, std::string field = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const std::string& field() const { return field_; }
  nlohmann::json to_json() const;

 private:
  int status_;
  std::string code_;
  std::string field_;
};

struct ServiceConfig {
  int max_sessions = 16;
  /// When false, creation beyond the cap fails with 503 instead of evicting.
  bool evict_lru = true;
  ExperimentSpec defaults;
};

struct SessionAction {
  enum class Kind { kStep, kPolicy };
  Kind kind = Kind::kStep;
  StepOverride override_;
  std::string policy;  // kPolicy
};

struct SessionRequest {
  ExperimentSpec spec;
  std::uint64_t seed = 1;
  std::string policy;  // a policy name or "manual"
};

/// Parses {"config": {...}, "seed": n, "policy": "..."}; missing parts take
/// the service defaults. Throws ServiceError(422) naming the field.
SessionRequest parse_session_request(const nlohmann::json& body, const ExperimentSpec& defaults);
/// Parses {"m_t": x, "budget": b}, both optional.
StepOverride parse_step_override(const nlohmann::json& body);

struct CreateResult {
  std::string id;
  bool created = true;
  std::vector<std::string> evicted;
};

struct StreamBatch {
  std::vector<nlohmann::json> deltas;
  std::size_t next = 0;     // index after the last delta returned
  std::uint64_t generation = 0;  // bumps on reset
  bool closed = false;      // session evicted or deleted
};

class SessionManager {
 public:
  explicit SessionManager(ServiceConfig config = {});

  const ServiceConfig& config() const { return config_; }
  /// Slider bounds, policies, defaults and field units for clients.
  nlohmann::json describe() const;

  CreateResult create(const SessionRequest& request);
  CreateResult create(const nlohmann::json& body);
  /// Applies one step; returns the step delta.
  nlohmann::json step(const std::string& id, const StepOverride& override_ = {});
  CreateResult fork(const std::string& id);
  nlohmann::json reset(const std::string& id);
  nlohmann::json set_policy(const std::string& id, const std::string& policy);
  void remove(const std::string& id);

  nlohmann::json state(const std::string& id) const;
  nlohmann::json metrics(const std::string& id) const;
  nlohmann::json actions(const std::string& id) const;
  /// Step-by-step comparison of two sessions' delta logs.
  nlohmann::json diff(const std::string& a, const std::string& b) const;
  /// Rebuilds the session from (config, seed, action log) and reports
  /// whether the result matches the live state.
  bool verify_replay(const std::string& id) const;

  std::vector<std::string> list() const;
  std::size_t size() const;

  /// Deltas from index `from`, waiting up to `timeout` for new ones.
  StreamBatch wait_deltas(const std::string& id, std::size_t from, std::uint64_t generation,
                          std::chrono::milliseconds timeout) const;

 private:
  struct Session;
  ServiceConfig config_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::uint64_t, std::string> by_hash_;
  mutable std::list<std::string> lru_;  // front = most recent
  std::deque<std::string> evicted_;
  std::uint64_t next_id_ = 1;

  std::shared_ptr<Session> find(const std::string& id) const;
  std::vector<std::string> make_room();
  std::string insert(std::shared_ptr<Session> session);
};

/// HTTP front end under /v1. Every request must carry X-Schema-Version: 1.
class HttpService {
 public:
  explicit HttpService(SessionManager& manager);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds and serves on the calling thread.
  bool listen(const std::string& host, int port);
  /// Binds, then serves on a background thread. Returns the bound port or -1.
  int start(const std::string& host, int port = 0);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace outbreak
