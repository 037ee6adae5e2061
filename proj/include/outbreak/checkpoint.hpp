#pragma once

// Self-describing, versioned checkpoint documents (JSON). Parameters are
// stored as hexadecimal IEEE-754 bit patterns so a save/load round trip is
// bit-exact.

#include <string>

#include "json.hpp"
#include "outbreak/nn.hpp"
#include "outbreak/value.hpp"

namespace outbreak {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  std::string backend;      // "learned-q" or "hier-ppo"
  nlohmann::json model;     // architecture and metadata needed to rebuild
  nlohmann::json train_config;
  nn::Vec theta;
  std::string rng_state;    // textual std::mt19937_64 state
};

std::string encode_theta(const nn::Vec& theta);
nn::Vec decode_theta(const std::string& hex);

nlohmann::json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

/// Throws InputError on unreadable or malformed files.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json to_json(const LearnedSpec& spec);
LearnedSpec learned_spec_from_json(const nlohmann::json& doc);

Checkpoint make_checkpoint(const LearnedEstimator& est, const nlohmann::json& train_config = {},
                           const std::string& rng_state = {});
/// Rebuilds a learned value estimator; throws InputError for other backends.
LearnedEstimator estimator_from_checkpoint(const Checkpoint& ckpt);

}  // namespace outbreak
