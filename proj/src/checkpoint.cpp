#include "outbreak/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "outbreak/errors.hpp"

namespace outbreak {

using nlohmann::json;

std::string encode_theta(const nn::Vec& theta) {
  std::string out;
  out.reserve(static_cast<std::size_t>(theta.size()) * 16);
  char buf[17];
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(theta[i])));
    out += buf;
  }
  return out;
}

nn::Vec decode_theta(const std::string& hex) {
  if (hex.size() % 16 != 0) throw InputError("theta hex length is not a multiple of 16");
  nn::Vec theta(static_cast<Eigen::Index>(hex.size() / 16));
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const std::string word = hex.substr(static_cast<std::size_t>(i) * 16, 16);
    std::uint64_t bits = 0;
    for (char ch : word) {
      int v = 0;
      if (ch >= '0' && ch <= '9') v = ch - '0';
      else if (ch >= 'a' && ch <= 'f') v = ch - 'a' + 10;
      else if (ch >= 'A' && ch <= 'F') v = ch - 'A' + 10;
      else throw InputError("bad hex digit in theta");
      bits = (bits << 4) | static_cast<std::uint64_t>(v);
    }
    theta[i] = std::bit_cast<double>(bits);
  }
  return theta;
}

json to_json(const Checkpoint& ckpt) {
  return json{{"format", "outbreak-checkpoint"},
              {"version", ckpt.version},
              {"backend", ckpt.backend},
              {"model", ckpt.model},
              {"train_config", ckpt.train_config},
              {"num_params", ckpt.theta.size()},
              {"theta_hex", encode_theta(ckpt.theta)},
              {"rng_state", ckpt.rng_state}};
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "outbreak-checkpoint") {
      throw InputError("not an outbreak checkpoint");
    }
    Checkpoint c;
    c.version = doc.at("version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw InputError("unsupported checkpoint version " + std::to_string(c.version));
    }
    c.backend = doc.at("backend").get<std::string>();
    c.model = doc.value("model", json::object());
    c.train_config = doc.value("train_config", json::object());
    c.theta = decode_theta(doc.at("theta_hex").get<std::string>());
    if (c.theta.size() != doc.at("num_params").get<Eigen::Index>()) {
      throw InputError("theta length disagrees with num_params");
    }
    c.rng_state = doc.value("rng_state", std::string{});
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write checkpoint " + path);
  out << to_json(ckpt).dump(2) << '\n';
  if (!out) throw InputError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read checkpoint " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw InputError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(doc);
}

json to_json(const LearnedSpec& s) {
  return json{{"include_alpha2", s.include_alpha2},  {"hidden", s.hidden},
              {"alpha2", s.alpha2},                  {"alpha3_input_scale", s.alpha3_input_scale},
              {"alpha2_input_scale", s.alpha2_input_scale}, {"alpha3_min", s.alpha3_min},
              {"alpha3_max", s.alpha3_max}};
}

LearnedSpec learned_spec_from_json(const json& doc) {
  LearnedSpec s;
  s.include_alpha2 = doc.value("include_alpha2", s.include_alpha2);
  s.hidden = doc.value("hidden", s.hidden);
  s.alpha2 = doc.value("alpha2", s.alpha2);
  s.alpha3_input_scale = doc.value("alpha3_input_scale", s.alpha3_input_scale);
  s.alpha2_input_scale = doc.value("alpha2_input_scale", s.alpha2_input_scale);
  s.alpha3_min = doc.value("alpha3_min", s.alpha3_min);
  s.alpha3_max = doc.value("alpha3_max", s.alpha3_max);
  return s;
}

Checkpoint make_checkpoint(const LearnedEstimator& est, const json& train_config,
                           const std::string& rng_state) {
  Checkpoint c;
  c.backend = "learned-q";
  c.model = to_json(est.spec());
  c.train_config = train_config;
  c.theta = est.theta();
  c.rng_state = rng_state;
  return c;
}

LearnedEstimator estimator_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.backend != "learned-q") {
    throw InputError("checkpoint backend '" + ckpt.backend + "' is not a value estimator");
  }
  LearnedEstimator est(learned_spec_from_json(ckpt.model));
  if (est.theta().size() != ckpt.theta.size()) {
    throw InputError("checkpoint parameters do not match the recorded architecture");
  }
  est.theta() = ckpt.theta;
  return est;
}

}  // namespace outbreak
