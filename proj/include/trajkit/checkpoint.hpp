#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "trajkit/errors.hpp"
#include "trajkit/model.hpp"

// Self-describing JSON checkpoint: config, seed, epoch, and every parameter
// as a flat row-major array keyed by its canonical name. Doubles are written
// in shortest round-trip form, so save/load is exact and equal states
// serialize to identical bytes.

namespace trajkit {

inline constexpr const char* kCheckpointFormat = "trajkit-checkpoint-v1";

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["d"] = c.d;
  j["enc_blocks"] = c.enc_blocks;
  j["dec_blocks"] = c.dec_blocks;
  j["heads"] = c.heads;
  j["pad_len"] = c.pad_len;
  j["max_len"] = c.max_len;
  j["ffn_mult"] = c.ffn_mult;
  j["lr"] = c.lr;
  j["batch"] = c.batch;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["val_fraction"] = c.val_fraction;
  j["icr_dts"] = c.icr_dts;
  j["seed"] = c.seed;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d = j.at("d").get<std::size_t>();
    c.enc_blocks = j.at("enc_blocks").get<std::size_t>();
    c.dec_blocks = j.at("dec_blocks").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.pad_len = j.at("pad_len").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.ffn_mult = j.at("ffn_mult").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.batch = j.at("batch").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.val_fraction = j.at("val_fraction").get<double>();
    c.icr_dts = j.at("icr_dts").get<std::vector<std::size_t>>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint config: ") + e.what());
  }
  validate_config(c);
  return c;
}

inline void save_checkpoint(const ModelState& st, std::size_t epoch, std::ostream& out) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["epoch"] = epoch;
  j["config"] = config_to_json(st.cfg);
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [name, m] : named_params(st)) params[name] = m->a;
  j["params"] = std::move(params);
  out << j.dump() << "\n";
}

struct Checkpoint {
  ModelState state;
  std::size_t epoch = 0;
};

inline Checkpoint load_checkpoint(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat)
    throw Error("checkpoint: unknown format marker");

  Checkpoint ck;
  ck.epoch = j.value("epoch", std::size_t{0});
  ck.state = init_model(config_from_json(j.at("config")));
  const auto& params = j.at("params");
  for (auto& [name, m] : named_params(ck.state)) {
    if (!params.contains(name)) throw Error("checkpoint: missing parameter " + name);
    const auto values = params.at(name).get<std::vector<double>>();
    if (values.size() != m->a.size())
      throw Error("checkpoint: size mismatch for parameter " + name);
    m->a = values;
  }
  return ck;
}

}  // namespace trajkit
