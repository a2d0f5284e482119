#pragma once

// JSON forms of model specs and training configuration.
//
// Readers reject unknown keys and report failures as ConfigError carrying the JSON pointer of
// the offending field and, when the source text is known, its line number.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "reflprior/networks.hpp"
#include "reflprior/optim.hpp"
#include "reflprior/parameterization.hpp"
#include "reflprior/priors.hpp"
#include "reflprior/signal.hpp"

namespace reflprior {

using Json = nlohmann::json;

struct TrainConfig {
  ModelSpec spec = two_layer_spec();
  nn::NetworkConfig network;
  DiscretizationSpec discretization = DiscretizationSpec::fixed_grid(128, 0.02, 0.15);
  NoiseConfig noise;
  Eigen::Index batch_size = 256;
  Eigen::Index max_steps = 20000;
  Eigen::Index eval_period = 500;  // steps per plateau evaluation and metrics row
  std::uint64_t seed = 0;
  nn::AdamWConfig optimizer;
  nn::PlateauConfig scheduler;
  bool prefetch = true;
  std::string checkpoint_path;  // empty: no checkpoint written
  std::string metrics_path;     // empty: no metrics log
  Eigen::Index checkpoint_period = 0;  // 0: only at the end

  // Forces network.n_params to match the spec and checks every field.
  void validate() const;
};

Json to_json(const ParamDescriptor& d);
Json to_json(const ModelSpec& spec);
Json to_json(const NoiseConfig& cfg);
Json to_json(const DiscretizationSpec& cfg);
Json to_json(const nn::NetworkConfig& cfg);
Json to_json(const nn::AdamWConfig& cfg);
Json to_json(const nn::PlateauConfig& cfg);
Json to_json(const TrainConfig& cfg);

// `source` is the original text for line lookup (may be empty). `pointer` prefixes error paths.
ModelSpec model_spec_from_json(const Json& j, const std::string& source = {},
                               const std::string& pointer = {});
NoiseConfig noise_from_json(const Json& j, const std::string& source = {},
                            const std::string& pointer = {});
DiscretizationSpec discretization_from_json(const Json& j, const std::string& source = {},
                                            const std::string& pointer = {});
nn::NetworkConfig network_from_json(const Json& j, const std::string& source = {},
                                    const std::string& pointer = {});
TrainConfig train_config_from_json(const Json& j, const std::string& source = {});

// Parses text; syntax errors become ConfigError with the line of the failure.
Json parse_json_text(const std::string& text, const std::string& origin);
TrainConfig train_config_from_text(const std::string& text, const std::string& origin = "<config>");
TrainConfig load_train_config(const std::string& path);

std::string read_text_file(const std::string& path);

// 16 hex digits of FNV-1a over the canonical JSON of the spec.
std::string spec_fingerprint(const ModelSpec& spec);

// 1-based line of the field addressed by a JSON pointer inside `source`; 0 if not found.
int locate_line(const std::string& source, const std::string& pointer);

}  // namespace reflprior
