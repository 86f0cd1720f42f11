#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gcarom/model.hpp"

namespace gcarom {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "key = value" lines; '#' starts a comment. Keys mirror the usual
/// symbols: n_h d P r_t pooling r_p ffn n_l mlp_layers n lambda hcp hcd Q
/// pseudo monet_bias k_unpool lr weight_decay epochs seed batch.
/// Unspecified keys keep `base` values; unknown keys throw ConfigError.
ModelConfig parse_config(std::string_view text, const ModelConfig& base = {});

ModelConfig load_config(const std::filesystem::path& path, const ModelConfig& base = {});

/// Every key, one per line, doubles in shortest round-trip form.
std::string format_config(const ModelConfig& config);

/// Applies a single key/value pair.
void set_config_value(ModelConfig& config, std::string_view key, std::string_view value);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace gcarom
