#include "gcarom/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace gcarom {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(std::string_view key, std::string_view text) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("config: '" + std::string(key) + "' expects a non-negative integer, got '" +
                      std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config: '" + std::string(key) + "' expects true/false, got '" +
                    std::string(text) + "'");
}

double parse_number(std::string_view key, std::string_view text) {
  try {
    return parse_double(text);
  } catch (const ConfigError&) {
    throw ConfigError("config: '" + std::string(key) + "' expects a number, got '" +
                      std::string(text) + "'");
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ConfigError("format_double: conversion failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

void set_config_value(ModelConfig& c, std::string_view key, std::string_view value) {
  if (key == "n_h") c.n_h = parse_size(key, value);
  else if (key == "d") c.d = parse_size(key, value);
  else if (key == "P") c.param_dim = parse_size(key, value);
  else if (key == "r_t") c.train_rate = parse_number(key, value);
  else if (key == "pooling") c.pooling = parse_bool(key, value);
  else if (key == "r_p") c.pool_rate = parse_number(key, value);
  else if (key == "ffn") c.ffn = parse_size(key, value);
  else if (key == "n_l") c.mlp_width = parse_size(key, value);
  else if (key == "mlp_layers") c.mlp_layers = parse_size(key, value);
  else if (key == "n") c.bottleneck = parse_size(key, value);
  else if (key == "lambda") c.lambda = parse_number(key, value);
  else if (key == "hcp") c.hcp = parse_size(key, value);
  else if (key == "hcd") c.hcd = parse_size(key, value);
  else if (key == "Q") c.filters = parse_size(key, value);
  else if (key == "pseudo") {
    if (value == "distance") c.pseudo = PseudoCoordinates::Distance;
    else if (value == "offset") c.pseudo = PseudoCoordinates::Offset;
    else throw ConfigError("config: 'pseudo' expects distance or offset, got '" + std::string(value) + "'");
  }
  else if (key == "monet_bias") c.monet_bias = parse_bool(key, value);
  else if (key == "k_unpool") c.k_unpool = parse_size(key, value);
  else if (key == "lr") c.lr = parse_number(key, value);
  else if (key == "weight_decay") c.weight_decay = parse_number(key, value);
  else if (key == "epochs") c.epochs = parse_size(key, value);
  else if (key == "seed") c.seed = parse_size(key, value);
  else if (key == "batch") c.batch_size = parse_size(key, value);
  else throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

ModelConfig parse_config(std::string_view text, const ModelConfig& base) {
  ModelConfig c = base;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

ModelConfig load_config(const std::filesystem::path& path, const ModelConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

std::string format_config(const ModelConfig& c) {
  std::ostringstream out;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  out << "n_h = " << c.n_h << '\n'
      << "d = " << c.d << '\n'
      << "P = " << c.param_dim << '\n'
      << "r_t = " << format_double(c.train_rate) << '\n'
      << "pooling = " << b(c.pooling) << '\n'
      << "r_p = " << format_double(c.pool_rate) << '\n'
      << "ffn = " << c.ffn << '\n'
      << "n_l = " << c.mlp_width << '\n'
      << "mlp_layers = " << c.mlp_layers << '\n'
      << "n = " << c.bottleneck << '\n'
      << "lambda = " << format_double(c.lambda) << '\n'
      << "hcp = " << c.hcp << '\n'
      << "hcd = " << c.hcd << '\n'
      << "Q = " << c.filters << '\n'
      << "pseudo = " << (c.pseudo == PseudoCoordinates::Distance ? "distance" : "offset") << '\n'
      << "monet_bias = " << b(c.monet_bias) << '\n'
      << "k_unpool = " << c.k_unpool << '\n'
      << "lr = " << format_double(c.lr) << '\n'
      << "weight_decay = " << format_double(c.weight_decay) << '\n'
      << "epochs = " << c.epochs << '\n'
      << "seed = " << c.seed << '\n'
      << "batch = " << c.batch_size << '\n';
  return out.str();
}

}  // namespace gcarom
