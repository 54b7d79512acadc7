#include "wildgs/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "wildgs/errors.hpp"

namespace wildgs {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
void parse_into(std::string_view key, std::string_view text, T& field) {
  auto bad = [&] { return ContractViolation("config: bad value '" + std::string(text) + "' for " + std::string(key)); };
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") field = true;
    else if (text == "false" || text == "0") field = false;
    else throw bad();
  } else if constexpr (std::is_floating_point_v<T>) {
    std::string s(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != s.size()) throw bad();
    field = v;
  } else {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw bad();
    field = v;
  }
}

}  // namespace

int TrainConfig::resolved_warmup() const {
  return warmup_iters >= 0 ? warmup_iters : iterations / 10;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ContractViolation("config: " + field + " " + why);
  };
  if (iterations < 0) fail("iterations", "must be >= 0");
  if (iterations > 0 && resolved_warmup() >= iterations) fail("warmup_iters", "must be below iterations");
  for (auto [name, v] : {std::pair{"lambda_m_start", lambda_m_start}, {"lambda_m_end", lambda_m_end},
                         {"lambda_d", lambda_d}, {"lambda_i", lambda_i}}) {
    if (!(v >= 0.0)) fail(name, "must be >= 0");
  }
  if (lambda_i > 1.0) fail("lambda_i", "must be <= 1");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) fail("mask_threshold", "must be in (0, 1)");
  if (sh_degree < 0 || sh_degree > 2) fail("sh_degree", "must be 0, 1 or 2");
  if (triplane_resolution < 4 || (triplane_resolution & (triplane_resolution - 1)) != 0) {
    fail("triplane_resolution", "must be a power of two >= 4");
  }
  if (!(crop_ratio > 0.0 && crop_ratio <= 1.0)) fail("crop_ratio", "must be in (0, 1]");
  if (densify_interval <= 0) fail("densify_interval", "must be > 0");
  if (max_gaussians < 0) fail("max_gaussians", "must be >= 0");
  if (log_interval <= 0) fail("log_interval", "must be > 0");
  if (!(background >= 0.0 && background <= 1.0)) fail("background", "must be in [0, 1]");
}

void TrainConfig::set(std::string_view key, std::string_view value) {
  bool found = false;
  visit([&](std::string_view name, auto& field) {
    if (name == key) {
      parse_into(key, value, field);
      found = true;
    }
  });
  if (!found) throw ContractViolation("config: unknown key '" + std::string(key) + "'");
}

void TrainConfig::set_number(std::string_view key, double value) {
  bool found = false;
  visit([&](std::string_view name, auto& field) {
    if (name == key) {
      using T = std::remove_reference_t<decltype(field)>;
      if constexpr (std::is_same_v<T, bool>) field = value != 0.0;
      else field = static_cast<T>(value);
      found = true;
    }
  });
  if (!found) throw ContractViolation("config: unknown key '" + std::string(key) + "'");
}

TrainConfig parse_config(std::istream& in) {
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ContractViolation("config line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_config(in);
}

std::string to_text(const TrainConfig& config) {
  std::ostringstream out;
  out.precision(17);
  const_cast<TrainConfig&>(config).visit([&](std::string_view name, auto& field) {
    using T = std::remove_reference_t<decltype(field)>;
    out << name << " = ";
    if constexpr (std::is_same_v<T, bool>) out << (field ? "true" : "false");
    else out << field;
    out << '\n';
  });
  return out.str();
}

double lambda_m_at(const TrainConfig& config, int iter) {
  const int warm = config.resolved_warmup();
  const int last = config.iterations - 1;
  if (iter <= warm || last <= warm) return config.lambda_m_start;
  if (iter >= last) return config.lambda_m_end;
  const double t = static_cast<double>(iter - warm) / static_cast<double>(last - warm);
  return config.lambda_m_start + t * (config.lambda_m_end - config.lambda_m_start);
}

}  // namespace wildgs
