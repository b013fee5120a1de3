#pragma once

// JSON serialization of configs and scenarios, strict key checking, and
// JSON-lines file helpers.

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "eigenprecode/channel.hpp"
#include "eigenprecode/error.hpp"

namespace eigenprecode::io {

using json = nlohmann::json;

/// Throws InvalidConfig naming the first key of `j` not in `allowed`.
inline void reject_unknown(const json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw Error(ErrorKind::InvalidConfig, where + "." + key + ": unknown key");
}

template <typename T>
T get_field(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorKind::InvalidConfig, where + "." + key + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::InvalidConfig, where + "." + key + ": wrong type");
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, const T& fallback, const std::string& where) {
  return j.contains(key) ? get_field<T>(j, key, where) : fallback;
}

inline json to_json(const ScenarioConfig& c) {
  return json{{"Mv", c.Mv},   {"Mh", c.Mh}, {"Nv", c.Nv},         {"Nh", c.Nh},
              {"K", c.K},     {"P", c.P},   {"sigma2", c.sigma2}, {"seed", c.seed}};
}

/// Missing keys take the defaults of `base`; unknown keys are rejected.
inline ScenarioConfig config_from_json(const json& j, const std::string& where = "config",
                                       const ScenarioConfig& base = {}) {
  reject_unknown(j, {"Mv", "Mh", "Nv", "Nh", "K", "P", "sigma2", "seed"}, where);
  ScenarioConfig c = base;
  c.Mv = get_or(j, "Mv", c.Mv, where);
  c.Mh = get_or(j, "Mh", c.Mh, where);
  c.Nv = get_or(j, "Nv", c.Nv, where);
  c.Nh = get_or(j, "Nh", c.Nh, where);
  c.K = get_or(j, "K", c.K, where);
  c.P = get_or(j, "P", c.P, where);
  c.sigma2 = get_or(j, "sigma2", c.sigma2, where);
  c.seed = get_or(j, "seed", c.seed, where);
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, where + "." + std::string(e.what()).substr(
                                                            std::string("InvalidConfig: ").size()));
  }
  return c;
}

struct Scenario {
  ScenarioConfig config;
  ChannelState state;
};

inline json to_json(const ChannelState& state) {
  json users = json::array();
  for (const auto& u : state.users) {
    std::vector<double> re(u.h_bar.size()), im(u.h_bar.size());
    for (Eigen::Index i = 0; i < u.h_bar.size(); ++i) {
      re[i] = u.h_bar[i].real();
      im[i] = u.h_bar[i].imag();
    }
    users.push_back(json{{"h_bar_re", re}, {"h_bar_im", im}, {"omega", u.omega}, {"beta", u.beta}});
  }
  return users;
}

inline json to_json(const Scenario& s) {
  return json{{"config", to_json(s.config)}, {"users", to_json(s.state)}};
}

inline ChannelState state_from_json(const json& users, const std::string& where = "users") {
  if (!users.is_array()) throw Error(ErrorKind::InvalidConfig, where + ": expected an array");
  ChannelState state;
  for (std::size_t k = 0; k < users.size(); ++k) {
    const std::string w = where + "[" + std::to_string(k) + "]";
    const json& u = users[k];
    reject_unknown(u, {"h_bar_re", "h_bar_im", "omega", "beta"}, w);
    const auto re = get_field<std::vector<double>>(u, "h_bar_re", w);
    const auto im = get_field<std::vector<double>>(u, "h_bar_im", w);
    if (re.size() != im.size())
      throw Error(ErrorKind::InvalidConfig, w + ".h_bar_im: length differs from h_bar_re");
    UserChannel uc;
    uc.h_bar.resize(static_cast<Eigen::Index>(re.size()));
    for (std::size_t i = 0; i < re.size(); ++i) uc.h_bar[static_cast<Eigen::Index>(i)] = {re[i], im[i]};
    uc.omega = get_field<std::vector<double>>(u, "omega", w);
    uc.beta = get_field<double>(u, "beta", w);
    state.users.push_back(std::move(uc));
  }
  return state;
}

inline Scenario scenario_from_json(const json& j, const std::set<std::string>& extra_keys = {}) {
  std::set<std::string> allowed{"config", "users"};
  allowed.insert(extra_keys.begin(), extra_keys.end());
  reject_unknown(j, allowed, "scenario");
  Scenario s;
  if (!j.contains("config")) throw Error(ErrorKind::InvalidConfig, "scenario.config: missing");
  if (!j.contains("users")) throw Error(ErrorKind::InvalidConfig, "scenario.users: missing");
  s.config = config_from_json(j.at("config"), "scenario.config");
  s.state = state_from_json(j.at("users"), "scenario.users");
  try {
    channel::validate_state(s.state, s.config);
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("scenario: ") + e.what());
  }
  return s;
}

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, where + ": " + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_json(text, path);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  os << text;
  if (!os) throw Error(ErrorKind::Io, "failed writing " + path);
}

/// Complete lines of a JSON-lines file; a trailing unterminated line is dropped.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i)
    if (text[i] == '\n') {
      if (i > start) lines.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  return lines;
}

inline std::vector<Scenario> read_scenarios(const std::string& path) {
  std::vector<Scenario> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i)
    out.push_back(scenario_from_json(parse_json(lines[i], path + ":" + std::to_string(i + 1))));
  return out;
}

inline void write_scenarios(const std::string& path, const std::vector<Scenario>& scenarios) {
  std::string text;
  for (const auto& s : scenarios) text += to_json(s).dump() + "\n";
  write_text_file(path, text);
}

}  // namespace eigenprecode::io
