#include "turnrl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace turnrl::config {

using trainer::ConfigError;
using trainer::TrainConfig;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key, "expected a number, got '" + v + "'");
  return x;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return x;
}

int parse_int(const std::string& key, const std::string& v) {
  const std::uint64_t x = parse_unsigned(key, v);
  if (x > 1'000'000) throw ConfigError(key, "value out of range");
  return static_cast<int>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

template <class F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define SIZE_FIELD(KEY, MEMBER)                                                     \
  Field {                                                                           \
    KEY, [](const TrainConfig& c) { return std::to_string(c.MEMBER); },             \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_unsigned(KEY, v); } \
  }
#define INT_FIELD(KEY, MEMBER)                                                  \
  Field {                                                                       \
    KEY, [](const TrainConfig& c) { return std::to_string(c.MEMBER); },         \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_int(KEY, v); } \
  }
#define DOUBLE_FIELD(KEY, MEMBER)                                                  \
  Field {                                                                          \
    KEY, [](const TrainConfig& c) { return format_double(c.MEMBER); },             \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_double(KEY, v); } \
  }
#define BOOL_FIELD(KEY, MEMBER)                                                   \
  Field {                                                                         \
    KEY, [](const TrainConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }, \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); }  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"trainer.algorithm",
            [](const TrainConfig& c) { return std::string(trainer::to_string(c.algorithm)); },
            [](TrainConfig& c, const std::string& v) { c.algorithm = trainer::parse_algorithm(v); }},
      SIZE_FIELD("trainer.seed", seed),
      SIZE_FIELD("trainer.iterations", iterations),
      SIZE_FIELD("trainer.rollout_batch", rollout_batch),
      SIZE_FIELD("trainer.group_size", group_size),
      SIZE_FIELD("trainer.minibatch", minibatch),
      SIZE_FIELD("trainer.epochs", epochs),
      DOUBLE_FIELD("trainer.epsilon", epsilon),
      DOUBLE_FIELD("trainer.gamma", gamma),
      DOUBLE_FIELD("trainer.lambda", lambda),
      DOUBLE_FIELD("trainer.lr_actor", lr_actor),
      DOUBLE_FIELD("trainer.lr_critic", lr_critic),
      DOUBLE_FIELD("trainer.kl_coefficient", kl_coefficient),
      BOOL_FIELD("trainer.use_std", use_std),
      DOUBLE_FIELD("trainer.std_eps", std_eps),
      BOOL_FIELD("trainer.geometric_ratio", geometric_ratio),
      Field{"trainer.turn_normalizer",
            [](const TrainConfig& c) { return std::string(objective::to_string(c.turn_normalizer)); },
            [](TrainConfig& c, const std::string& v) {
              c.turn_normalizer = wrap("trainer.turn_normalizer",
                                       [&] { return objective::parse_normalizer(v); });
            }},
      BOOL_FIELD("trainer.whiten_advantages", whiten_advantages),
      Field{"trainer.objective_mode",
            [](const TrainConfig& c) {
              return c.objective_mode ? std::string(objective::to_string(*c.objective_mode))
                                      : std::string("auto");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "auto") {
                c.objective_mode.reset();
                return;
              }
              c.objective_mode =
                  wrap("trainer.objective_mode", [&] { return objective::parse_mode(v); });
            }},
      SIZE_FIELD("trainer.eval_every", eval_every),
      SIZE_FIELD("trainer.eval_episodes", eval_episodes),
      SIZE_FIELD("trainer.max_turns", max_turns),
      SIZE_FIELD("trainer.max_response_tokens", max_response_tokens),
      DOUBLE_FIELD("trainer.temperature", temperature),
      BOOL_FIELD("trainer.log_wall_time", log_wall_time),
      Field{"env.kind", [](const TrainConfig& c) { return std::string(env::to_string(c.env.kind)); },
            [](TrainConfig& c, const std::string& v) {
              c.env.kind = wrap("env.kind", [&] { return env::parse_env_kind(v); });
            }},
      INT_FIELD("env.width", env.width),
      INT_FIELD("env.height", env.height),
      INT_FIELD("env.boxes", env.boxes),
      INT_FIELD("env.max_steps", env.max_steps),
      INT_FIELD("env.reverse_steps", env.reverse_steps),
      INT_FIELD("env.catalog_size", env.catalog_size),
      INT_FIELD("env.page_size", env.page_size),
      SIZE_FIELD("model.embed_dim", embed_dim),
      SIZE_FIELD("model.window", window),
      SIZE_FIELD("model.hidden", hidden),
      DOUBLE_FIELD("model.init_scale", init_scale),
  };
  return table;
}

#undef SIZE_FIELD
#undef INT_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError(key, "unknown key");
}

}  // namespace

Document parse_ini(std::string_view text) {
  Document doc;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no), "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(line_no), "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
    doc[section.empty() ? key : section + "." + key] = value;
  }
  return doc;
}

Document read_ini_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ini(buf.str());
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

std::string resolve_key(std::string_view key) {
  const std::string k = trim(key);
  if (k.find('.') != std::string::npos) {
    field(k);
    return k;
  }
  std::string match;
  for (const auto& full : known_keys()) {
    if (full.substr(full.find('.') + 1) != k) continue;
    if (!match.empty()) throw ConfigError(k, "ambiguous key; qualify it with its section");
    match = full;
  }
  if (match.empty()) throw ConfigError(k, "unknown key");
  return match;
}

void apply_override(Document& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError(std::string(assignment), "override must look like key=value");
  doc[resolve_key(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

TrainConfig resolve(const Document& raw) {
  Document doc;
  for (const auto& [key, value] : raw) doc[resolve_key(key)] = value;
  trainer::Algorithm algorithm = trainer::Algorithm::turn_ppo;
  if (const auto it = doc.find("trainer.algorithm"); it != doc.end())
    algorithm = trainer::parse_algorithm(it->second);
  TrainConfig c = trainer::default_config(algorithm);
  for (const auto& [key, value] : doc) {
    if (key == "trainer.algorithm") continue;
    field(key).set(c, value);
  }
  trainer::validate(c);
  return c;
}

Document to_document(const TrainConfig& c) {
  Document doc;
  for (const auto& f : fields()) doc[f.key] = f.get(c);
  return doc;
}

std::string to_ini(const TrainConfig& c) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(c) << '\n';
  }
  return out.str();
}

Document load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || text[first] != '{') return parse_ini(text);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path, std::string("malformed manifest: ") + e.what());
  }
  if (!j.contains("config") || !j["config"].is_object())
    throw ConfigError(path, "manifest has no config object");
  Document doc;
  for (const auto& [key, value] : j["config"].items()) {
    if (!value.is_string()) throw ConfigError(key, "manifest values must be strings");
    doc[key] = value.get<std::string>();
  }
  return doc;
}

}  // namespace turnrl::config
