#include "occupred/config.hpp"

#include <cctype>
#include <charconv>
#include <set>

#include "occupred/dataset.hpp"
#include "occupred/digest.hpp"
#include "occupred/history.hpp"
#include "occupred/inference.hpp"

namespace occupred {

// ---------------------------------------------------------------------------
// TOML subset

namespace {

class Cursor {
 public:
  Cursor(std::string_view text, const std::string& source, std::size_t line)
      : s_(text), source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(source_ + ":" + std::to_string(line_) + ": " + what);
  }
  void skip_ws() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return i_ >= s_.size() || s_[i_] == '#' || s_[i_] == '\r';
  }
  char peek() const { return i_ < s_.size() ? s_[i_] : '\0'; }
  bool eat(char c) {
    skip_ws();
    if (peek() != c) return false;
    ++i_;
    return true;
  }

  std::string key() {
    skip_ws();
    if (peek() == '"') return string();
    const auto start = i_;
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_' || s_[i_] == '-')) ++i_;
    if (start == i_) fail("expected a key");
    return std::string(s_.substr(start, i_ - start));
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key()};
    while (eat('.')) parts.push_back(key());
    return parts;
  }

  std::string string() {
    if (peek() != '"') fail("expected '\"'");
    ++i_;
    std::string out;
    while (i_ < s_.size() && s_[i_] != '"') {
      char c = s_[i_++];
      if (c == '\\') {
        if (i_ >= s_.size()) break;
        const char e = s_[i_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      } else {
        out += c;
      }
    }
    if (i_ >= s_.size()) fail("unterminated string");
    ++i_;
    return out;
  }

  Json value() {
    skip_ws();
    const char c = peek();
    if (c == '"') return string();
    if (c == '[') {
      ++i_;
      Json arr = Json::array();
      if (eat(']')) return arr;
      for (;;) {
        arr.push_back(value());
        if (eat(']')) return arr;
        if (!eat(',')) fail("expected ',' or ']' in array");
        if (eat(']')) return arr;
      }
    }
    const auto start = i_;
    while (i_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != ',' && s_[i_] != ']' &&
           s_[i_] != '#')
      ++i_;
    std::string tok(s_.substr(start, i_ - start));
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok.empty()) fail("expected a value");
    std::string digits;
    for (char ch : tok)
      if (ch != '_') digits += ch;
    const bool floating = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
    if (!floating) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (ec == std::errc() && p == digits.data() + digits.size()) return v;
      if (digits[0] != '-') {
        std::uint64_t u = 0;
        auto [q, ec2] = std::from_chars(digits.data(), digits.data() + digits.size(), u);
        if (ec2 == std::errc() && q == digits.data() + digits.size()) return u;
      }
      fail("invalid value '" + tok + "'");
    }
    try {
      std::size_t used = 0;
      const double d = std::stod(digits, &used);
      if (used != digits.size()) fail("invalid number '" + tok + "'");
      return d;
    } catch (const std::logic_error&) {
      fail("invalid number '" + tok + "'");
    }
  }

 private:
  std::string_view s_;
  const std::string& source_;
  std::size_t line_;
  std::size_t i_ = 0;
};

}  // namespace

Json parse_toml_subset(const std::string& text, const std::string& source) {
  Json root = Json::object();
  Json* table = &root;
  std::set<std::string> seen_tables;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    Cursor cur(line, source, line_no);
    if (cur.at_end_or_comment()) {
      if (end == text.size()) break;
      continue;
    }
    if (cur.eat('[')) {
      const auto parts = cur.dotted_key();
      if (!cur.eat(']')) cur.fail("expected ']'");
      if (!cur.at_end_or_comment()) cur.fail("trailing text after table header");
      std::string name;
      table = &root;
      for (const auto& p : parts) {
        name += (name.empty() ? "" : ".") + p;
        auto& next = (*table)[p];
        if (next.is_null()) next = Json::object();
        if (!next.is_object()) cur.fail("'" + name + "' is not a table");
        table = &next;
      }
      if (!seen_tables.insert(name).second) cur.fail("table [" + name + "] defined twice");
    } else {
      const auto parts = cur.dotted_key();
      if (!cur.eat('=')) cur.fail("expected '='");
      auto v = cur.value();
      if (!cur.at_end_or_comment()) cur.fail("trailing text after value");
      Json* t = table;
      for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
        auto& next = (*t)[parts[k]];
        if (next.is_null()) next = Json::object();
        if (!next.is_object()) cur.fail("'" + parts[k] + "' is not a table");
        t = &next;
      }
      if (t->contains(parts.back())) cur.fail("duplicate key '" + parts.back() + "'");
      (*t)[parts.back()] = std::move(v);
    }
    if (end == text.size()) break;
  }
  return root;
}

// ---------------------------------------------------------------------------
// RunConfig

namespace {

class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("[" + where_ + "] must be a table");
  }
  ~Reader() = default;

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = convert<T>(j_.at(key));
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = convert<T>(j_.at(key));
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  void skip(const char* key) { used_.insert(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown key " + where_ + "." + it.key());
    }
  }

 private:
  template <typename T>
  static T convert(const Json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw nlohmann::json::type_error::create(302, "bool", &v);
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      return std::filesystem::path(v.get<std::string>());
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw nlohmann::json::type_error::create(302, "number", &v);
      return v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw nlohmann::json::type_error::create(302, "unsigned", &v);
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw nlohmann::json::type_error::create(302, "integer", &v);
      return v.get<T>();
    } else {
      return v.get<T>();
    }
  }

  const Json& j_;
  std::string where_;
  std::set<std::string> used_;
};

const std::set<std::string> kEndpointIds = {"generator", "judge", "reasoner", "predictor", "joint"};

}  // namespace

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig c;
  Reader top(j, "config");
  for (const char* section : {"run", "seeds", "synth", "paths", "endpoints", "robustness", "emit", "predict", "evaluate"})
    top.skip(section);
  top.finish();

  if (j.contains("run")) {
    Reader r(j["run"], "run");
    r.get("runs_dir", c.runs_dir);
    r.get("tau", c.tau);
    r.get("n_attempts", c.n_attempts);
    r.get("max_in_flight", c.max_in_flight);
    r.get("history_template", c.history_template);
    r.get("prompt_version", c.prompt_version);
    r.get("test_fraction", c.test_fraction);
    r.finish();
  }
  if (j.contains("seeds")) {
    Reader r(j["seeds"], "seeds");
    r.get("sampling", c.seeds.sampling);
    r.get("perturbation", c.seeds.perturbation);
    r.get("pairing", c.seeds.pairing);
    r.get("synth", c.seeds.synth);
    r.get("split", c.seeds.split);
    r.get("scenario", c.seeds.scenario);
    r.finish();
  }
  if (j.contains("synth")) {
    Reader r(j["synth"], "synth");
    r.get("users", c.synth_users);
    r.get("noise", c.synth_noise);
    r.get("p_correct_attempt", c.p_correct_attempt);
    r.get("p_judge_reject", c.p_judge_reject);
    r.get("p_predict_correct", c.p_predict_correct);
    r.finish();
  }
  if (j.contains("paths")) {
    Reader r(j["paths"], "paths");
    r.get("corpus", c.corpus_path);
    r.get("occupations", c.occupations_path);
    r.get("related", c.related_path);
    r.finish();
  }
  if (j.contains("robustness")) {
    Reader r(j["robustness"], "robustness");
    r.get("items", c.robustness_items);
    r.finish();
  }
  if (j.contains("emit")) {
    Reader r(j["emit"], "emit");
    r.get("sft_variant", c.sft_variant);
    r.get("dpo_variant", c.dpo_variant);
    r.get("pairing_policy", c.pairing_policy);
    r.finish();
  }
  if (j.contains("predict")) {
    Reader r(j["predict"], "predict");
    r.get("modes", c.predict_modes);
    r.finish();
  }
  if (j.contains("evaluate")) {
    Reader r(j["evaluate"], "evaluate");
    r.get("reason_quality", c.evaluate_reasons);
    r.finish();
  }
  if (j.contains("endpoints")) {
    if (!j["endpoints"].is_object()) throw ConfigError("[endpoints] must be a table");
    for (auto it = j["endpoints"].begin(); it != j["endpoints"].end(); ++it) {
      if (!kEndpointIds.count(it.key())) throw ConfigError("unknown endpoint '" + it.key() + "'");
      EndpointSettings e;
      Reader r(it.value(), "endpoints." + it.key());
      r.get("base_url", e.base_url);
      r.get("model", e.model);
      r.get("api_key_env", e.api_key_env);
      r.get("temperature", e.temperature);
      r.get("max_tokens", e.max_tokens);
      r.get("seed", e.sampling_seed);
      r.get("max_in_flight", e.max_in_flight);
      r.get("timeout_ms", e.timeout_ms);
      r.get("max_attempts", e.max_attempts);
      r.skip("api_key");
      r.finish();
      if (it.value().contains("api_key")) {
        throw ConfigError("endpoints." + it.key() + ".api_key is not allowed; name an environment variable in api_key_env");
      }
      c.endpoints[it.key()] = e;
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_toml(const std::string& text, const std::string& source) {
  return from_json(parse_toml_subset(text, source));
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return from_toml(text, path.string());
}

void RunConfig::validate() const {
  if (!(tau >= 1.0 && tau <= 5.0)) throw ConfigError("run.tau must be within [1, 5]");
  if (n_attempts < 1) throw ConfigError("run.n_attempts must be at least 1");
  if (max_in_flight < 1) throw ConfigError("run.max_in_flight must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("run.test_fraction must be within (0, 1)");
  for (double p : {p_correct_attempt, p_judge_reject, p_predict_correct}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth probabilities must be within [0, 1]");
  }
  if (robustness_items < 1) throw ConfigError("robustness.items must be at least 1");
  const auto templates = history_template_ids();
  if (std::find(templates.begin(), templates.end(), history_template) == templates.end()) {
    throw ConfigError("unknown history template '" + history_template + "'");
  }
  try {
    sft_variant_from_string(sft_variant);
    dpo_variant_from_string(dpo_variant);
    pairing_policy_from_string(pairing_policy);
    for (const auto& m : predict_modes) predict_mode_from_string(m);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (predict_modes.empty()) throw ConfigError("predict.modes must name at least one mode");
  for (const auto& [id, e] : endpoints) {
    if (e.temperature && !(*e.temperature >= 0.0 && *e.temperature <= 2.0)) {
      throw ConfigError("endpoints." + id + ".temperature must be within [0, 2]");
    }
    if (e.max_tokens < 1 || e.max_in_flight < 1 || e.max_attempts < 1 || e.timeout_ms < 1) {
      throw ConfigError("endpoints." + id + " limits must be positive");
    }
  }
}

const EndpointSettings& RunConfig::endpoint(const std::string& id) const {
  auto it = endpoints.find(id);
  if (it == endpoints.end() || it->second.base_url.empty()) {
    throw ConfigError("endpoint '" + id + "' is not configured (add [endpoints." + id + "] with base_url)");
  }
  return it->second;
}

void RunConfig::apply_seed_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("seed override must look like name=value: '" + assignment + "'");
  const auto name = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || text.empty()) {
    throw ConfigError("seed override '" + assignment + "' needs a non-negative integer");
  }
  std::map<std::string, std::uint64_t*> slots = {{"sampling", &seeds.sampling}, {"perturbation", &seeds.perturbation},
                                                 {"pairing", &seeds.pairing},   {"synth", &seeds.synth},
                                                 {"split", &seeds.split},       {"scenario", &seeds.scenario}};
  auto it = slots.find(name);
  if (it == slots.end()) throw ConfigError("unknown seed '" + name + "'");
  *it->second = v;
}

Json RunConfig::to_json() const {
  Json j;
  j["run"] = Json{{"tau", tau},
                  {"n_attempts", n_attempts},
                  {"max_in_flight", max_in_flight},
                  {"history_template", history_template},
                  {"prompt_version", prompt_version},
                  {"test_fraction", test_fraction}};
  j["seeds"] = Json{{"sampling", seeds.sampling}, {"perturbation", seeds.perturbation}, {"pairing", seeds.pairing},
                    {"synth", seeds.synth},       {"split", seeds.split},               {"scenario", seeds.scenario}};
  j["synth"] = Json{{"users", synth_users},
                    {"noise", synth_noise},
                    {"p_correct_attempt", p_correct_attempt},
                    {"p_judge_reject", p_judge_reject},
                    {"p_predict_correct", p_predict_correct}};
  Json paths = Json::object();
  if (corpus_path) paths["corpus"] = corpus_path->string();
  if (occupations_path) paths["occupations"] = occupations_path->string();
  if (related_path) paths["related"] = related_path->string();
  j["paths"] = paths;
  j["robustness"] = Json{{"items", robustness_items}};
  j["emit"] = Json{{"sft_variant", sft_variant}, {"dpo_variant", dpo_variant}, {"pairing_policy", pairing_policy}};
  j["predict"] = Json{{"modes", predict_modes}};
  j["evaluate"] = Json{{"reason_quality", evaluate_reasons}};
  Json eps = Json::object();
  for (const auto& [id, e] : endpoints) {
    Json ej{{"base_url", e.base_url},           {"model", e.model},
            {"api_key_env", e.api_key_env},     {"max_tokens", e.max_tokens},
            {"max_in_flight", e.max_in_flight}, {"timeout_ms", e.timeout_ms},
            {"max_attempts", e.max_attempts}};
    ej["temperature"] = e.temperature ? Json(*e.temperature) : Json(nullptr);
    ej["seed"] = e.sampling_seed ? Json(*e.sampling_seed) : Json(nullptr);
    eps[id] = std::move(ej);
  }
  j["endpoints"] = eps;
  return j;
}

std::string RunConfig::digest() const { return sha256_hex(to_json().dump()); }

}  // namespace occupred
