#include "occupred/llm_gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "occupred/digest.hpp"

namespace occupred {

// ---------------------------------------------------------------------------
// Enums and JSON

std::string to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw InvalidArgument("unknown role '" + s + "'");
}

std::string to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop:
      return "stop";
    case FinishReason::length:
      return "length";
    case FinishReason::content_filter:
      return "content_filter";
    case FinishReason::other:
      return "other";
  }
  return "other";
}

FinishReason finish_reason_from_string(const std::string& s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  if (s == "content_filter") return FinishReason::content_filter;
  return FinishReason::other;
}

void to_json(Json& j, const ChatMessage& m) { j = Json{{"role", to_string(m.role)}, {"content", m.content}}; }

void from_json(const Json& j, ChatMessage& m) {
  m.role = role_from_string(j.at("role").get<std::string>());
  m.content = j.at("content").get<std::string>();
}

void to_json(Json& j, const ChatResponse& r) {
  j = Json::object();
  j["text"] = r.text;
  j["finish_reason"] = to_string(r.finish_reason);
  if (r.token_logprobs) {
    Json lp = Json::array();
    for (const auto& t : *r.token_logprobs) lp.push_back(Json{{"token", t.token}, {"logprob", t.logprob}});
    j["token_logprobs"] = std::move(lp);
  }
  j["usage"] = Json{{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}};
}

void from_json(const Json& j, ChatResponse& r) {
  r.text = j.at("text").get<std::string>();
  r.finish_reason = finish_reason_from_string(j.value("finish_reason", std::string("stop")));
  r.token_logprobs.reset();
  if (auto it = j.find("token_logprobs"); it != j.end() && !it->is_null()) {
    std::vector<TokenLogprob> lp;
    for (const auto& t : *it) lp.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
    r.token_logprobs = std::move(lp);
  }
  if (auto it = j.find("usage"); it != j.end()) {
    r.usage.prompt_tokens = it->value("prompt_tokens", 0);
    r.usage.completion_tokens = it->value("completion_tokens", 0);
  }
}

ChatRequest CallSettings::request(std::string prompt, int attempt_index,
                                  std::map<std::string, std::string> labels) const {
  ChatRequest r;
  r.endpoint_id = endpoint_id;
  r.model = model;
  r.messages.push_back({Role::user, std::move(prompt)});
  r.temperature = temperature;
  r.max_tokens = max_tokens;
  r.sampling_seed = sampling_seed;
  r.attempt_index = attempt_index;
  r.labels = std::move(labels);
  return r;
}

void ChatRequest::validate() const {
  if (std::none_of(messages.begin(), messages.end(), [](const ChatMessage& m) { return m.role == Role::user; })) {
    throw InvalidArgument("chat request needs at least one user message");
  }
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw InvalidArgument("temperature must be within [0, 2]");
  if (max_tokens <= 0) throw InvalidArgument("max_tokens must be positive");
}

std::chrono::milliseconds RetryPolicy::delay(int retry) const {
  auto d = backoff_base;
  for (int i = 1; i < retry && d < backoff_cap; ++i) d *= 2;
  return std::min(d, backoff_cap);
}

// ---------------------------------------------------------------------------
// Cache

Json cache_key_material(const ChatRequest& request) {
  Json j = Json::object();
  j["endpoint_id"] = request.endpoint_id;
  j["model"] = request.model;
  j["messages"] = request.messages;
  j["temperature"] = request.temperature;
  j["max_tokens"] = request.max_tokens;
  j["sampling_seed"] = request.sampling_seed ? Json(*request.sampling_seed) : Json(nullptr);
  j["attempt_index"] = request.attempt_index;
  if (request.logprobs) j["logprobs"] = true;
  return j;
}

std::string request_digest(const ChatRequest& request) { return sha256_hex(cache_key_material(request).dump()); }

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ResponseCache::path_for(const std::string& digest) const {
  return dir_ / digest.substr(0, 2) / (digest + ".json");
}

std::optional<ChatResponse> ResponseCache::get(const std::string& digest) const {
  const auto p = path_for(digest);
  std::error_code ec;
  if (!std::filesystem::exists(p, ec)) return std::nullopt;
  try {
    return Json::parse(read_file(p)).at("response").get<ChatResponse>();
  } catch (const std::exception&) {
    // Unreadable entries are treated as misses and rewritten.
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& digest, const Json& key_material, const ChatResponse& response) const {
  Json entry = Json::object();
  entry["digest"] = digest;
  entry["request"] = key_material;
  entry["response"] = response;
  write_file_atomic(path_for(digest), entry.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  if (!backend_) throw InvalidArgument("gateway needs a backend");
  if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
  if (!options_.sleeper) options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

const RetryPolicy& Gateway::retry_for(const std::string& endpoint_id) const {
  auto it = options_.endpoint_retry.find(endpoint_id);
  return it == options_.endpoint_retry.end() ? options_.retry : it->second;
}

namespace {

void check_response(const ChatResponse& r) {
  if (r.token_logprobs) {
    for (const auto& t : *r.token_logprobs) {
      if (!(t.logprob <= 0.0)) throw MalformedResponse("token logprob " + std::to_string(t.logprob) + " > 0");
    }
  }
}

}  // namespace

ChatResponse Gateway::complete(const ChatRequest& request) {
  request.validate();
  const auto material = cache_key_material(request);
  const auto digest = sha256_hex(material.dump());
  if (cache_) {
    if (auto hit = cache_->get(digest)) {
      ++hits_;
      return *std::move(hit);
    }
  }
  ++misses_;
  const auto& policy = retry_for(request.endpoint_id);
  const int max_attempts = std::max(1, policy.max_attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      ++calls_;
      auto response = backend_->send(request);
      check_response(response);
      if (cache_) cache_->put(digest, material, response);
      return response;
    } catch (const TransportError& e) {
      if (!e.retryable() || attempt >= max_attempts) throw;
    } catch (const RateLimited&) {
      if (attempt >= max_attempts) throw;
    }
    ++retries_;
    options_.sleeper(policy.delay(attempt));
  }
}

std::vector<CallResult> Gateway::complete_batch(const std::vector<ChatRequest>& requests, std::size_t max_in_flight) {
  if (max_in_flight == 0) throw InvalidArgument("max_in_flight must be >= 1");
  // Identical requests are issued once; the lowest position is the one sent.
  std::vector<std::size_t> unique;
  std::vector<std::size_t> source(requests.size());
  {
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      std::string d;
      try {
        d = request_digest(requests[i]);
      } catch (const std::exception&) {
        d = "invalid#" + std::to_string(i);
      }
      auto [it, fresh] = seen.emplace(std::move(d), i);
      if (fresh) unique.push_back(i);
      source[i] = it->second;
    }
  }
  std::vector<CallResult> results(requests.size());
  auto run_one = [&](std::size_t i) {
    try {
      results[i].response = complete(requests[i]);
    } catch (const Error& e) {
      results[i].error = CallError{e.kind(), e.what()};
    } catch (const std::exception& e) {
      results[i].error = CallError{"InternalError", e.what()};
    }
  };
  const std::size_t workers = std::min(max_in_flight, unique.size());
  if (workers <= 1) {
    for (auto i : unique) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < unique.size(); k = next++) run_one(unique[k]);
      });
    }
  }
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (source[i] != i) results[i] = results[source[i]];
  }
  return results;
}

GatewayCounters Gateway::counters() const { return {hits_.load(), misses_.load(), calls_.load(), retries_.load()}; }

// ---------------------------------------------------------------------------
// Scripted mock

bool PlaybookMatch::matches(const ChatRequest& request, const std::string& request_digest) const {
  if (digest && *digest != request_digest) return false;
  if (endpoint_id && *endpoint_id != request.endpoint_id) return false;
  if (attempt_index && *attempt_index != request.attempt_index) return false;
  for (const auto& [k, v] : labels) {
    auto it = request.labels.find(k);
    if (it == request.labels.end() || it->second != v) return false;
  }
  if (!contains.empty()) {
    std::string all;
    for (const auto& m : request.messages) {
      all += m.content;
      all += '\n';
    }
    for (const auto& needle : contains) {
      if (all.find(needle) == std::string::npos) return false;
    }
  }
  return true;
}

namespace {

ScriptedStep::Kind step_kind(const std::string& s) {
  if (s == "transport") return ScriptedStep::Kind::transport_error;
  if (s == "rate_limited") return ScriptedStep::Kind::rate_limited;
  if (s == "malformed") return ScriptedStep::Kind::malformed;
  throw InvalidArgument("unknown scripted error '" + s + "'");
}

std::string step_kind_name(ScriptedStep::Kind k) {
  switch (k) {
    case ScriptedStep::Kind::transport_error:
      return "transport";
    case ScriptedStep::Kind::rate_limited:
      return "rate_limited";
    case ScriptedStep::Kind::malformed:
      return "malformed";
    case ScriptedStep::Kind::respond:
      break;
  }
  return "respond";
}

}  // namespace

Playbook Playbook::from_json(const Json& j) {
  Playbook pb;
  for (const auto& r : j.at("rules")) {
    PlaybookRule rule;
    rule.name = r.value("name", std::string());
    if (auto m = r.find("match"); m != r.end()) {
      if (m->contains("digest")) rule.match.digest = m->at("digest").get<std::string>();
      if (m->contains("endpoint")) rule.match.endpoint_id = m->at("endpoint").get<std::string>();
      if (m->contains("attempt_index")) rule.match.attempt_index = m->at("attempt_index").get<int>();
      if (m->contains("labels")) rule.match.labels = m->at("labels").get<std::map<std::string, std::string>>();
      if (m->contains("contains")) {
        const auto& c = m->at("contains");
        if (c.is_string()) {
          rule.match.contains.push_back(c.get<std::string>());
        } else {
          rule.match.contains = c.get<std::vector<std::string>>();
        }
      }
    }
    for (const auto& s : r.at("responses")) {
      ScriptedStep step;
      if (s.contains("error")) {
        step.kind = step_kind(s.at("error").get<std::string>());
        step.text = s.value("message", std::string());
      } else {
        step.text = s.at("text").get<std::string>();
        if (auto lp = s.find("token_logprobs"); lp != s.end()) {
          std::vector<TokenLogprob> v;
          for (const auto& t : *lp) v.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
          step.token_logprobs = std::move(v);
        }
      }
      step.delay = std::chrono::milliseconds(s.value("delay_ms", 0));
      rule.steps.push_back(std::move(step));
    }
    if (rule.steps.empty()) throw InvalidArgument("playbook rule '" + rule.name + "' has no responses");
    rule.repeat_last = r.value("exhausted", std::string("repeat_last")) != "miss";
    pb.rules.push_back(std::move(rule));
  }
  return pb;
}

Playbook Playbook::load(const std::filesystem::path& path) {
  try {
    return from_json(Json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string(), 0, e.what());
  }
}

Json Playbook::to_json() const {
  Json rules = Json::array();
  for (const auto& r : this->rules) {
    Json jr = Json::object();
    if (!r.name.empty()) jr["name"] = r.name;
    Json m = Json::object();
    if (r.match.digest) m["digest"] = *r.match.digest;
    if (r.match.endpoint_id) m["endpoint"] = *r.match.endpoint_id;
    if (r.match.attempt_index) m["attempt_index"] = *r.match.attempt_index;
    if (!r.match.labels.empty()) m["labels"] = r.match.labels;
    if (!r.match.contains.empty()) m["contains"] = r.match.contains;
    jr["match"] = std::move(m);
    Json steps = Json::array();
    for (const auto& s : r.steps) {
      Json js = Json::object();
      if (s.kind == ScriptedStep::Kind::respond) {
        js["text"] = s.text;
        if (s.token_logprobs) {
          Json lp = Json::array();
          for (const auto& t : *s.token_logprobs) lp.push_back(Json{{"token", t.token}, {"logprob", t.logprob}});
          js["token_logprobs"] = std::move(lp);
        }
      } else {
        js["error"] = step_kind_name(s.kind);
        if (!s.text.empty()) js["message"] = s.text;
      }
      if (s.delay.count() > 0) js["delay_ms"] = s.delay.count();
      steps.push_back(std::move(js));
    }
    jr["responses"] = std::move(steps);
    if (!r.repeat_last) jr["exhausted"] = "miss";
    rules.push_back(std::move(jr));
  }
  return Json{{"rules", std::move(rules)}};
}

ScriptedMock::ScriptedMock(Playbook playbook) : playbook_(std::move(playbook)), cursors_(playbook_.rules.size(), 0) {}

ChatResponse ScriptedMock::send(const ChatRequest& request) {
  const auto digest = request_digest(request);
  struct InFlight {
    ScriptedMock& m;
    explicit InFlight(ScriptedMock& mock) : m(mock) {
      auto now = ++m.in_flight_;
      auto prev = m.max_concurrent_.load();
      while (now > prev && !m.max_concurrent_.compare_exchange_weak(prev, now)) {
      }
    }
    ~InFlight() { --m.in_flight_; }
  } guard(*this);

  std::optional<ScriptedStep> step;
  TranscriptEntry entry{0, digest, request.endpoint_id, request.model, request.attempt_index, request.labels,
                        request.messages, "", ""};
  {
    std::lock_guard lock(mu_);
    entry.sequence = transcript_.size();
    for (std::size_t r = 0; r < playbook_.rules.size(); ++r) {
      const auto& rule = playbook_.rules[r];
      if (!rule.match.matches(request, digest)) continue;
      auto& cursor = cursors_[r];
      if (cursor < rule.steps.size()) {
        step = rule.steps[cursor++];
      } else if (rule.repeat_last) {
        step = rule.steps.back();
      } else {
        continue;
      }
      entry.rule = rule.name.empty() ? "#" + std::to_string(r) : rule.name;
      break;
    }
    if (!step) {
      entry.outcome = "PlaybookMiss";
    } else if (step->kind == ScriptedStep::Kind::respond) {
      entry.outcome = "ok";
    } else {
      entry.outcome = step_kind_name(step->kind);
    }
    transcript_.push_back(entry);
  }
  if (!step) throw PlaybookMiss("no playbook rule matches request " + digest.substr(0, 12));
  if (step->delay.count() > 0) std::this_thread::sleep_for(step->delay);
  switch (step->kind) {
    case ScriptedStep::Kind::transport_error:
      throw TransportError(step->text.empty() ? "scripted transport failure" : step->text);
    case ScriptedStep::Kind::rate_limited:
      throw RateLimited(step->text.empty() ? "scripted rate limit" : step->text);
    case ScriptedStep::Kind::malformed:
      throw MalformedResponse(step->text.empty() ? "scripted malformed response" : step->text);
    case ScriptedStep::Kind::respond:
      break;
  }
  ChatResponse response;
  response.text = step->text;
  response.token_logprobs = step->token_logprobs;
  response.usage.completion_tokens = static_cast<int>(std::count(step->text.begin(), step->text.end(), ' ') + 1);
  return response;
}

std::vector<TranscriptEntry> ScriptedMock::transcript() const {
  std::lock_guard lock(mu_);
  return transcript_;
}

std::size_t ScriptedMock::calls() const {
  std::lock_guard lock(mu_);
  return transcript_.size();
}

}  // namespace occupred
