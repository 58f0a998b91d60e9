#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>

#include "occupred/llm_gateway.hpp"

namespace occupred {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.origin = url.substr(0, path_start);
  p.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
  return p;
}

}  // namespace

HttpBackend::HttpBackend(std::vector<EndpointConfig> endpoints) {
  for (auto& e : endpoints) {
    if (e.max_in_flight < 1) throw InvalidArgument("endpoint " + e.id + ": max_in_flight must be >= 1");
    (void)split_url(e.base_url);
    endpoints_.emplace(e.id, std::move(e));
  }
}

Json HttpBackend::request_body(const ChatRequest& request) {
  Json body = Json::object();
  body["model"] = request.model;
  body["messages"] = request.messages;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  if (request.sampling_seed) body["seed"] = *request.sampling_seed;
  if (request.logprobs) body["logprobs"] = true;
  return body;
}

ChatResponse HttpBackend::parse_response_body(const std::string& body) {
  try {
    const auto j = Json::parse(body);
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    const auto& content = choice.at("message").at("content");
    if (content.is_null()) throw MalformedResponse("completion has null content");
    r.text = content.get<std::string>();
    if (auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string()) {
      r.finish_reason = finish_reason_from_string(fr->get<std::string>());
    }
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      std::vector<TokenLogprob> tokens;
      for (const auto& t : lp->at("content")) {
        tokens.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
      }
      r.token_logprobs = std::move(tokens);
    }
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      r.usage.prompt_tokens = u->value("prompt_tokens", 0);
      r.usage.completion_tokens = u->value("completion_tokens", 0);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponse(std::string("cannot parse completion: ") + e.what());
  }
}

ChatResponse HttpBackend::send(const ChatRequest& request) {
  auto it = endpoints_.find(request.endpoint_id);
  if (it == endpoints_.end()) throw InvalidArgument("unknown endpoint '" + request.endpoint_id + "'");
  const auto& ep = it->second;
  const auto url = split_url(ep.base_url);

  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(ep.timeout);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);

  httplib::Headers headers;
  if (!ep.api_key_env.empty()) {
    const char* key = std::getenv(ep.api_key_env.c_str());
    if (!key || !*key) {
      throw TransportError("environment variable " + ep.api_key_env + " is not set", false);
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  auto res = client.Post(url.path + "/chat/completions", headers, request_body(request).dump(), "application/json");
  if (!res) throw TransportError("endpoint " + ep.id + ": " + httplib::to_string(res.error()));
  if (res->status == 429) throw RateLimited("endpoint " + ep.id + " returned 429");
  if (res->status >= 500) throw TransportError("endpoint " + ep.id + " returned " + std::to_string(res->status));
  if (res->status != 200) {
    throw TransportError("endpoint " + ep.id + " returned " + std::to_string(res->status), false);
  }
  return parse_response_body(res->body);
}

}  // namespace occupred
