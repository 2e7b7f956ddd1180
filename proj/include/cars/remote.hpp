// Copyright 2026 The CARS Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cars/embedding.hpp"
#include "cars/error.hpp"

namespace cars {

/// Connection settings for an embedding service. The credential comes from
/// the environment or a config file, never from flags, and is never logged.
struct RemoteConfig {
  std::string endpoint;  // full URL, e.g. http://host:port/v1/embeddings
  std::string model;
  std::uint32_t dim = 0;
  std::string api_key;

  int max_attempts = 3;
  int initial_backoff_ms = 1000;  // doubled after each retryable failure
  int timeout_seconds = 60;
};

/// Client for the common embedding-service wire shape:
///   request  {"input": [texts...], "model": "<name>"}
///   response {"data": [{"index": i, "embedding": [floats...]}, ...]}
/// Responses are re-sorted by index, validated against the configured dim,
/// and L2-normalized. Transport failures and 5xx responses are retried with
/// exponential backoff; 4xx responses are not.
class RemoteEmbedder : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(RemoteConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ParameterError("remote endpoint is empty");
    if (config_.model.empty()) throw ParameterError("remote model name is empty");
    if (config_.dim == 0) throw ParameterError("remote embedding dim is unset");
    if (config_.max_attempts < 1) throw ParameterError("max_attempts must be >= 1");
    auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
      throw ParameterError("remote endpoint needs a scheme: " + config_.endpoint);
    }
    auto path_start = config_.endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      base_url_ = config_.endpoint;
      path_ = "/";
    } else {
      base_url_ = config_.endpoint.substr(0, path_start);
      path_ = config_.endpoint.substr(path_start);
    }
    id_ = ProviderId{config_.model, config_.dim, "remote-v1"};
  }

  const ProviderId& id() const override { return id_; }

  std::vector<Vec> embed_batch(std::span<const std::string> texts) override {
    check_inputs(texts);
    if (texts.empty()) return {};

    nlohmann::json request{{"input", std::vector<std::string>(texts.begin(), texts.end())},
                           {"model", config_.model}};
    const std::string body = request.dump();

    int backoff_ms = config_.initial_backoff_ms;
    std::string last_failure = "no attempt made";
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      httplib::Client client(base_url_);
      client.set_connection_timeout(config_.timeout_seconds, 0);
      client.set_read_timeout(config_.timeout_seconds, 0);
      httplib::Headers headers;
      if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
      }
      auto res = client.Post(path_, headers, body, "application/json");
      if (res && res->status >= 200 && res->status < 300) {
        return parse_response(res->body, texts.size());
      }
      if (res && res->status >= 400 && res->status < 500) {
        throw ConfigError("embedding service rejected the request with status " +
                          std::to_string(res->status));
      }
      last_failure = res ? "status " + std::to_string(res->status)
                         : "transport error: " + httplib::to_string(res.error());
      if (attempt < config_.max_attempts) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
        backoff_ms *= 2;
      }
    }
    throw TransportError("embedding request failed after " +
                             std::to_string(config_.max_attempts) +
                             " attempts (last: " + last_failure + ")",
                         config_.max_attempts);
  }

 private:
  std::vector<Vec> parse_response(const std::string& body, std::size_t expected) {
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("embedding response is not valid JSON: ") +
                        e.what());
    }
    if (!parsed.contains("data") || !parsed["data"].is_array() ||
        parsed["data"].size() != expected) {
      throw FormatError("embedding response has " +
                        std::to_string(parsed.value("data", nlohmann::json::array()).size()) +
                        " entries, expected " + std::to_string(expected));
    }
    std::vector<Vec> out(expected);
    std::vector<bool> filled(expected, false);
    for (const auto& item : parsed["data"]) {
      if (!item.contains("index") || !item.contains("embedding")) {
        throw FormatError("embedding response entry lacks index/embedding");
      }
      auto index = item["index"].get<std::size_t>();
      if (index >= expected || filled[index]) {
        throw FormatError("embedding response has a bad index " +
                          std::to_string(index));
      }
      Vec v = item["embedding"].get<Vec>();
      if (v.size() != config_.dim) {
        throw ConfigError("embedding service returned dim " +
                          std::to_string(v.size()) + ", configured dim is " +
                          std::to_string(config_.dim));
      }
      out[index] = normalized(std::move(v));
      filled[index] = true;
    }
    return out;
  }

  RemoteConfig config_;
  std::string base_url_;
  std::string path_;
  ProviderId id_;
};

}  // namespace cars
