// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "unidiff/corpus.hpp"
#include "unidiff/io.hpp"
#include "unidiff/model.hpp"
#include "unidiff/sampler.hpp"

namespace unidiff {

struct HistoryEntry {
  std::vector<Rect> region;  // empty for the initial grid
  GridImage grid;
  std::string prompt;
  std::int64_t timestamp_ms = 0;
};

struct RetouchSession {
  std::string id;
  std::string prompt;
  SamplerConfig config;
  std::vector<HistoryEntry> history;
  std::uint64_t retouches = 0;  // monotonic, seeds each retouch
  std::mutex mutex;
};

struct Reply {
  int status = 200;
  nlohmann::ordered_json body;
};

// Request handling for the /v1 API, independent of the transport. Sessions
// live in memory; mutations of one session are serialized by its mutex.
class Service {
 public:
  // model may be null; generating endpoints then answer 503.
  Service(std::shared_ptr<const Model<float>> model, Corpus corpus, SamplerConfig defaults = {});

  Reply health() const;
  Reply create_session(const nlohmann::json& request);
  Reply get_session(const std::string& id);
  Reply retouch(const std::string& id, const nlohmann::json& request);
  Reply undo(const std::string& id);
  Reply generate(const nlohmann::json& request) const;
  Reply inpaint(const nlohmann::json& request) const;

  // Session records, one JSON object per line.
  void snapshot(const std::string& path);
  std::size_t session_count() const;

 private:
  SamplerConfig parse_config(const nlohmann::json& request) const;
  std::vector<TokenId> encode_prompt(const std::string& prompt) const;
  std::shared_ptr<RetouchSession> find(const std::string& id) const;
  nlohmann::ordered_json session_json(const RetouchSession& s) const;

  std::shared_ptr<const Model<float>> model_;
  Corpus corpus_;
  SamplerConfig defaults_;
  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<RetouchSession>> sessions_;
  std::uint64_t next_id_ = 1;
};

// cpp-httplib transport for Service.
class HttpServer {
 public:
  HttpServer(Service& service, std::string cors_origin = "");
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds to host:port (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace unidiff
