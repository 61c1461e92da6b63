// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/service.hpp"

#include <chrono>
#include <cstdio>

#include <httplib.h>

#include "unidiff/error.hpp"
#include "unidiff/rng.hpp"

namespace unidiff {
namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict: return 409;
    case ErrorKind::kDivergence:
    case ErrorKind::kCacheCoherence:
    case ErrorKind::kIo:
    case ErrorKind::kContract: return 500;
    default: return 400;
  }
}

Reply error_reply(int status, const std::string& message) {
  Reply r;
  r.status = status;
  r.body["error"] = message;
  return r;
}

template <typename F>
Reply guarded(F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    return error_reply(status_for(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_reply(400, std::string("malformed request: ") + e.what());
  }
}

template <typename V>
V field_or(const nlohmann::json& j, const char* key, V fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  return j[key].get<V>();
}

}  // namespace

Service::Service(std::shared_ptr<const Model<float>> model, Corpus corpus, SamplerConfig defaults)
    : model_(std::move(model)), corpus_(std::move(corpus)), defaults_(defaults) {}

Reply Service::health() const {
  Reply r;
  r.body["status"] = "ok";
  r.body["model_loaded"] = model_ != nullptr;
  r.body["sessions"] = session_count();
  return r;
}

std::size_t Service::session_count() const {
  std::lock_guard lock(store_mutex_);
  return sessions_.size();
}

SamplerConfig Service::parse_config(const nlohmann::json& request) const {
  require(request.is_object(), ErrorKind::kParameter, "request body must be a JSON object");
  SamplerConfig c = defaults_;
  c.height = field_or(request, "height", c.height);
  c.width = field_or(request, "width", c.width);
  c.steps = field_or(request, "steps", c.steps);
  c.cfg_scale = field_or(request, "cfg", c.cfg_scale);
  c.temperature = field_or(request, "temperature", c.temperature);
  c.seed = field_or<std::uint64_t>(request, "seed", c.seed);
  if (request.contains("cache")) {
    const auto& cj = request["cache"];
    c.cache.cache_ratio = field_or(cj, "cache_ratio", c.cache.cache_ratio);
    c.cache.warmup_ratio = field_or(cj, "warmup_ratio", c.cache.warmup_ratio);
    c.cache.refresh_interval = field_or(cj, "refresh_interval", c.cache.refresh_interval);
  }
  c.record_logits = false;
  c.validate();
  if (model_) {
    // Cheap necessary condition; the sampler checks the exact length.
    require(static_cast<long>(c.height) * c.width <= model_->config().max_len, ErrorKind::kCapacity,
            "a " + std::to_string(c.height) + "x" + std::to_string(c.width) + " canvas exceeds model capacity " +
                std::to_string(model_->config().max_len));
  }
  return c;
}

std::vector<TokenId> Service::encode_prompt(const std::string& prompt) const {
  std::vector<TokenId> ids;
  try {
    ids = corpus_.lexicon().encode(prompt);
  } catch (const Error& e) {
    fail(ErrorKind::kParameter, e.what());
  }
  return ids;
}

std::shared_ptr<RetouchSession> Service::find(const std::string& id) const {
  std::lock_guard lock(store_mutex_);
  const auto it = sessions_.find(id);
  require(it != sessions_.end(), ErrorKind::kNotFound, "unknown session '" + id + "'");
  return it->second;
}

nlohmann::ordered_json Service::session_json(const RetouchSession& s) const {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["prompt"] = s.prompt;
  j["seed"] = s.config.seed;
  j["grid"] = grid_to_json(s.history.back().grid, corpus_.vocab());
  j["history_length"] = s.history.size();
  auto hist = nlohmann::json::array();
  for (const auto& h : s.history) {
    hist.push_back({{"region", rects_to_json(h.region)},
                    {"prompt", h.prompt},
                    {"cells", h.grid.cells},
                    {"timestamp_ms", h.timestamp_ms}});
  }
  j["history"] = hist;
  return j;
}

Reply Service::create_session(const nlohmann::json& request) {
  return guarded([&] {
    if (!model_) return error_reply(503, "no model loaded");
    const SamplerConfig config = parse_config(request);
    require(request.contains("prompt"), ErrorKind::kParameter, "prompt is required");
    const std::string prompt = request["prompt"].get<std::string>();
    const auto caption = encode_prompt(prompt);
    const Trajectory t = generate_image(*model_, caption, config, corpus_.vocab());
    auto s = std::make_shared<RetouchSession>();
    s->prompt = prompt;
    s->config = config;
    s->history.push_back({{}, t.grid, prompt, now_ms()});
    {
      std::lock_guard lock(store_mutex_);
      char buf[24];
      std::snprintf(buf, sizeof buf, "%016llx",
                    static_cast<unsigned long long>(splitmix64(next_id_++ ^ 0x5e55104eULL)));
      s->id = buf;
      sessions_[s->id] = s;
    }
    Reply r;
    r.status = 201;
    r.body["id"] = s->id;
    r.body["grid"] = grid_to_json(t.grid, corpus_.vocab());
    r.body["seed"] = config.seed;
    r.body["history_length"] = 1;
    return r;
  });
}

Reply Service::get_session(const std::string& id) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    Reply r;
    r.body = session_json(*s);
    return r;
  });
}

Reply Service::retouch(const std::string& id, const nlohmann::json& request) {
  return guarded([&] {
    auto s = find(id);
    if (!model_) return error_reply(503, "no model loaded");
    require(request.is_object() && request.contains("regions"), ErrorKind::kParameter, "regions are required");
    const auto rects = rects_from_json(request["regions"]);
    std::lock_guard lock(s->mutex);
    const GridImage& current = s->history.back().grid;
    const auto cells = region_cells(rects, current.height, current.width);
    std::string prompt = s->prompt;
    if (request.contains("prompt") && !request["prompt"].is_null()) prompt = request["prompt"].get<std::string>();
    const auto caption = encode_prompt(prompt);
    SamplerConfig config = s->config;
    config.seed = SeedSplitter(s->config.seed).seed("retouch", s->retouches);
    const Trajectory t = unidiff::inpaint(*model_, current, cells, caption, config, corpus_.vocab());
    ++s->retouches;
    s->history.push_back({rects, t.grid, prompt, now_ms()});
    Reply r;
    r.body["grid"] = grid_to_json(t.grid, corpus_.vocab());
    r.body["iteration"] = s->history.size() - 1;
    r.body["history_length"] = s->history.size();
    return r;
  });
}

Reply Service::undo(const std::string& id) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    require(s->history.size() > 1, ErrorKind::kConflict, "session is at its initial state");
    s->history.pop_back();
    Reply r;
    r.body["grid"] = grid_to_json(s->history.back().grid, corpus_.vocab());
    r.body["history_length"] = s->history.size();
    return r;
  });
}

Reply Service::generate(const nlohmann::json& request) const {
  return guarded([&] {
    if (!model_) return error_reply(503, "no model loaded");
    const SamplerConfig config = parse_config(request);
    require(request.contains("prompt"), ErrorKind::kParameter, "prompt is required");
    const auto caption = encode_prompt(request["prompt"].get<std::string>());
    const Trajectory t = generate_image(*model_, caption, config, corpus_.vocab());
    Reply r;
    r.body["grid"] = grid_to_json(t.grid, corpus_.vocab());
    r.body["seed"] = config.seed;
    return r;
  });
}

Reply Service::inpaint(const nlohmann::json& request) const {
  return guarded([&] {
    if (!model_) return error_reply(503, "no model loaded");
    const SamplerConfig config = parse_config(request);
    require(request.contains("grid") && request.contains("regions"), ErrorKind::kParameter,
            "grid and regions are required");
    const GridImage grid = grid_from_json(request["grid"], corpus_.vocab());
    const auto cells = region_cells(rects_from_json(request["regions"]), grid.height, grid.width);
    const auto caption = encode_prompt(field_or<std::string>(request, "prompt", ""));
    const Trajectory t = unidiff::inpaint(*model_, grid, cells, caption, config, corpus_.vocab());
    Reply r;
    r.body["grid"] = grid_to_json(t.grid, corpus_.vocab());
    r.body["seed"] = config.seed;
    return r;
  });
}

void Service::snapshot(const std::string& path) {
  std::string out = nlohmann::json({{"format", "unidiff-sessions"}, {"version", 1}}).dump() + "\n";
  std::vector<std::shared_ptr<RetouchSession>> all;
  {
    std::lock_guard lock(store_mutex_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  for (const auto& s : all) {
    std::lock_guard lock(s->mutex);
    out += session_json(*s).dump() + "\n";
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  Service& service;
  std::string cors;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service, std::string cors_origin) : impl_(std::make_unique<Impl>(service)) {
  impl_->cors = std::move(cors_origin);
  auto& srv = impl_->server;
  Impl* self = impl_.get();
  auto send = [self](httplib::Response& res, const Reply& reply) {
    res.status = reply.status;
    if (!self->cors.empty()) res.set_header("Access-Control-Allow-Origin", self->cors);
    res.set_content(reply.body.dump(), "application/json");
  };
  auto body = [](const httplib::Request& req) -> nlohmann::json {
    if (req.body.empty()) return nlohmann::json::object();
    return nlohmann::json::parse(req.body, nullptr, false);
  };
  auto bad_json = [](const nlohmann::json& j) { return j.is_discarded(); };

  srv.Options(R"(/v1/.*)", [self](const httplib::Request&, httplib::Response& res) {
    if (!self->cors.empty()) {
      res.set_header("Access-Control-Allow-Origin", self->cors);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }
    res.status = 204;
  });
  srv.Get("/v1/health", [=](const httplib::Request&, httplib::Response& res) { send(res, self->service.health()); });
  srv.Post("/v1/sessions", [=](const httplib::Request& req, httplib::Response& res) {
    const auto j = body(req);
    send(res, bad_json(j) ? error_reply(400, "body is not JSON") : self->service.create_session(j));
  });
  srv.Get(R"(/v1/sessions/([^/]+))", [=](const httplib::Request& req, httplib::Response& res) {
    send(res, self->service.get_session(req.matches[1]));
  });
  srv.Post(R"(/v1/sessions/([^/]+)/retouch)", [=](const httplib::Request& req, httplib::Response& res) {
    const auto j = body(req);
    send(res, bad_json(j) ? error_reply(400, "body is not JSON") : self->service.retouch(req.matches[1], j));
  });
  srv.Post(R"(/v1/sessions/([^/]+)/undo)", [=](const httplib::Request& req, httplib::Response& res) {
    send(res, self->service.undo(req.matches[1]));
  });
  srv.Post("/v1/generate", [=](const httplib::Request& req, httplib::Response& res) {
    const auto j = body(req);
    send(res, bad_json(j) ? error_reply(400, "body is not JSON") : self->service.generate(j));
  });
  srv.Post("/v1/inpaint", [=](const httplib::Request& req, httplib::Response& res) {
    const auto j = body(req);
    send(res, bad_json(j) ? error_reply(400, "body is not JSON") : self->service.inpaint(j));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    require(p > 0, ErrorKind::kIo, "cannot bind " + host);
    return p;
  }
  require(impl_->server.bind_to_port(host, port), ErrorKind::kIo,
          "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace unidiff
