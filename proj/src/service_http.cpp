#include "outbreak/service.hpp"

#include <thread>

#include "outbreak/errors.hpp"
// After Eigen: <resolv.h> defines a `_res` macro that collides with Eigen
// parameter names.
#include "httplib.h"

namespace outbreak {

using nlohmann::json;

struct HttpService::Impl {
  SessionManager& manager;
  httplib::Server server;
  std::thread thread;

  explicit Impl(SessionManager& m) : manager(m) { routes(); }

  static void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& ex) {
      throw ServiceError(400, "bad_json", std::string("request body is not valid JSON: ") + ex.what());
    }
  }

  // Wraps a handler with the error mapping shared by every endpoint.
  template <class F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const ServiceError& ex) {
        send(res, ex.status(), ex.to_json());
      } catch (const CapacityError& ex) {
        send(res, 503, ServiceError(503, "capacity", ex.what()).to_json());
      } catch (const ParameterError& ex) {
        send(res, 422, ServiceError(422, "validation", ex.what()).to_json());
      } catch (const InputError& ex) {
        send(res, 422, ServiceError(422, "validation", ex.what()).to_json());
      } catch (const StateError& ex) {
        send(res, 409, ServiceError(409, "state", ex.what()).to_json());
      } catch (const std::exception& ex) {
        send(res, 500, ServiceError(500, "internal", ex.what()).to_json());
      }
    };
  }

  static json created(const CreateResult& r) {
    return json{{"session", r.id}, {"created", r.created}, {"evicted", r.evicted}};
  }

  void routes() {
    server.set_default_headers({{kSchemaHeader, std::to_string(kServiceSchemaVersion)}});
    server.set_pre_routing_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_header(kSchemaHeader)) {
        send(res, 400,
             ServiceError(400, "schema_version_required",
                          std::string("missing ") + kSchemaHeader + " header", kSchemaHeader)
                 .to_json());
        return httplib::Server::HandlerResponse::Handled;
      }
      if (req.get_header_value(kSchemaHeader) != std::to_string(kServiceSchemaVersion)) {
        send(res, 400,
             ServiceError(400, "schema_version_unsupported",
                          "unsupported schema version " + req.get_header_value(kSchemaHeader),
                          kSchemaHeader)
                 .to_json());
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    auto& m = manager;
    server.Get("/v1/config", guarded([&m](const httplib::Request&, httplib::Response& res) {
      send(res, 200, m.describe());
    }));
    server.Get("/v1/sessions", guarded([&m](const httplib::Request&, httplib::Response& res) {
      send(res, 200, json{{"sessions", m.list()}});
    }));
    server.Post("/v1/sessions", guarded([&m](const httplib::Request& req, httplib::Response& res) {
      const auto r = m.create(body_of(req));
      send(res, r.created ? 201 : 200, created(r));
    }));
    server.Post(R"(/v1/sessions/([^/]+)/step)",
                guarded([&m](const httplib::Request& req, httplib::Response& res) {
                  send(res, 200, m.step(req.matches[1], parse_step_override(body_of(req))));
                }));
    server.Post(R"(/v1/sessions/([^/]+)/fork)",
                guarded([&m](const httplib::Request& req, httplib::Response& res) {
                  send(res, 201, created(m.fork(req.matches[1])));
                }));
    server.Post(R"(/v1/sessions/([^/]+)/reset)",
                guarded([&m](const httplib::Request& req, httplib::Response& res) {
                  send(res, 200, m.reset(req.matches[1]));
                }));
    server.Post(R"(/v1/sessions/([^/]+)/policy)",
                guarded([&m](const httplib::Request& req, httplib::Response& res) {
                  const json b = body_of(req);
                  if (!b.contains("policy") || !b["policy"].is_string()) {
                    throw ServiceError(422, "validation", "policy must be a string", "policy");
                  }
                  send(res, 200, m.set_policy(req.matches[1], b["policy"].get<std::string>()));
                }));
    server.Get(R"(/v1/sessions/([^/]+)/state)",
               guarded([&m](const httplib::Request& req, httplib::Response& res) {
                 send(res, 200, m.state(req.matches[1]));
               }));
    server.Get(R"(/v1/sessions/([^/]+)/metrics)",
               guarded([&m](const httplib::Request& req, httplib::Response& res) {
                 send(res, 200, m.metrics(req.matches[1]));
               }));
    server.Get(R"(/v1/sessions/([^/]+)/actions)",
               guarded([&m](const httplib::Request& req, httplib::Response& res) {
                 send(res, 200, m.actions(req.matches[1]));
               }));
    server.Delete(R"(/v1/sessions/([^/]+))",
                  guarded([&m](const httplib::Request& req, httplib::Response& res) {
                    m.remove(req.matches[1]);
                    send(res, 200, json{{"session", std::string(req.matches[1])}, {"removed", true}});
                  }));
    server.Get("/v1/diff", guarded([&m](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("a") || !req.has_param("b")) {
        throw ServiceError(422, "validation", "diff needs query parameters a and b", "a");
      }
      send(res, 200, m.diff(req.get_param_value("a"), req.get_param_value("b")));
    }));
    // Server-sent events: "step" per delta, "reset" when the session restarts,
    // "closed" when it is evicted or deleted. ?from=k skips the first k deltas;
    // ?max_events=n ends the stream after n step events.
    server.Get(R"(/v1/sessions/([^/]+)/stream)",
               guarded([&m](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 std::size_t from = req.has_param("from") ? std::stoul(req.get_param_value("from")) : 0;
                 const long max_events =
                     req.has_param("max_events") ? std::stol(req.get_param_value("max_events")) : -1;
                 auto first = m.wait_deltas(id, from, 0, std::chrono::milliseconds(0));
                 struct Cursor {
                   std::size_t next;
                   std::uint64_t generation;
                   long sent = 0;
                 };
                 auto cur = std::make_shared<Cursor>(Cursor{from, first.generation});
                 res.set_chunked_content_provider(
                     "text/event-stream", [&m, id, cur, max_events](std::size_t, httplib::DataSink& sink) {
                       StreamBatch b;
                       try {
                         b = m.wait_deltas(id, cur->next, cur->generation,
                                           std::chrono::milliseconds(500));
                       } catch (const ServiceError&) {
                         b.closed = true;
                       }
                       std::string out;
                       if (b.generation != cur->generation) {
                         out += "event: reset\ndata: {\"session\":\"" + id + "\"}\n\n";
                         cur->generation = b.generation;
                       }
                       for (const auto& d : b.deltas) {
                         if (max_events >= 0 && cur->sent >= max_events) break;
                         out += "event: step\ndata: " + d.dump() + "\n\n";
                         ++cur->sent;
                       }
                       cur->next = b.next;
                       if (b.closed) out += "event: closed\ndata: {\"session\":\"" + id + "\"}\n\n";
                       if (out.empty()) out = ": keepalive\n\n";
                       if (!sink.write(out.data(), out.size())) return false;
                       if (b.closed || (max_events >= 0 && cur->sent >= max_events)) sink.done();
                       return true;
                     });
               }));
  }
};

HttpService::HttpService(SessionManager& manager) : impl_(std::make_unique<Impl>(manager)) {}

HttpService::~HttpService() { stop(); }

bool HttpService::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

int HttpService::start(const std::string& host, int port) {
  int bound = -1;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    bound = port;
  }
  if (bound < 0) return -1;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace outbreak
