#include "emv/service.hpp"

#include "emv/csv.hpp"
#include "emv/error.hpp"
#include "emv/serialize.hpp"
#include "emv/workflow.hpp"

#include <httplib.h>

#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>

namespace emv {

namespace {

struct Session {
  PanelFit fit;
  std::optional<MacroPanel> macro;
};

std::string error_body(const std::string& message) { return dump(json{{"error", message}}); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty() || !out.empty())
    out.push_back(cur);
  return out;
}

std::string param(const httplib::Request& req, const char* name, const std::string& fallback) {
  return req.has_param(name) ? req.get_param_value(name) : fallback;
}

int int_param(const httplib::Request& req, const char* name, int fallback) {
  if (!req.has_param(name))
    return fallback;
  return csv::require_int(req.get_param_value(name), name);
}

double double_param(const httplib::Request& req, const char* name, double fallback) {
  if (!req.has_param(name))
    return fallback;
  return csv::require_double(req.get_param_value(name), name);
}

std::string body_csv(const httplib::Request& req, const char* field) {
  if (req.is_multipart_form_data()) {
    if (!req.has_file(field))
      throw InputError(std::string("multipart upload lacks a '") + field + "' part");
    return req.get_file_value(field).content;
  }
  return req.body;
}

} // namespace

struct Service::Impl {
  httplib::Server server;
  mutable std::shared_mutex mutex;
  std::map<std::string, std::shared_ptr<const Session>> sessions;
  std::atomic<long> next_id{1};

  std::shared_ptr<const Session> find(const std::string& id) const {
    std::shared_lock lock(mutex);
    auto it = sessions.find(id);
    if (it == sessions.end())
      return nullptr;
    return it->second;
  }

  // Runs `body`, mapping module exceptions onto status codes.
  template <class F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const InputError& e) {
      res.status = 400;
      res.set_content(error_body(e.what()), "application/json");
    } catch (const DomainError& e) {
      res.status = 422;
      res.set_content(error_body(e.what()), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(error_body(e.what()), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_body(e.what()), "application/json");
    }
  }

  template <class F>
  void with_session(const httplib::Request& req, httplib::Response& res, F&& body) {
    auto s = find(req.path_params.at("id"));
    if (!s) {
      res.status = 404;
      res.set_content(error_body("unknown session '" + req.path_params.at("id") + "'"),
                      "application/json");
      return;
    }
    guarded(res, [&] { body(*s); });
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(dump(json{{"status", "ok"}}), "application/json");
    });

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        ResponseTransform g;
        g.kind = transform_from_string(param(req, "transform", "identity"));
        g.epsilon = double_param(req, "epsilon", g.epsilon);
        auto s = std::make_shared<Session>();
        s->fit = fit_panel(load_panel_text(body_csv(req, "panel")), g);
        const std::string id = "s" + std::to_string(next_id++);
        json out = {{"session", id}, {"fit", fit_report(s->fit.fit, s->fit.design)}};
        {
          std::unique_lock lock(mutex);
          sessions[id] = std::move(s);
        }
        res.set_content(dump(out), "application/json");
      });
    });

    server.Post("/sessions/:id/macro", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](const Session& s) {
        auto next = std::make_shared<Session>(s);
        next->macro = load_macro_text(body_csv(req, "macro"));
        json out = {{"session", req.path_params.at("id")},
                    {"covariates", next->macro->names},
                    {"times", next->macro->times.size()}};
        {
          std::unique_lock lock(mutex);
          sessions[req.path_params.at("id")] = std::move(next);
        }
        res.set_content(dump(out), "application/json");
      });
    });

    server.Get("/sessions/:id/decomposition",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](const Session& s) {
                   ConstraintFields f;
                   f.kind = param(req, "kind", f.kind);
                   f.k = double_param(req, "k", f.k);
                   f.a_star = int_param(req, "a_star", f.a_star);
                   f.window = int_param(req, "window", f.window);
                   if (req.has_param("vintages"))
                     for (const auto& v : split_list(req.get_param_value("vintages")))
                       f.vintages.push_back(csv::require_int(v, "vintages"));
                   res.set_content(decomposition_json(s.fit, constraint_from_fields(f)),
                                   "application/json");
                 });
               });

    server.Get("/sessions/:id/sweep", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](const Session& s) {
        std::vector<double> ks{0.0, -0.01, -0.02};
        if (req.has_param("ks")) {
          ks.clear();
          for (const auto& k : split_list(req.get_param_value("ks")))
            ks.push_back(csv::require_double(k, "ks"));
        }
        res.set_content(sweep_json(s.fit, ks, int_param(req, "a_star", 60)), "application/json");
      });
    });

    server.Get("/sessions/:id/macro-fit", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](const Session& s) {
        if (!s.macro)
          throw DomainError("no macro panel uploaded for this session");
        res.set_content(macro_fit_json(fit_macro(s.fit, *s.macro)), "application/json");
      });
    });

    server.Get("/sessions/:id/forecast", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](const Session& s) {
        if (!s.macro)
          throw DomainError("no macro panel uploaded for this session");
        ForecastSpec spec;
        spec.horizon = int_param(req, "horizon", spec.horizon);
        spec.maturity_tail = maturity_tail_from_string(param(req, "tail", "hold-last"));
        spec.a_star = int_param(req, "a_star", spec.a_star);
        if (req.has_param("max_age"))
          spec.max_age = int_param(req, "max_age", 0);
        spec.vintage_mode = vintage_mode_from_string(param(req, "vintage_mode", "recent-level"));
        spec.window = int_param(req, "window", spec.window);
        spec.original_scale = param(req, "original_scale", "false") == "true";
        if (req.has_param("override"))
          for (const auto& ov : split_list(req.get_param_value("override"))) {
            const auto eq = ov.find('=');
            if (eq == std::string::npos)
              throw InputError("override '" + ov + "' is not of the form vintage=effect");
            spec.override_values[csv::require_int(ov.substr(0, eq), "override vintage")] =
                csv::require_double(ov.substr(eq + 1), "override effect");
          }
        std::optional<ProcessKind> process;
        if (req.has_param("process"))
          process = process_kind_from_string(req.get_param_value("process"));
        res.set_content(forecast_json(run_forecast(s.fit, *s.macro, spec, process)),
                        "application/json");
      });
    });
  }
};

Service::Service() : impl_(std::make_unique<Impl>()) { impl_->routes(); }
Service::~Service() { stop(); }

bool Service::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int Service::bind_to_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool Service::listen_after_bind() { return impl_->server.listen_after_bind(); }
void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }
void Service::stop() { impl_->server.stop(); }

} // namespace emv
