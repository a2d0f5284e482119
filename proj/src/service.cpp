#include "reflprior/service.hpp"

#include <cstdlib>

#include <httplib.h>

#include "reflprior/error.hpp"

namespace reflprior {

namespace {

using nlohmann::json;

ServiceResponse error_response(int status, const std::string& message,
                               const std::vector<std::string>& fields) {
  return {status, json{{"error", message}, {"fields", fields}}.dump()};
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& ex) {
    throw RequestError(std::string("request body is not valid JSON: ") + ex.what(), {""});
  }
}

void require_object(const json& j, std::initializer_list<const char*> allowed,
                    std::initializer_list<const char*> required) {
  if (!j.is_object()) throw RequestError("request body must be a JSON object", {""});
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw RequestError("/" + key + ": unknown field", {"/" + key});
  }
  for (const char* r : required)
    if (!j.contains(r)) throw RequestError(std::string("/") + r + ": missing required field", {std::string("/") + r});
}

}  // namespace

struct Service::Server {
  httplib::Server http;
};

Service::Service(std::shared_ptr<const Predictor> predictor) : predictor_(std::move(predictor)) {
  if (!predictor_) throw InvalidInput("service needs a model");
}

Service::~Service() = default;

ServiceResponse Service::handle(const std::string& method, const std::string& path,
                                const std::string& body) const {
  ++requests_;
  ServiceResponse r;
  try {
    if (method == "GET" && path == "/health")
      r = {200, json{{"status", "ok"},
                     {"model", predictor_->spec().name},
                     {"requests", requests_.load()},
                     {"failures", failures_.load()}}
                    .dump()};
    else if (method == "GET" && path == "/spec")
      r = {200, service_spec_json(*predictor_).dump()};
    else if (method == "POST" && path == "/predict")
      r = predict(body);
    else if (method == "POST" && path == "/simulate")
      r = simulate(body);
    else if (path == "/health" || path == "/spec" || path == "/predict" || path == "/simulate")
      r = error_response(405, "method " + method + " not allowed on " + path, {});
    else
      r = error_response(404, "no such endpoint " + path, {});
  } catch (const RequestError& ex) {
    r = error_response(400, ex.what(), ex.fields());
  } catch (const RangeViolation& ex) {
    std::vector<std::string> fields;
    for (const auto& f : ex.fields()) fields.push_back("/" + f);
    r = error_response(400, ex.what(), fields);
  } catch (const GridIncompatible& ex) {
    r = error_response(422, ex.what(), {"/curve"});
  } catch (const InvalidInput& ex) {
    r = error_response(400, ex.what(), {});
  } catch (const std::exception& ex) {
    r = error_response(500, ex.what(), {});
  }
  if (r.status >= 400) ++failures_;
  return r;
}

ServiceResponse Service::predict(const std::string& body) const {
  const json j = parse_body(body);
  require_object(j, {"curve", "bounds"}, {"curve", "bounds"});
  const ReflectivityCurve curve = curve_from_json(j.at("curve"));
  const PriorBounds bounds = bounds_from_json(j.at("bounds"), predictor_->spec());
  const Prediction p = predictor_->predict(curve, bounds);
  return {200, prediction_to_json(p, predictor_->spec()).dump()};
}

ServiceResponse Service::simulate(const std::string& body) const {
  const json j = parse_body(body);
  require_object(j, {"params", "q"}, {"params"});
  const Eigen::VectorXd theta = params_from_json(j.at("params"), predictor_->spec());
  Eigen::ArrayXd q = predictor_->default_grid();
  if (j.contains("q")) {
    const json& jq = j.at("q");
    if (!jq.is_array() || jq.empty()) throw RequestError("/q: expected a non-empty array", {"/q"});
    q.resize(Eigen::Index(jq.size()));
    for (std::size_t i = 0; i < jq.size(); ++i) {
      if (!jq[i].is_number() || !(jq[i].get<double>() > 0.0))
        throw RequestError("/q/" + std::to_string(i) + ": expected a positive number",
                           {"/q/" + std::to_string(i)});
      q(Eigen::Index(i)) = jq[i].get<double>();
    }
  }
  const ReflectivityCurve c = simulate_curve(theta, predictor_->spec(), q);
  return {200, json{{"curve", curve_to_json(c)},
                    {"sld_profile", profile_to_json(sld_profile(theta, predictor_->spec()))}}
                   .dump()};
}

void Service::serve(const std::string& host, int port, const std::function<void(int)>& on_ready) {
  server_ = std::make_unique<Server>();
  auto& http = server_->http;
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const ServiceResponse r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, "application/json");
  };
  for (const char* p : {"/health", "/spec", "/predict", "/simulate"}) {
    http.Get(p, route);
    http.Post(p, route);
  }
  http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  int bound = port;
  if (port == 0) {
    bound = http.bind_to_any_port(host);
    if (bound < 0) throw InvalidInput("cannot bind " + host);
  } else if (!http.bind_to_port(host, port)) {
    throw InvalidInput("cannot bind " + host + ":" + std::to_string(port));
  }
  std::thread notify([&] {
    http.wait_until_ready();
    if (on_ready) on_ready(bound);
  });
  http.listen_after_bind();
  notify.join();
}

void Service::stop() {
  if (server_) server_->http.stop();
}

int default_port(int fallback) {
  const char* env = std::getenv("REFLPRIOR_PORT");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 65535)
    throw InvalidInput(std::string("REFLPRIOR_PORT must be a port number, got '") + env + "'");
  return static_cast<int>(v);
}

}  // namespace reflprior
