#pragma once

// HTTP front end over one frozen Predictor.
//
//   GET  /health    liveness and request counters
//   GET  /spec      model spec, grid contract, units
//   POST /predict   {curve: [[q, R], ...], bounds: {name: [lo, hi]}}
//   POST /simulate  {params: {name: value}, q: [...] (optional)}
//
// Errors are {"error": message, "fields": [JSON pointers]} with status 400 for malformed or
// out-of-range requests and 422 for grids the checkpoint cannot take.

#include <atomic>
#include <functional>
#include <memory>
#include <string>

#include "reflprior/inference.hpp"

namespace reflprior {

struct ServiceResponse {
  int status = 200;
  std::string body;  // JSON
};

class Service {
 public:
  explicit Service(std::shared_ptr<const Predictor> predictor);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Transport-independent dispatch; used by the HTTP server and by tests.
  ServiceResponse handle(const std::string& method, const std::string& path,
                         const std::string& body) const;

  // Blocks until stop(). Port 0 binds a free port; on_ready receives the bound port.
  void serve(const std::string& host, int port, const std::function<void(int)>& on_ready = {});
  void stop();

 private:
  ServiceResponse predict(const std::string& body) const;
  ServiceResponse simulate(const std::string& body) const;

  std::shared_ptr<const Predictor> predictor_;
  mutable std::atomic<long long> requests_{0};
  mutable std::atomic<long long> failures_{0};
  struct Server;
  std::unique_ptr<Server> server_;
};

// Port from REFLPRIOR_PORT, or the fallback when unset. Throws InvalidInput when malformed.
int default_port(int fallback = 8765);

}  // namespace reflprior
