#pragma once

#include <memory>
#include <string>

namespace emv {

/// HTTP/JSON API over the toolkit. Sessions live in memory; each holds one
/// fitted panel, and decompositions are re-identified per request.
///
///   POST /sessions?transform=..     panel CSV body -> {session, fit}
///   POST /sessions/{id}/macro       macro CSV body
///   GET  /sessions/{id}/decomposition?kind=&k=&a_star=&window=&vintages=
///   GET  /sessions/{id}/sweep?ks=&a_star=
///   GET  /sessions/{id}/macro-fit
///   GET  /sessions/{id}/forecast?horizon=&tail=&a_star=&max_age=&vintage_mode=&window=&override=&original_scale=&process=
///   GET  /healthz
///
/// 400 malformed input, 404 unknown session or route, 422 domain error.
class Service {
public:
  Service();
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Blocks until stop().
  bool listen(const std::string& host, int port);
  /// Bind to a free port and return it; then call listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace emv
