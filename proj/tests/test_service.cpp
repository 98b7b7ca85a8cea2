#include "emv/cli.hpp"
#include "emv/serialize.hpp"
#include "emv/service.hpp"
#include "emv/synth.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

using namespace emv;
namespace fs = std::filesystem;

namespace {

class Running {
public:
  Running() {
    port_ = service_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { service_.listen_after_bind(); });
    service_.wait_until_ready();
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

private:
  Service service_;
  int port_ = 0;
  std::thread thread_;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Fixture {
  fs::path dir;
  std::string panel, macro;
  Fixture() {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("emv_svc_" + std::to_string(rd()));
    std::ostringstream o, e;
    const int code = run_cli({"generate", "--A", "12", "--T", "60", "--exogenous", "macro",
                              "--horizon", "6", "--seed", "9", "--out", dir.string()},
                             o, e);
    REQUIRE(code == 0);
    panel = slurp(dir / "panel.csv");
    macro = slurp(dir / "macro.csv");
  }
  ~Fixture() { fs::remove_all(dir); }

  std::string cli_file(std::vector<std::string> args, const std::string& file) {
    const auto out = (dir / "cli").string();
    args.push_back("--out");
    args.push_back(out);
    std::ostringstream o, e;
    const int code = run_cli(args, o, e);
    INFO(e.str());
    REQUIRE(code == 0);
    return slurp(fs::path(out) / file);
  }
};

std::string create_session(httplib::Client& c, const std::string& panel) {
  auto r = c.Post("/sessions", panel, "text/csv");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  return json::parse(r->body)["session"].get<std::string>();
}

} // namespace

TEST_CASE("health and CORS") {
  Running svc;
  auto c = svc.client();
  auto r = c.Get("/healthz");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["status"] == "ok");
  CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
  auto o = c.Options("/sessions");
  REQUIRE(o);
  CHECK(o->status == 204);
}

TEST_CASE("service responses are byte-identical to CLI output") {
  Fixture fx;
  Running svc;
  auto c = svc.client();
  const auto id = create_session(c, fx.panel);
  CHECK(id == "s1");

  auto r = c.Get("/sessions/" + id + "/decomposition?kind=vintage-trend-zero&window=18");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body == fx.cli_file({"identify", "--panel", (fx.dir / "panel.csv").string(), "--kind",
                                "vintage-trend-zero", "--window", "18"},
                               "decomposition.json"));

  r = c.Get("/sessions/" + id + "/sweep?ks=0,-0.01&a_star=6");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body == fx.cli_file({"sweep", "--panel", (fx.dir / "panel.csv").string(), "--k",
                                "0,-0.01", "--a-star", "6"},
                               "sweep.json"));

  auto m = c.Post("/sessions/" + id + "/macro", fx.macro, "text/csv");
  REQUIRE(m);
  CHECK(m->status == 200);

  r = c.Get("/sessions/" + id + "/macro-fit");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body == fx.cli_file({"fit-macro", "--panel", (fx.dir / "panel.csv").string(), "--macro",
                                (fx.dir / "macro.csv").string()},
                               "macro_fit.json"));

  r = c.Get("/sessions/" + id + "/forecast?horizon=6&window=4");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body == fx.cli_file({"forecast", "--panel", (fx.dir / "panel.csv").string(), "--macro",
                                (fx.dir / "macro.csv").string(), "--horizon", "6", "--window", "4"},
                               "forecast.json"));
}

TEST_CASE("multipart upload") {
  Fixture fx;
  Running svc;
  auto c = svc.client();
  httplib::MultipartFormDataItems items{{"panel", fx.panel, "panel.csv", "text/csv"}};
  auto r = c.Post("/sessions?transform=identity", items);
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto j = json::parse(r->body);
  CHECK(j.contains("fit"));

  httplib::MultipartFormDataItems wrong{{"data", fx.panel, "panel.csv", "text/csv"}};
  r = c.Post("/sessions", wrong);
  REQUIRE(r);
  CHECK(r->status == 400);
}

TEST_CASE("large panel posted with a form content type") {
  Fixture fx;
  REQUIRE(fx.panel.size() > 8192);
  Running svc;
  auto c = svc.client();
  auto r = c.Post("/sessions", fx.panel, "application/x-www-form-urlencoded");
  REQUIRE(r);
  CHECK(r->status == 200);
}

TEST_CASE("error statuses") {
  Fixture fx;
  Running svc;
  auto c = svc.client();

  auto r = c.Get("/sessions/s99/decomposition");
  REQUIRE(r);
  CHECK(r->status == 404);
  CHECK(json::parse(r->body)["error"] == "unknown session 's99'");

  r = c.Post("/sessions", "age,time\n1,2\n", "text/csv");
  REQUIRE(r);
  CHECK(r->status == 400);
  CHECK(json::parse(r->body).contains("error"));

  r = c.Post("/sessions?transform=sqrt", fx.panel, "text/csv");
  REQUIRE(r);
  CHECK(r->status == 400);

  const auto id = create_session(c, fx.panel);
  r = c.Get("/sessions/" + id + "/decomposition?kind=minimum-norm&window=abc");
  REQUIRE(r);
  CHECK(r->status == 400);

  r = c.Get("/sessions/" + id + "/decomposition?kind=maturity-slope-k&a_star=500");
  REQUIRE(r);
  CHECK(r->status == 422);

  r = c.Get("/sessions/" + id + "/macro-fit");
  REQUIRE(r);
  CHECK(r->status == 422);
  CHECK(json::parse(r->body)["error"] == "no macro panel uploaded for this session");

  r = c.Get("/nowhere");
  REQUIRE(r);
  CHECK(r->status == 404);
}

TEST_CASE("concurrent requests on one session") {
  Fixture fx;
  Running svc;
  auto c0 = svc.client();
  const auto id = create_session(c0, fx.panel);
  const auto expected = c0.Get("/sessions/" + id + "/decomposition?kind=intrinsic")->body;
  std::vector<std::thread> pool;
  std::atomic<int> same{0};
  for (int i = 0; i < 8; ++i)
    pool.emplace_back([&] {
      auto c = svc.client();
      auto r = c.Get("/sessions/" + id + "/decomposition?kind=intrinsic");
      if (r && r->status == 200 && r->body == expected)
        ++same;
    });
  for (auto& t : pool)
    t.join();
  CHECK(same == 8);
}
