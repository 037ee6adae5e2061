#include <thread>

#include "doctest.h"
#include "outbreak/service.hpp"
// After the service header: httplib pulls in resolv.h, whose macros clash with Eigen.
#include "httplib.h"

using namespace outbreak;
using nlohmann::json;

namespace {

ExperimentSpec small_defaults() {
  ExperimentSpec s;
  s.system.n_clusters = 4;
  s.system.stagger_window = 3;
  s.system.budget = 4;
  s.policy = PolicyKind::kBinMQr;
  return s;
}

ServiceConfig small_service(int cap = 16, bool evict = true) {
  ServiceConfig c;
  c.max_sessions = cap;
  c.evict_lru = evict;
  c.defaults = small_defaults();
  return c;
}

json body(std::uint64_t seed, const std::string& policy, const ExperimentSpec& spec = small_defaults()) {
  return json{{"config", to_json(spec)}, {"seed", seed}, {"policy", policy}};
}

json strip(json delta) {
  delta.erase("timing");
  delta.erase("session");
  return delta;
}

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 0;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.field();
  }
  return {};
}

std::vector<json> run_to_end(SessionManager& m, const std::string& id) {
  std::vector<json> out;
  for (;;) {
    auto d = m.step(id);
    out.push_back(strip(d));
    if (d["done"].get<bool>()) break;
  }
  return out;
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("creation is idempotent per content") {
    SessionManager m(small_service());
    const auto a = m.create(body(7, "bin-m-qr"));
    const auto b = m.create(body(7, "bin-m-qr"));
    CHECK(a.created);
    CHECK_FALSE(b.created);
    CHECK(a.id == b.id);
    const auto c = m.create(body(8, "bin-m-qr"));
    CHECK(c.id != a.id);
    CHECK(m.size() == 2);
    // Identical content in a second manager starts from the same state.
    SessionManager other(small_service());
    const auto d = other.create(body(7, "bin-m-qr"));
    auto sa = m.state(a.id), sd = other.state(d.id);
    sa.erase("session");
    sd.erase("session");
    CHECK(sa == sd);
  }

  TEST_CASE("validation errors name the field") {
    SessionManager m(small_service());
    auto spec = small_defaults();
    spec.system.alpha2 = -0.5;
    CHECK(status_of([&] { m.create(body(1, "bin-m-qr", spec)); }) == 422);
    CHECK(field_of([&] { m.create(body(1, "bin-m-qr", spec)); }) == "alpha2");
    CHECK(field_of([&] { m.create(json{{"seed", -3}}); }) == "seed");
    CHECK(field_of([&] { m.create(json{{"policy", "best"}}); }) == "policy");
    CHECK(field_of([&] { m.create(json{{"colour", 1}}); }) == "colour");
    CHECK(field_of([&] { parse_step_override(json{{"m_t", "x"}}); }) == "m_t");
    CHECK(field_of([&] { parse_step_override(json{{"budget", -1}}); }) == "budget");
    const auto id = m.create(json::object()).id;
    StepOverride ov;
    ov.multiplier = 9.0;
    CHECK(status_of([&] { m.step(id, ov); }) == 422);
    CHECK(field_of([&] { m.step(id, ov); }) == "m_t");
    CHECK(status_of([&] { m.set_policy(id, "best"); }) == 422);
    CHECK(m.describe()["multiplier"]["max"] == 4.0);
  }

  TEST_CASE("unknown, finished and evicted sessions") {
    SessionManager m(small_service(2));
    CHECK(status_of([&] { m.state("s999"); }) == 404);
    const auto a = m.create(body(1, "fixed-m-qr")).id;
    run_to_end(m, a);
    CHECK(status_of([&] { m.step(a); }) == 409);
    const auto b = m.create(body(2, "fixed-m-qr")).id;
    m.state(b);
    const auto c = m.create(body(3, "fixed-m-qr"));
    CHECK(c.evicted == std::vector<std::string>{a});
    CHECK(status_of([&] { m.state(a); }) == 410);
    m.remove(b);
    CHECK(status_of([&] { m.state(b); }) == 404);

    SessionManager strict(small_service(1, false));
    strict.create(body(1, "fixed-m-qr"));
    CHECK(status_of([&] { strict.create(body(2, "fixed-m-qr")); }) == 503);
  }

  TEST_CASE("concurrent sessions match serial runs") {
    SessionManager serial(small_service());
    std::vector<std::vector<json>> expect;
    for (std::uint64_t s = 1; s <= 8; ++s) expect.push_back(run_to_end(serial, serial.create(body(s, "bin-m-qr")).id));

    SessionManager m(small_service());
    std::vector<std::string> ids;
    for (std::uint64_t s = 1; s <= 8; ++s) ids.push_back(m.create(body(s, "bin-m-qr")).id);
    std::vector<std::vector<json>> got(8);
    std::vector<std::thread> threads;
    for (int k = 0; k < 8; ++k) {
      threads.emplace_back([&, k] { got[static_cast<std::size_t>(k)] = run_to_end(m, ids[static_cast<std::size_t>(k)]); });
    }
    for (auto& t : threads) t.join();
    for (int k = 0; k < 8; ++k) CHECK(got[static_cast<std::size_t>(k)] == expect[static_cast<std::size_t>(k)]);
  }

  TEST_CASE("suppression and zero budget give zero tests") {
    SessionManager m(small_service());
    auto spec = small_defaults();
    spec.system.alpha3_true = 5.0;  // no single test is worth this much
    const auto id = m.create(body(4, kManualPolicy, spec)).id;
    StepOverride ov;
    ov.multiplier = 4.0;
    bool saw_candidates = false;
    for (int k = 0; k < 15; ++k) {
      const auto d = m.step(id, ov);
      CHECK(d["executed_tests"] == 0);
      saw_candidates |= d["decision"]["candidates"].get<int>() > 0;
    }
    CHECK(saw_candidates);

    const auto id2 = m.create(body(4, kManualPolicy)).id;
    StepOverride zero;
    zero.budget = 0;
    zero.multiplier = 0.25;
    for (int k = 0; k < 15; ++k) CHECK(m.step(id2, zero)["executed_tests"] == 0);
  }

  TEST_CASE("fork then identical steps keeps branches identical") {
    SessionManager m(small_service());
    const auto a = m.create(body(5, "bin-m-qr")).id;
    for (int k = 0; k < 4; ++k) m.step(a);
    const auto b = m.fork(a).id;
    for (int k = 0; k < 6; ++k) CHECK(strip(m.step(a)) == strip(m.step(b)));
    auto sa = m.state(a), sb = m.state(b);
    for (auto* s : {&sa, &sb}) {
      s->erase("session");
      s->erase("parent");
    }
    CHECK(sa == sb);
    CHECK(m.state(b)["parent"] == a);
    CHECK(m.diff(a, b)["identical"] == true);
  }

  TEST_CASE("fork and compare: differences start at the diverging step") {
    SessionManager m(small_service());
    const auto a = m.create(body(6, kManualPolicy)).id;
    StepOverride one;
    one.multiplier = 1.0;
    for (int k = 0; k < 5; ++k) m.step(a, one);
    const auto b = m.fork(a).id;
    StepOverride low, high;
    low.multiplier = 0.5;
    high.multiplier = 2.0;
    m.step(a, low);
    m.step(b, high);
    for (int k = 0; k < 10; ++k) {
      m.step(a, one);
      m.step(b, one);
    }
    const auto d = m.diff(a, b);
    REQUIRE_FALSE(d["identical"].get<bool>());
    CHECK(d["first_divergent_step"] == 5);
    for (const auto& x : d["differences"]) CHECK(x["step"].get<int>() >= 5);
    // The override itself shows at step 5.
    bool multiplier_noted = false;
    for (const auto& x : d["differences"]) {
      if (x["step"] == 5 && x["field"] == "multiplier") multiplier_noted = true;
    }
    CHECK(multiplier_noted);
    CHECK(m.verify_replay(a));
    CHECK(m.verify_replay(b));
    CHECK(m.diff(a, a)["identical"] == true);
    // A fresh session replaying a's log reproduces a exactly.
    const auto log = m.actions(a)["actions"];
    CHECK(log.size() == 16);
  }

  TEST_CASE("fork chains are bounded by the cap") {
    SessionManager m(small_service(3));
    auto id = m.create(body(1, "bin-m-qr")).id;
    std::vector<std::string> evicted;
    for (int depth = 0; depth < 5; ++depth) {
      m.step(id);
      const auto r = m.fork(id);
      evicted.insert(evicted.end(), r.evicted.begin(), r.evicted.end());
      id = r.id;
      CHECK(m.size() <= 3);
    }
    CHECK(evicted.size() == 3);
    for (const auto& e : evicted) CHECK(status_of([&] { m.state(e); }) == 410);
    CHECK(m.state(id)["steps"] == 5);
  }

  TEST_CASE("reset and policy switch") {
    SessionManager m(small_service());
    const auto id = m.create(body(9, kManualPolicy)).id;
    StepOverride ov;
    ov.multiplier = 3.0;
    for (int k = 0; k < 5; ++k) m.step(id, ov);
    // The manual multiplier persists until changed.
    CHECK(m.step(id)["decision"]["multiplier"] == 3.0);
    CHECK(m.set_policy(id, "bin-m-qr")["policy"] == "bin-m-qr");
    bool searched = false;
    for (int k = 0; k < 8; ++k) {
      const auto d = m.step(id);
      CHECK(d["policy"] == "bin-m-qr");
      searched |= d["decision"]["demand_evaluations"].get<int>() > 0;
    }
    CHECK(searched);
    const auto metrics = m.metrics(id);
    CHECK(metrics["history"]["multiplier"].size() == 14);
    CHECK(metrics["history"]["multiplier"][0] == 3.0);
    CHECK(m.verify_replay(id));
    const auto st = m.reset(id);
    CHECK(st["steps"] == 0);
    CHECK(m.actions(id)["actions"].empty());
  }

  TEST_CASE("stream batches") {
    SessionManager m(small_service());
    const auto id = m.create(body(3, "bin-m-qr")).id;
    m.step(id);
    m.step(id);
    auto b = m.wait_deltas(id, 0, 0, std::chrono::milliseconds(0));
    CHECK(b.deltas.size() == 2);
    CHECK(b.next == 2);
    std::thread t([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      m.step(id);
    });
    b = m.wait_deltas(id, 2, 0, std::chrono::milliseconds(5000));
    t.join();
    CHECK(b.deltas.size() == 1);
    m.remove(id);
  }

  TEST_CASE("http front end") {
    SessionManager m(small_service());
    HttpService http(m);
    const int port = http.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);
    const httplib::Headers h = {{kSchemaHeader, "1"}};

    auto missing = cli.Get("/v1/config");
    REQUIRE(missing);
    CHECK(missing->status == 400);
    auto wrong = cli.Get("/v1/config", httplib::Headers{{kSchemaHeader, "2"}});
    CHECK(wrong->status == 400);
    auto cfg = cli.Get("/v1/config", h);
    CHECK(cfg->status == 200);
    CHECK(cfg->get_header_value(kSchemaHeader) == "1");

    auto created = cli.Post("/v1/sessions", h, body(2, "bin-m-qr").dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const auto id = json::parse(created->body)["session"].get<std::string>();
    auto again = cli.Post("/v1/sessions", h, body(2, "bin-m-qr").dump(), "application/json");
    CHECK(again->status == 200);

    auto step = cli.Post("/v1/sessions/" + id + "/step", h, "{}", "application/json");
    CHECK(step->status == 200);
    CHECK(json::parse(step->body)["step"] == 0);
    auto bad = cli.Post("/v1/sessions/" + id + "/step", h, R"({"m_t": 9})", "application/json");
    CHECK(bad->status == 422);
    CHECK(json::parse(bad->body)["error"]["field"] == "m_t");
    auto junk = cli.Post("/v1/sessions/" + id + "/step", h, "{", "application/json");
    CHECK(junk->status == 400);
    CHECK(cli.Get("/v1/sessions/nope/state", h)->status == 404);
    cli.Post("/v1/sessions/" + id + "/step", h, R"({"budget": 1})", "application/json");

    auto stream = cli.Get("/v1/sessions/" + id + "/stream?max_events=2", h);
    REQUIRE(stream);
    CHECK(stream->status == 200);
    std::size_t events = 0, pos = 0;
    while ((pos = stream->body.find("event: step", pos)) != std::string::npos) {
      ++events;
      ++pos;
    }
    CHECK(events == 2);

    auto fork = cli.Post("/v1/sessions/" + id + "/fork", h, "", "application/json");
    CHECK(fork->status == 201);
    const auto fid = json::parse(fork->body)["session"].get<std::string>();
    auto diff = cli.Get("/v1/diff?a=" + id + "&b=" + fid, h);
    CHECK(json::parse(diff->body)["identical"] == true);
    CHECK(cli.Get("/v1/sessions/" + id + "/metrics", h)->status == 200);
    CHECK(cli.Delete("/v1/sessions/" + fid, h)->status == 200);
    CHECK(cli.Get("/v1/sessions/" + fid + "/state", h)->status == 404);
    http.stop();
  }
}
