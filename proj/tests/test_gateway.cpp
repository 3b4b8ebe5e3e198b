#include <doctest.h>

#include <filesystem>

#include "reportcheck/error.hpp"
#include "reportcheck/gateway.hpp"
#include "reportcheck/text.hpp"
#include "support/fake_backend.hpp"

using namespace reportcheck;
using testsupport::FunctionBackend;

namespace {

ModelRequest request(std::string user) {
  ModelRequest r;
  r.model = "m1";
  r.system_text = "sys";
  r.user_text = std::move(user);
  return r;
}

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "reportcheck_gateway_test";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::filesystem::remove(p);
  return p.string();
}

}  // namespace

TEST_CASE("fingerprint covers model, schema, system, user, temperature") {
  auto a = request("hello");
  auto b = a;
  CHECK(fingerprint(a) == fingerprint(b));
  b.max_output_tokens = 17;  // not part of the fingerprint
  CHECK(fingerprint(a) == fingerprint(b));
  b.user_text = "hello!";
  CHECK(fingerprint(a) != fingerprint(b));
  b = a;
  b.expected_schema = "claims.v1";
  CHECK(fingerprint(a) != fingerprint(b));
  b = a;
  b.temperature = 0.5;
  CHECK(fingerprint(a) != fingerprint(b));
  b = a;
  b.user_text = "hello";
  b.system_text = "sys\r\n";
  a.system_text = "sys\n";
  CHECK(fingerprint(a) == fingerprint(b));
}

TEST_CASE("replay returns stored response verbatim") {
  auto store = std::make_shared<ReplayStore>();
  ModelResponse stored{"stored text", 100, 20, 0.5, 42, false};
  store->put(request("q"), stored);
  Gateway gw({GatewayMode::kReplay, 2, 0, {}}, nullptr, store);
  auto r = gw.complete(request("q"), "extract");
  CHECK(r.text == "stored text");
  CHECK(r.input_tokens == 100);
  CHECK(r.cost_usd == 0.5);
  CHECK(r.latency_ms == 42);
  CHECK(gw.ledger().calls("extract") == 1);
}

TEST_CASE("replay miss is an error and never reaches a backend") {
  auto backend = std::make_shared<FunctionBackend>([](const ModelRequest&) { return testsupport::reply("x"); });
  Gateway gw({GatewayMode::kReplay, 2, 0, {}}, backend, std::make_shared<ReplayStore>());
  try {
    gw.complete(request("unknown"));
    FAIL("expected replay_miss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kReplayMiss);
  }
  CHECK(backend->sends == 0);
}

TEST_CASE("cost follows the price table") {
  auto backend = std::make_shared<FunctionBackend>(
      [](const ModelRequest&) { return testsupport::reply("ok", 1000, 500); });
  GatewayOptions opts{GatewayMode::kLive, 2, 0, {{"m1", Price{1e-6, 2e-6}}}};
  Gateway gw(opts, backend, nullptr);
  auto r = gw.complete(request("q"));
  CHECK(r.cost_usd == doctest::Approx(0.002).epsilon(1e-12));
  CHECK_FALSE(r.unpriced);

  auto other = request("q");
  other.model = "unknown-model";
  auto u = gw.complete(other);
  CHECK(u.cost_usd == 0.0);
  CHECK(u.unpriced);
  CHECK(gw.ledger().summary()["total"]["unpriced_calls"] == 1);
}

TEST_CASE("retries are bounded by the budget with exponential backoff") {
  int failures = 2;
  auto backend = std::make_shared<FunctionBackend>([&](const ModelRequest&) {
    if (failures-- > 0) throw Error(ErrorCode::kTimeout, "slow");
    return testsupport::reply("ok");
  });
  std::vector<int> sleeps;
  Gateway gw({GatewayMode::kLive, 2, 100, {}}, backend, nullptr);
  gw.set_sleeper([&](int ms) { sleeps.push_back(ms); });
  auto r = gw.complete(request("q"));
  CHECK(r.text == "ok");
  CHECK(backend->sends == 3);
  CHECK(sleeps == std::vector<int>{100, 200});
  CHECK(gw.ledger().records().at(0).attempts == 3);

  failures = 3;
  backend->sends = 0;
  CHECK_THROWS_AS(gw.complete(request("q2")), Error);
  CHECK(backend->sends == 3);

  auto fatal = std::make_shared<FunctionBackend>(
      [](const ModelRequest&) -> BackendReply { throw Error(ErrorCode::kConfig, "401"); });
  Gateway gw2({GatewayMode::kLive, 2, 0, {}}, fatal, nullptr);
  gw2.set_sleeper([](int) {});
  CHECK_THROWS_AS(gw2.complete(request("q")), Error);
  CHECK(fatal->sends == 1);
}

TEST_CASE("record mode persists JSON lines that replay reproduces") {
  auto path = temp_path("record.jsonl");
  auto backend = std::make_shared<FunctionBackend>(
      [](const ModelRequest& r) { return testsupport::reply("echo:" + r.user_text, 7, 3); });
  {
    Gateway rec({GatewayMode::kRecord, 2, 0, {{"m1", Price{1e-6, 1e-6}}}}, backend,
                ReplayStore::open(path));
    parallel_for(20, 4, [&](std::size_t i) { rec.complete(request("q" + std::to_string(i))); });
    CHECK(rec.ledger().total_calls() == 20);
  }
  auto store = ReplayStore::open(path);
  CHECK(store->size() == 20);
  for (int run = 0; run < 2; ++run) {
    Gateway replay({GatewayMode::kReplay, 2, 0, {}}, nullptr, ReplayStore::open(path));
    double total = 0;
    for (int i = 0; i < 20; ++i) {
      auto r = replay.complete(request("q" + std::to_string(i)));
      CHECK(r.text == "echo:q" + std::to_string(i));
      total += r.cost_usd;
    }
    CHECK(replay.ledger().total_cost() == doctest::Approx(total).epsilon(1e-15));
    CHECK(replay.ledger().summary()["total"]["calls"] == 20);
  }
}

TEST_CASE("empty user text is rejected") {
  Gateway gw({GatewayMode::kReplay, 2, 0, {}}, nullptr, nullptr);
  CHECK_THROWS_AS(gw.complete(request("   ")), Error);
}

TEST_CASE("parse_model_json tolerates fences and prose") {
  CHECK(parse_model_json("{\"a\":1}")["a"] == 1);
  CHECK(parse_model_json("```json\n{\"a\":2}\n```")["a"] == 2);
  CHECK(parse_model_json("Here you go: {\"a\":3} thanks")["a"] == 3);
  CHECK_THROWS_AS(parse_model_json("no json"), Error);
}
