#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "gramscope/http_server.hpp"
#include "gramscope/synthetic.hpp"

using namespace gramscope;
using L = Label;
namespace fs = std::filesystem;

namespace {

// 220 items: chunk-000 holds 200, chunk-001 the remaining 20.
std::vector<AnnotationItem> sample_items() {
  SyntheticConfig cfg;
  cfg.n_items = 220;
  cfg.mode = SyntheticMode::Context;
  return generate_synthetic(cfg).items;
}

std::string fixed_clock() { return "2026-01-01T00:00:00Z"; }

std::string body(const std::string& annotator, const std::string& item, L label, std::vector<std::string> cats = {}) {
  Json j;
  j["annotator"] = annotator;
  j["item_id"] = item;
  j["label"] = to_string(label);
  j["categories"] = cats;
  return j.dump();
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    items_ = sample_items();
    dir_ = fs::temp_directory_path() / ("gramscope_service_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::unique_ptr<AnnotationProject> make(ServiceConfig cfg = {}, bool persist = true) {
    return std::make_unique<AnnotationProject>(items_, cfg,
                                               persist ? std::optional<fs::path>(dir_ / kEventLogName) : std::nullopt,
                                               fixed_clock);
  }

  Response get(AnnotationProject& p, const std::string& path, QueryParams q = {}) { return p.handle("GET", path, q, ""); }
  Response post(AnnotationProject& p, const std::string& path, const std::string& b) { return p.handle("POST", path, {}, b); }

  const std::string& id(std::size_t i) const { return items_[i].item_id; }

  std::vector<AnnotationItem> items_;
  fs::path dir_;
};

}  // namespace

TEST_F(ServiceTest, ChunksListed) {
  auto p = make();
  const auto r = get(*p, "/api/chunks");
  ASSERT_EQ(r.status, 200);
  const auto j = Json::parse(r.body);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["n_items"], 200);
  EXPECT_EQ(j[1]["n_items"], 20);
  EXPECT_EQ(j[1]["partial"], true);
}

TEST_F(ServiceTest, ItemsForAnnotator) {
  auto p = make();
  auto r = get(*p, "/api/items", {{"annotator", "ann1"}, {"chunk", "chunk-000"}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(Json::parse(r.body)["items"].size(), 200u);
  for (std::size_t i = 0; i < 50; ++i) ASSERT_EQ(post(*p, "/api/annotations", body("ann1", id(i), L::Grammatical)).status, 201);
  r = get(*p, "/api/items", {{"annotator", "ann1"}, {"chunk", "chunk-000"}});
  const auto j = Json::parse(r.body);
  EXPECT_EQ(j["items"].size(), 150u);
  EXPECT_EQ(j["items"][0]["item_id"], id(50));
  EXPECT_EQ(j["items"][0]["position"], 50);
  // Another annotator still sees everything.
  EXPECT_EQ(Json::parse(get(*p, "/api/items", {{"annotator", "ann2"}, {"chunk", "chunk-000"}}).body)["items"].size(), 200u);
  const auto all = Json::parse(get(*p, "/api/items", {{"annotator", "ann1"}, {"chunk", "chunk-000"}, {"all", "1"}}).body);
  EXPECT_EQ(all["items"].size(), 200u);
  EXPECT_EQ(all["items"][0]["label"], "grammatical");

  EXPECT_EQ(get(*p, "/api/items", {{"annotator", "ann1"}, {"chunk", "nope"}}).status, 404);
  EXPECT_EQ(get(*p, "/api/items", {{"chunk", "chunk-000"}}).status, 400);
}

TEST_F(ServiceTest, ContextWindowAndScrollback) {
  auto p = make();
  const auto j = Json::parse(get(*p, "/api/items", {{"annotator", "a"}, {"chunk", "chunk-000"}}).body);
  EXPECT_EQ(j["visible_context"], 8);
  const auto& late = j["items"][10];
  const auto& item = items_[10];
  ASSERT_EQ(item.context.size(), 10u);
  EXPECT_EQ(late["context"].size(), 8u);
  EXPECT_EQ(late["scrollback"].size(), 2u);
  EXPECT_EQ(late["context"].back()["text"], join(item.context.back().tokens));
  EXPECT_EQ(late["target"], join(item.target.tokens));
  const auto wide = Json::parse(get(*p, "/api/items", {{"annotator", "a"}, {"chunk", "chunk-000"}, {"context", "20"}}).body);
  EXPECT_EQ(wide["items"][10]["context"].size(), 10u);
  EXPECT_EQ(wide["items"][10]["scrollback"].size(), 0u);
  EXPECT_EQ(get(*p, "/api/items", {{"annotator", "a"}, {"context", "x"}, {"chunk", "chunk-000"}}).status, 400);
}

TEST_F(ServiceTest, PostValidationAndLatestWins) {
  auto p = make();
  auto r = post(*p, "/api/annotations", body("a", id(0), L::Ungrammatical, {"subject"}));
  ASSERT_EQ(r.status, 201);
  EXPECT_EQ(Json::parse(r.body)["event_id"], 1);
  EXPECT_EQ(post(*p, "/api/annotations", body("a", id(0), L::Grammatical, {"subject"})).status, 400);
  EXPECT_EQ(post(*p, "/api/annotations", body("a", "missing:1", L::Grammatical)).status, 404);
  EXPECT_EQ(post(*p, "/api/annotations", "{not json").status, 400);
  EXPECT_EQ(post(*p, "/api/annotations", R"({"annotator":"a","item_id":")" + id(0) + R"(","label":"fine"})").status, 400);
  EXPECT_EQ(post(*p, "/api/annotations", body("a", id(0), L::Ungrammatical, {"bogus"})).status, 400);
  EXPECT_EQ(post(*p, "/api/annotations", body("", id(0), L::Grammatical)).status, 400);
  r = post(*p, "/api/annotations", body("a", id(0), L::Ambiguous));
  EXPECT_EQ(Json::parse(r.body)["event_id"], 2);
  const auto all = Json::parse(get(*p, "/api/items", {{"annotator", "a"}, {"chunk", "chunk-000"}, {"all", "1"}}).body);
  EXPECT_EQ(all["items"][0]["label"], "ambiguous");
  EXPECT_EQ(split_lines(read_file(dir_ / kEventLogName)).size(), 2u);
  EXPECT_EQ(get(*p, "/api/nothing").status, 404);
}

TEST_F(ServiceTest, AgreementRequiresQuorum) {
  auto p = make();
  auto r = get(*p, "/api/agreement");
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(Json::parse(r.body)["error"], "InsufficientData");
  for (std::size_t i = 200; i < 220; ++i)
    for (const auto* a : {"a", "b", "c"})
      post(*p, "/api/annotations", body(a, id(i), i % 2 ? L::Grammatical : L::Ungrammatical));
  r = get(*p, "/api/agreement");
  ASSERT_EQ(r.status, 200);
  const auto j = Json::parse(r.body);
  EXPECT_EQ(j["n_complete_items"], 20);
  EXPECT_EQ(j["alpha"].get<double>(), 1.0);
  EXPECT_EQ(j["kappa_mean"].get<double>(), 1.0);
}

TEST_F(ServiceTest, QueuePolicies) {
  for (auto policy : {QueuePolicy::Majority, QueuePolicy::Unanimity}) {
    ServiceConfig cfg;
    cfg.policy = policy;
    auto p = make(cfg, false);
    // item 0: (G,G,U); item 1: (U,A,G); item 2: unanimous U.
    post(*p, "/api/annotations", body("a", id(0), L::Grammatical));
    post(*p, "/api/annotations", body("b", id(0), L::Grammatical));
    post(*p, "/api/annotations", body("c", id(0), L::Ungrammatical, {"verb"}));
    post(*p, "/api/annotations", body("a", id(1), L::Ungrammatical));
    post(*p, "/api/annotations", body("b", id(1), L::Ambiguous));
    post(*p, "/api/annotations", body("c", id(1), L::Grammatical));
    for (const auto* a : {"a", "b", "c"}) post(*p, "/api/annotations", body(a, id(2), L::Ungrammatical));
    const auto queue = p->adjudication_queue();
    if (policy == QueuePolicy::Majority) {
      EXPECT_EQ(queue, (std::vector<std::string>{id(1)}));
      ASSERT_TRUE(p->resolution(id(0)));
      EXPECT_EQ(p->resolution(id(0))->label, L::Grammatical);
      EXPECT_TRUE(p->resolution(id(0))->categories.empty());
    } else {
      EXPECT_EQ(queue, (std::vector<std::string>{id(0), id(1)}));
      EXPECT_FALSE(p->resolution(id(0)));
    }
    EXPECT_FALSE(p->resolution(id(1)));
    EXPECT_EQ(p->resolution(id(2))->label, L::Ungrammatical);

    const auto listed = Json::parse(get(*p, "/api/adjudication").body);
    EXPECT_EQ(listed["items"].size(), queue.size());
    EXPECT_EQ(listed["items"].back()["votes"]["b"], "ambiguous");

    auto r = post(*p, "/api/adjudication", body("lead", id(1), L::Ambiguous));
    ASSERT_EQ(r.status, 201);
    EXPECT_EQ(Json::parse(r.body)["gold"]["label"], "ambiguous");
    EXPECT_EQ(p->resolution(id(1))->label, L::Ambiguous);
    const auto after = p->adjudication_queue();
    EXPECT_EQ(std::count(after.begin(), after.end(), id(1)), 0);
    r = post(*p, "/api/adjudication", body("lead", id(5), L::Grammatical));
    EXPECT_EQ(r.status, 409);
  }
}

TEST_F(ServiceTest, MajorityQueuesExactlyPairwiseDistinctTriples) {
  auto p = make({}, false);
  Rng rng(12);
  for (std::size_t i = 0; i < 200; ++i) {
    std::array<L, 3> v;
    for (std::size_t k = 0; k < 3; ++k) {
      v[k] = label_from_code(static_cast<int>(rng.below(3)));
      post(*p, "/api/annotations", body(std::string(1, static_cast<char>('a' + k)), id(i), v[k]));
    }
    const bool distinct = v[0] != v[1] && v[1] != v[2] && v[0] != v[2];
    const auto q = p->adjudication_queue();
    EXPECT_EQ(std::count(q.begin(), q.end(), id(i)) == 1, distinct);
  }
}

TEST_F(ServiceTest, CategoriesUnionOverUngrammaticalVoters) {
  auto p = make({}, false);
  post(*p, "/api/annotations", body("a", id(0), L::Ungrammatical, {"subject"}));
  post(*p, "/api/annotations", body("b", id(0), L::Ungrammatical, {"determiner", "subject"}));
  post(*p, "/api/annotations", body("c", id(0), L::Grammatical));
  const auto g = p->resolution(id(0));
  ASSERT_TRUE(g);
  EXPECT_EQ(g->categories, (CategorySet{ErrorCategory::Subject, ErrorCategory::Determiner}));
}

TEST_F(ServiceTest, ExportAndReplay) {
  {
    auto p = make();
    auto r = get(*p, "/api/export");
    EXPECT_EQ(r.status, 200);
    EXPECT_TRUE(r.body.empty());
    EXPECT_EQ(r.headers.at("X-Visible-Context"), "8");
    EXPECT_EQ(r.headers.at("X-Queue-Policy"), "majority");
    for (std::size_t i = 0; i < 6; ++i)
      for (const auto* a : {"a", "b", "c"})
        post(*p, "/api/annotations", body(a, id(i), i == 3 && *a == 'b' ? L::Ambiguous : L::Grammatical));
    post(*p, "/api/annotations", body("a", id(3), L::Ungrammatical));  // (U,A,G): queued
    post(*p, "/api/annotations", body("a", id(10), L::Grammatical));   // below quorum
    r = get(*p, "/api/export");
    write_file(dir_ / "export.jsonl", r.body);
    const auto exported = load_gold_jsonl(dir_ / "export.jsonl");
    EXPECT_EQ(exported, p->resolved());
    EXPECT_EQ(exported.size(), 5u);
    for (const auto& g : exported) EXPECT_NE(g.item_id, id(3));
  }
  auto before = make();  // replays the log written above
  auto second = make();
  EXPECT_EQ(before->resolved(), second->resolved());
  EXPECT_EQ(before->adjudication_queue(), (std::vector<std::string>{id(3)}));
  EXPECT_EQ(get(*before, "/api/progress").body, get(*second, "/api/progress").body);
  EXPECT_EQ(get(*before, "/api/export").body, read_file(dir_ / "export.jsonl"));
  // Event ids continue after replay.
  const auto r = post(*second, "/api/annotations", body("d", id(0), L::Grammatical));
  EXPECT_EQ(Json::parse(r.body)["event_id"], 21);
}

TEST_F(ServiceTest, CorruptLogNamesTheLine) {
  write_file(dir_ / kEventLogName, to_json(AnnotationEvent{1, "annotation", "", "a", id(0), L::Grammatical, {}}).dump() +
                                       "\n{\"event_id\":2,\"type\":\"annotation\",\"item_id\":\"ghost\",\"label\":\"grammatical\"}\n");
  try {
    make();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

TEST_F(ServiceTest, ConcurrentWritersGetDistinctIds) {
  auto p = make();
  std::vector<std::thread> threads;
  std::atomic<int> created{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (std::size_t i = 0; i < 25; ++i) {
        const auto r = post(*p, "/api/annotations", body("w" + std::to_string(t), id(i), L::Grammatical));
        if (r.status == 201) ++created;
        get(*p, "/api/progress");
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(created.load(), 200);
  std::set<std::uint64_t> ids;
  for (const auto& line : split_lines(read_file(dir_ / kEventLogName))) ids.insert(Json::parse(line)["event_id"].get<std::uint64_t>());
  EXPECT_EQ(ids.size(), 200u);
  EXPECT_EQ(*ids.rbegin(), 200u);
  auto replayed = make();
  EXPECT_EQ(get(*replayed, "/api/progress").body, get(*p, "/api/progress").body);
}

TEST_F(ServiceTest, EndToEndOverHttp) {
  auto project = make();
  httplib::Server server;
  install_routes(server, *project);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  // Three scripted annotators label the 20-item chunk unanimously.
  auto listed = client.Get("/api/items?annotator=a&chunk=chunk-001");
  ASSERT_TRUE(listed);
  const auto chunk = Json::parse(listed->body)["items"];
  ASSERT_EQ(chunk.size(), 20u);
  std::vector<GoldAnnotation> truth;
  for (std::size_t k = 0; k < chunk.size(); ++k) {
    const std::string item = chunk[k]["item_id"];
    const L label = label_from_code(static_cast<int>(k % 3));
    truth.push_back({item, label, {}, std::nullopt});
    for (const auto* a : {"a", "b", "c"}) {
      auto res = client.Post("/api/annotations", body(a, item, label), "application/json");
      ASSERT_TRUE(res);
      ASSERT_EQ(res->status, 201);
    }
  }
  auto agreement = client.Get("/api/agreement");
  ASSERT_TRUE(agreement);
  EXPECT_EQ(Json::parse(agreement->body)["alpha"].get<double>(), 1.0);

  // Inject one three-way tie.
  const std::string tied = id(0);
  client.Post("/api/annotations", body("a", tied, L::Ungrammatical), "application/json");
  client.Post("/api/annotations", body("b", tied, L::Ambiguous), "application/json");
  client.Post("/api/annotations", body("c", tied, L::Grammatical), "application/json");
  const auto queue = Json::parse(client.Get("/api/adjudication")->body)["items"];
  ASSERT_EQ(queue.size(), 1u);
  EXPECT_EQ(queue[0]["item_id"], tied);

  auto bad = client.Post("/api/annotations", body("a", tied, L::Grammatical, {"subject"}), "application/json");
  EXPECT_EQ(bad->status, 400);

  // Export feeds the evaluation pipeline unchanged.
  auto exported = client.Get("/api/export");
  ASSERT_TRUE(exported);
  EXPECT_EQ(exported->get_header_value("X-Visible-Context"), "8");
  write_file(dir_ / "gold.jsonl", exported->body);
  const auto gold = load_gold_jsonl(dir_ / "gold.jsonl");
  EXPECT_EQ(gold, truth);
  const auto data = align_gold(items_, gold);
  ASSERT_EQ(data.items.size(), 20u);
  std::vector<Prediction> preds;
  for (const auto& g : gold) preds.push_back({g.item_id, g.label, one_hot(g.label)});
  const auto report = evaluate_predictions(data, preds, BootstrapConfig{200, 0.95, 0});
  EXPECT_EQ(report.accuracy.mean, 1.0);
  EXPECT_NEAR(report.pcc.mean, 1.0, 1e-12);

  server.stop();
  worker.join();
}
