#include <gtest/gtest.h>

#include "ibacct/gamesvc_http.hpp"
#include "test_support.hpp"

using namespace ibacct;
using nlohmann::json;

namespace {

GameConfig http_fixture() {
    GameConfig c;
    c.machines = {testing_support::machine("desktop", 16, 65), testing_support::machine("ic", 48, 205)};
    c.reference_machine = "ic";
    for (int i = 0; i < 10; ++i) {
        c.jobs.push_back(testing_support::profile("h" + std::to_string(i), 0.0, i == 2 ? 32 : 2,
                                                  {{"desktop", {60.0 + i, 900.0 + i}}, {"ic", {40.0 + i, 1200.0 + i}}}));
    }
    c.v1_budget = 400.0;
    c.deadline_s = 1000.0;
    c.seed = 5;
    return c;
}

class GameHttp : public ::testing::Test {
protected:
    GameService svc{http_fixture()};
    GameServer server{svc};
    std::unique_ptr<httplib::Client> cli;

    void SetUp() override {
        const int port = server.start();
        cli = std::make_unique<httplib::Client>("127.0.0.1", port);
    }

    std::pair<int, json> post(const std::string& path, const std::string& body) {
        auto r = cli->Post(path, body, "application/json");
        EXPECT_TRUE(r) << path;
        return {r->status, json::parse(r->body)};
    }
    std::pair<int, json> get(const std::string& path, std::string* raw = nullptr) {
        auto r = cli->Get(path);
        EXPECT_TRUE(r) << path;
        if (raw) *raw = r->body;
        return {r->status, json::parse(r->body)};
    }
    std::string session_of(const std::string& version) {
        for (int i = 0;; ++i) {
            auto [st, b] = post("/sessions", json{{"participant_id", "pp" + std::to_string(i)}}.dump());
            if (b["version"] == version) return b["session_id"];
        }
    }
};

}  // namespace

TEST_F(GameHttp, FullPlayThrough) {
    auto [st, board] = post("/sessions", R"({"participant_id":"alice"})");
    ASSERT_EQ(st, 201);
    const std::string id = board["session_id"];
    EXPECT_EQ(board["jobs"].size(), 8u);

    auto [bst, again] = get("/sessions/" + id + "/board");
    EXPECT_EQ(bst, 200);
    EXPECT_EQ(again, board);

    const double quoted = board["jobs"][0]["options"][1]["cost"];
    auto [pst, placed] = post("/sessions/" + id + "/placements", R"({"job_id":"h0","machine_id":"ic"})");
    ASSERT_EQ(pst, 200) << placed.dump();
    EXPECT_EQ(placed["placement"]["cost"].get<double>(), quoted);
    EXPECT_EQ(placed["board"]["spent"].get<double>(), quoted);

    auto [fst, summary] = post("/sessions/" + id + "/finish", "");
    EXPECT_EQ(fst, 200);
    EXPECT_EQ(summary["jobs_completed"], 1);

    auto [est, exported] = get("/export");
    EXPECT_EQ(est, 200);
    ASSERT_EQ(exported["sessions"].size(), 1u);
    EXPECT_EQ(exported["sessions"][0]["energy_j"].get<double>(), 1200.0);
    EXPECT_EQ(exported["jobs"][0]["completed"], 1);
}

TEST_F(GameHttp, ErrorStatusesAndBodies) {
    auto expect_error = [](const std::pair<int, json>& r, int status, const std::string& code) {
        EXPECT_EQ(r.first, status) << r.second.dump();
        EXPECT_EQ(r.second["code"], code);
        EXPECT_TRUE(r.second["message"].is_string());
    };
    expect_error(get("/sessions/nope/board"), 404, "unknown_session");
    expect_error(post("/sessions", "{not json"), 400, "bad_request");
    expect_error(post("/sessions", R"({"participant_id": 7})"), 400, "bad_request");

    const std::string id = session_of("V1");
    const std::string place = "/sessions/" + id + "/placements";
    expect_error(post(place, R"({"job_id":"h2","machine_id":"desktop"})"), 422, "ineligible_machine");
    expect_error(post(place, R"({"job_id":"h9","machine_id":"ic"})"), 422, "job_not_visible");
    expect_error(post(place, R"({"job_id":"h2","machine_id":"ic"})"), 409, "insufficient_allocation");
    expect_error(post(place, R"({"job_id":"h0"})"), 400, "bad_request");
    ASSERT_EQ(post(place, R"({"job_id":"h0","machine_id":"ic"})").first, 200);
    expect_error(post(place, R"({"job_id":"h0","machine_id":"ic"})"), 409, "already_placed");
    ASSERT_EQ(post("/sessions/" + id + "/finish", "").first, 200);
    expect_error(post("/sessions/" + id + "/finish", ""), 409, "session_finished");
    expect_error(get("/export?version=V9"), 422, "invalid");
    expect_error(get("/export?include_flagged=maybe"), 400, "bad_request");
    expect_error(get("/no/such/route"), 404, "not_found");
}

TEST_F(GameHttp, V1ResponsesCarryNoEnergyText) {
    const std::string id = session_of("V1");
    std::string raw;
    get("/sessions/" + id + "/board", &raw);
    EXPECT_EQ(raw.find("energy"), std::string::npos);
    auto r = cli->Post("/sessions/" + id + "/placements", R"({"job_id":"h1","machine_id":"desktop"})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(r->body.find("energy"), std::string::npos);
    r = cli->Post("/sessions/" + id + "/finish", "", "application/json");
    EXPECT_EQ(r->body.find("energy"), std::string::npos);

    const std::string v3 = session_of("V3");
    get("/sessions/" + v3 + "/board", &raw);
    EXPECT_NE(raw.find("energy_j"), std::string::npos);
}

TEST_F(GameHttp, ExportFiltersByVersion) {
    for (const char* v : {"V1", "V2", "V3"}) {
        const std::string id = session_of(v);
        ASSERT_EQ(post("/sessions/" + id + "/finish", "").first, 200);
    }
    auto [st, only] = get("/export?version=V2");
    EXPECT_EQ(st, 200);
    ASSERT_EQ(only["sessions"].size(), 1u);
    EXPECT_EQ(only["sessions"][0]["version"], "V2");
    // Finishing immediately is always shorter than the minimum duration.
    EXPECT_TRUE(get("/export?include_flagged=false").second["sessions"].empty());
}
