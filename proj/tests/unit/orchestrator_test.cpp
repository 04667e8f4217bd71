#include <gtest/gtest.h>

#include <fstream>

#include "scada/orchestrator/dataset.hpp"
#include "scada/orchestrator/hmi_api.hpp"
#include "scada/orchestrator/tags.hpp"
#include "scada/orchestrator/testbed.hpp"

using namespace scada;
using namespace scada::orchestrator;

namespace {

TestbedConfig base_config() { return load_config(default_config_path()); }

void run_ticks(Topology& t, int n) { t.sched().run_until(t.sched().now() + t.config().tick * n); }

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("scada-unit-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST(Tags, ParsesAndScales)
{
    auto cfg = parse_tag_config("[Lvl]\ndatatype = integer\naddrtype = holdingreg\nrange = 0, 100\nscale = 10, 2\n"
                                "memaddr = 5\n[Al]\ndatatype = boolean\naddrtype = coil\nmemaddr = 30\n");
    ASSERT_EQ(cfg.tags.size(), 2u);
    auto* t = cfg.find("Lvl");
    DataTable table;
    table.set_holding(5, 3);
    EXPECT_EQ(t->read(table), 16);
    EXPECT_EQ(t->encode(16), 3);
    EXPECT_FALSE(t->in_range(101));
}

TEST(Tags, RejectsConflicts)
{
    EXPECT_THROW(parse_tag_config("[A]\ndatatype = integer\naddrtype = coil\nmemaddr = 1\n"), ini::ConfigError);
    EXPECT_THROW(parse_tag_config("[A]\ndatatype = integer\naddrtype = holdingreg\nmemaddr = 1\n"
                                  "[B]\ndatatype = integer\naddrtype = holdingreg\nmemaddr = 1\n"),
                 ini::ConfigError);
    EXPECT_THROW(parse_tag_config("[A]\ndatatype = integer\naddrtype = holdingreg\nmemaddr = 70000\n"), ini::ConfigError);
}

TEST(Config, LoadsDefaultsRelativeToFile)
{
    auto c = base_config();
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.tick, std::chrono::milliseconds(100));
    EXPECT_EQ(c.target.str(), "10.0.0.5");
    EXPECT_TRUE(fs::exists(c.rules));
    ASSERT_TRUE(c.honeypot);
}

TEST(Config, HoneypotSectionIsOptional)
{
    auto dir = scratch("nohp");
    std::string data = SCADA_DATA_DIR;
    std::ofstream(dir / "t.ini") << "[files]\nhmi = " << data << "/mbhmi.config\nlogic_map = " << data
                                 << "/mblogic.config\nclient = " << data << "/mbclient.config\nprogram = " << data
                                 << "/plcprog.txt\nrules = " << data << "/modbus.rules\n";
    auto c = load_config(dir / "t.ini");
    EXPECT_FALSE(c.honeypot);
    Topology t(c);
    EXPECT_TRUE(t.honeypots().empty());
    t.start();
    run_ticks(t, 20);
    EXPECT_FALSE(t.poller().faulted());
}

TEST(Config, MissingFilesSectionIsAnError)
{
    auto dir = scratch("nofiles");
    std::ofstream(dir / "t.ini") << "[testbed]\nseed = 3\n";
    EXPECT_THROW(load_config(dir / "t.ini"), ini::ConfigError);
}

TEST(Topology, SteadyStateAtFifty)
{
    Topology t(base_config());
    t.start();
    run_ticks(t, 20);
    EXPECT_EQ(t.master_table().holding(42210), 50);
    EXPECT_EQ(t.master_table().holding(42211), 50);
    EXPECT_FALSE(t.alarm());
    EXPECT_TRUE(t.master_table().coil(21)); // pump stopped
}

TEST(Topology, OperatorSpeedMovesWater)
{
    Topology t(base_config());
    t.start();
    run_ticks(t, 5);
    t.operator_write(*t.tags().find("PumpSpeed"), 5);
    run_ticks(t, 25);
    EXPECT_LT(t.tank().level1(), 50);
    EXPECT_GT(t.tank().level2(), 50);
    EXPECT_DOUBLE_EQ(t.tank().level1() + t.tank().level2(), 100);
    EXPECT_TRUE(t.master_table().coil(20)); // pump running
}

TEST(Topology, QuietPlantRaisesNoAlerts)
{
    Topology t(base_config());
    std::size_t alerts = 0;
    t.gateway().on_alert = [&](const ids::AlertEvent&) { ++alerts; };
    t.start();
    run_ticks(t, 1000);
    EXPECT_EQ(alerts, 0u);
    EXPECT_GT(t.poller().stats().rounds, 900u);
    t.gateway().on_alert = nullptr;
}

TEST(Topology, PollerTargetingMasterIsRejected)
{
    auto c = base_config();
    auto dir = scratch("selfpoll");
    std::ofstream(dir / "client.config") << "[P]\naction = poll\ntype = tcpclient\nhost = 10.0.0.3\nport = 502\n"
                                            "&r = function=3, uid=1, memaddr=1, qty=1, remoteaddr=1\n";
    c.client = dir / "client.config";
    EXPECT_THROW(Topology{c}, ini::ConfigError);
}

TEST(Topology, DeadSlaveRaisesCommFault)
{
    auto c = base_config();
    c.slave = net::Ipv4::must("10.0.0.44"); // the poll plan still targets 10.0.0.4
    Topology t(c);
    t.start();
    run_ticks(t, 40);
    EXPECT_TRUE(t.master_table().coil(1340));
    EXPECT_TRUE(tags_json(t)["comm_fault"].get<bool>());
}

TEST(HmiApi, TagSnapshot)
{
    Topology t(base_config());
    t.start();
    run_ticks(t, 10);
    auto j = tags_json(t);
    EXPECT_EQ(j["tags"]["Tank1Level"]["value"], 50);
    EXPECT_EQ(j["tags"]["Tank1Level"]["range"], json::array({0, 100}));
    EXPECT_EQ(j["bands"]["Tank1Level"], "NORMAL");
    EXPECT_EQ(j["alarm"], false);
}

TEST(HmiApi, WritesAreRangeChecked)
{
    Topology t(base_config());
    t.start();
    run_ticks(t, 5);
    auto ok = write_tag(t, {{"tag", "PumpSpeed"}, {"value", 5}});
    EXPECT_EQ(ok.status, 200);
    auto high = write_tag(t, {{"tag", "PumpSpeed"}, {"value", 200}});
    EXPECT_EQ(high.status, 422);
    EXPECT_EQ(high.body["range"], json::array({-9, 9}));
    EXPECT_EQ(write_tag(t, {{"tag", "Nope"}, {"value", 1}}).status, 404);
    EXPECT_EQ(write_tag(t, {{"tag", "Tank1Alarm"}, {"value", 1}}).status, 403);
    EXPECT_EQ(write_tag(t, {{"value", 1}}).status, 400);
    EXPECT_EQ(write_tag(t, {{"tag", "PumpSpeed"}, {"value", "fast"}}).status, 400);
    run_ticks(t, 10);
    EXPECT_EQ(as_signed(t.slave_table().holding(32210)), 5);
    EXPECT_EQ(tags_json(t)["pump_speed"], 5);
}

TEST(HmiApi, EventsRecordAlarmEdges)
{
    Topology t(base_config());
    t.preset_levels(97, 3);
    t.start();
    run_ticks(t, 5);
    auto ev = events_json(t)["events"];
    bool saw = false;
    for (auto& e : ev) saw |= e["tag"] == "Tank1Alarm" && e["state"] == true;
    EXPECT_TRUE(saw);
}

TEST(HmiApi, HttpRoundTrip)
{
    Topology topo(base_config());
    topo.start();
    Coordinator coord(topo);
    std::thread plant([&] { coord.run(true); });
    {
        HmiServer srv(coord, "127.0.0.1", 18731);
        httplib::Client cli("127.0.0.1", 18731);
        auto r = cli.Get("/api/tags");
        ASSERT_TRUE(r);
        EXPECT_EQ(r->status, 200);
        EXPECT_TRUE(json::parse(r->body)["tags"].contains("PumpSpeed"));
        auto w = cli.Post("/api/write", R"({"tag":"PumpSpeed","value":200})", "application/json");
        ASSERT_TRUE(w);
        EXPECT_EQ(w->status, 422);
        auto bad = cli.Post("/api/write", "not json", "application/json");
        ASSERT_TRUE(bad);
        EXPECT_EQ(bad->status, 400);
        auto e = cli.Get("/api/events");
        ASSERT_TRUE(e);
        EXPECT_EQ(e->status, 200);
    }
    coord.stop();
    plant.join();
}

TEST(Dataset, NamesAndAlarmEdge)
{
    EXPECT_EQ(capture_name("CI-03"), "CI-03_TDP.out");
    EXPECT_EQ(alert_log_name("CI-03"), "CI-03_SNT.log");
    std::vector<AlarmSample> w{{sim::Time{1}, true}};
    EXPECT_TRUE(alarm_raised(false, w));
    EXPECT_FALSE(alarm_raised(true, w));
}

TEST(Dataset, SameSeedSameBytes)
{
    auto cfg = base_config();
    auto* sc = attack::find_scenario("CI-04");
    auto a = run_scenario(cfg, *sc, scratch("det-a"));
    auto b = run_scenario(cfg, *sc, scratch("det-b"));
    EXPECT_EQ(read_file(a.capture), read_file(b.capture));
    EXPECT_EQ(read_file(a.alert_log), read_file(b.alert_log));
    EXPECT_EQ(a.transcript, b.transcript);
    EXPECT_TRUE(a.verdict());
}

TEST(Dataset, TranscriptCoversEveryRequest)
{
    auto cfg = base_config();
    auto b = run_scenario(cfg, *attack::find_scenario("CI-02"), scratch("transcript"));
    EXPECT_TRUE(b.error.empty()) << b.error;
    std::size_t requests = 0;
    std::istringstream in(b.transcript);
    for (std::string line; std::getline(in, line);) requests += line.find(" request ") != std::string::npos;
    EXPECT_EQ(requests, 5u);
}
