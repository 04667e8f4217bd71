#pragma once

// The whole tank plant on one simulated clock: slave with the process,
// master/PLC with its poller and logic, the gateway with the signature
// engine, honeypot nodes and the attacker host.

#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scada/attack/attacker.hpp"
#include "scada/gateway.hpp"
#include "scada/honeypot/honeyd_config.hpp"
#include "scada/honeypot/sim_node.hpp"
#include "scada/ids/engine.hpp"
#include "scada/logic_engine.hpp"
#include "scada/master_poller.hpp"
#include "scada/modbus_server.hpp"
#include "scada/net/pcap.hpp"
#include "scada/orchestrator/tags.hpp"
#include "scada/tank_process.hpp"

namespace scada::orchestrator {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

struct HoneypotFiles {
    fs::path config, osdb, scripts;
};

struct TestbedConfig {
    std::uint64_t seed = 1;
    gateway::Mode mode = gateway::Mode::ids;
    sim::Duration tick = 100ms;
    std::uint16_t hmi_port = 8080;
    fs::path output_dir = "datasets";

    net::Ipv4 master = net::Ipv4::must("10.0.0.3");
    net::Ipv4 slave = net::Ipv4::must("10.0.0.4");
    net::Ipv4 attacker = net::Ipv4::must("192.168.100.11");
    net::Ipv4 target = net::Ipv4::must("10.0.0.5");
    net::Cidr inside = *net::Cidr::parse("10.0.0.0/24");
    net::Cidr outside = *net::Cidr::parse("192.168.100.0/24");

    fs::path hmi, logic_map, client, program, rules;
    std::optional<HoneypotFiles> honeypot;
};

inline std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline TestbedConfig load_config(const fs::path& path)
{
    auto doc = ini::parse(read_file(path));
    auto base = path.parent_path();
    TestbedConfig c;
    auto ip = [](const std::string& v) {
        auto a = net::Ipv4::parse(v);
        if (!a) throw ini::ConfigError("bad address '" + v + "'");
        return *a;
    };
    auto cidr = [](const std::string& v) {
        auto a = net::Cidr::parse(v);
        if (!a) throw ini::ConfigError("bad network '" + v + "'");
        return *a;
    };
    if (auto* s = doc.find("testbed")) {
        if (auto* v = s->find("seed")) c.seed = static_cast<std::uint64_t>(ini::parse_int(*v, "seed"));
        if (auto* v = s->find("mode")) c.mode = gateway::parse_mode(*v);
        if (auto* v = s->find("tick_ms")) {
            auto ms = ini::parse_int(*v, "tick_ms");
            if (ms < 2) throw ini::ConfigError("tick_ms must be at least 2");
            c.tick = std::chrono::milliseconds(ms);
        }
        if (auto* v = s->find("hmi_port")) c.hmi_port = static_cast<std::uint16_t>(ini::parse_int(*v, "hmi_port"));
        if (auto* v = s->find("output_dir")) c.output_dir = base / *v;
    }
    if (auto* s = doc.find("addresses")) {
        if (auto* v = s->find("master")) c.master = ip(*v);
        if (auto* v = s->find("slave")) c.slave = ip(*v);
        if (auto* v = s->find("attacker")) c.attacker = ip(*v);
        if (auto* v = s->find("target")) c.target = ip(*v);
        if (auto* v = s->find("inside")) c.inside = cidr(*v);
        if (auto* v = s->find("outside")) c.outside = cidr(*v);
    }
    auto* files = doc.find("files");
    if (!files) throw ini::ConfigError("[files] section missing");
    c.hmi = base / files->require("hmi");
    c.logic_map = base / files->require("logic_map");
    c.client = base / files->require("client");
    c.program = base / files->require("program");
    c.rules = base / files->require("rules");
    if (auto* h = doc.find("honeypot"))
        c.honeypot = HoneypotFiles{base / h->require("config"), base / h->require("osdb"), base / h->require("scripts")};
    return c;
}

#ifdef SCADA_DATA_DIR
inline fs::path default_config_path() { return fs::path(SCADA_DATA_DIR) / "testbed.ini"; }
#endif

struct AlarmSample {
    sim::Time at{0};
    bool alarm = false;
};

struct HmiEvent {
    sim::Time at{0};
    std::string tag;
    bool state = false;
};

class Topology {
public:
    static constexpr std::uint16_t kAlarmCoil1 = 30;
    static constexpr std::uint16_t kAlarmCoil2 = 31;
    static constexpr std::size_t kEventLimit = 256;

    explicit Topology(TestbedConfig cfg)
        : cfg_(std::move(cfg)), net_(sched_, cfg_.seed), tags_(parse_tag_config(read_file(cfg_.hmi))),
          map_(parse_address_map(read_file(cfg_.logic_map))), program_(logic::parse_program(read_file(cfg_.program))),
          slave_node_(slave_table_, {}), master_node_(master_table_, {})
    {
        auto clients = master::parse_client_config(read_file(cfg_.client));
        if (clients.empty()) throw ini::ConfigError("no poll client configured");

        ids::Variables vars{
            {"MODBUS_CLIENT", net::AddressSet{false, {cfg_.inside, cfg_.outside}}},
            {"MODBUS_SERVER", net::AddressSet{false, {cfg_.inside}}},
            {"HOME_NET", net::AddressSet{false, {cfg_.inside}}},
            {"EXTERNAL_NET", net::AddressSet::all()},
        };
        gateway_ = std::make_unique<gateway::Gateway>(cfg_.mode, gateway::ChainPolicy{},
                                                      ids::Engine::from_text(read_file(cfg_.rules), vars),
                                                      net::AddressSet{false, {cfg_.inside}});
        gateway_->attach(net_);

        net_.add_host(cfg_.slave, "slave");
        net_.add_host(cfg_.master, "master");
        slave_server_ = std::make_unique<ModbusServer>(net_, cfg_.slave, 502, slave_node_);
        master_server_ = std::make_unique<ModbusServer>(net_, cfg_.master, 502, master_node_);
        add_side_services();
        for (auto& c : clients) {
            if (c.host == cfg_.master) throw ini::ConfigError("poll client [" + c.name + "] points at the master itself");
            pollers_.push_back(std::make_unique<master::MasterPoller>(net_, cfg_.master, master_table_, std::move(c)));
        }

        if (cfg_.honeypot) add_honeypots(*cfg_.honeypot);
        attacker_ = std::make_unique<attack::Attacker>(net_, cfg_.attacker, cfg_.seed * 7919 + 7);

        tank_ = process::step(tank_, sim::Duration{0}, slave_table_);
    }

    Topology(const Topology&) = delete;
    Topology& operator=(const Topology&) = delete;
    ~Topology()
    {
        running_ = false;
        net_.set_gateway(nullptr);
        for (auto& p : pollers_) p->stop();
        // open streams send their FIN while the network is still here
        attacker_.reset();
        honeypots_.clear();
        pollers_.clear();
    }

    const TestbedConfig& config() const { return cfg_; }
    sim::Scheduler& sched() { return sched_; }
    sim::Network& net() { return net_; }
    DataTable& master_table() { return master_table_; }
    DataTable& slave_table() { return slave_table_; }
    const LogicTable& logic() const { return logic_; }
    const TagConfig& tags() const { return tags_; }
    gateway::Gateway& gateway() { return *gateway_; }
    attack::Attacker& attacker() { return *attacker_; }
    master::MasterPoller& poller() { return *pollers_.front(); }
    const process::TankState& tank() const { return tank_; }
    const ServerStats& master_stats() const { return master_server_->stats(); }
    const std::vector<std::unique_ptr<honeypot::SimHoneypot>>& honeypots() const { return honeypots_; }
    const std::vector<AlarmSample>& alarm_trace() const { return alarm_trace_; }
    const std::deque<HmiEvent>& events() const { return events_; }

    /// Alarm as the operator sees it: either tank full.
    bool alarm() const { return master_table_.coil(kAlarmCoil1) || master_table_.coil(kAlarmCoil2); }

    void start()
    {
        if (running_) return;
        running_ = true;
        for (auto& p : pollers_) p->start();
        sim::spawn(tick_loop());
    }

    /// Puts water in the tanks directly, as if the plant had been left there.
    void preset_levels(double l1, double l2)
    {
        if (l1 < 0 || l2 < 0 || l1 + l2 > 200 || l1 > 100 || l2 > 100) throw std::invalid_argument("levels outside 0..100");
        tank_ = process::TankState::at(l1, l2);
        tank_ = process::step(tank_, sim::Duration{0}, slave_table_);
    }

    /// Operator write through the master: lands locally and reaches the slave
    /// on the next poll round.
    void operator_write(const Tag& t, double value)
    {
        if (t.space != Space::holding_registers) {
            master_table_.set_bit(t.space, t.address, value != 0);
            return;
        }
        pollers_.front()->send_write(t.address, {t.encode(value)});
    }

private:
    sim::Task<void> tick_loop()
    {
        auto half = cfg_.tick / 2;
        while (running_) {
            tank_ = process::step(tank_, std::chrono::duration_cast<std::chrono::microseconds>(cfg_.tick), slave_table_);
            for (auto& p : pollers_) p->trigger();
            co_await sched_.sleep(half);
            scan();
            co_await sched_.sleep(cfg_.tick - half);
        }
    }

    void scan()
    {
        transfer(map_, master_table_, logic_);
        logic::scan_cycle(program_, logic_);
        transfer(map_, master_table_, logic_);
        alarm_trace_.push_back({sched_.now(), alarm()});
        for (auto& t : tags_.tags) {
            if (t.type != TagType::boolean) continue;
            bool v = t.read(master_table_) != 0;
            // coils power up cleared, so an alarm already up at start is an edge
            auto it = last_state_.try_emplace(t.name, false).first;
            if (it->second == v) continue;
            it->second = v;
            events_.push_back({sched_.now(), t.name, v});
            if (events_.size() > kEventLimit) events_.pop_front();
        }
    }

    /// Web and FTP front doors of the master; the honeypot proxies to them.
    void add_side_services()
    {
        sim::Listener http;
        http.on_data = [](const sim::ConnPtr& c, Bytes) {
            static const std::string body = "<html><head><title>Tank System</title></head><body>HMI</body></html>";
            std::string resp = "HTTP/1.0 200 OK\r\nServer: MBLogic\r\nContent-Type: text/html\r\nContent-Length: "
                               + std::to_string(body.size()) + "\r\n\r\n" + body;
            c->server_send(Bytes(resp.begin(), resp.end()));
            c->server_close();
        };
        net_.listen(cfg_.master, 80, std::move(http));

        sim::Listener ftp;
        ftp.on_open = [](const sim::ConnPtr& c) {
            std::string banner = "220 (vsFTPd 2.3.4)\r\n";
            c->server_send(Bytes(banner.begin(), banner.end()));
        };
        ftp.on_data = [](const sim::ConnPtr& c, Bytes d) {
            std::string cmd(d.begin(), d.end());
            std::string r = cmd.rfind("QUIT", 0) == 0 ? "221 Goodbye.\r\n" : "530 Please login with USER and PASS.\r\n";
            c->server_send(Bytes(r.begin(), r.end()));
            if (cmd.rfind("QUIT", 0) == 0) c->server_close();
        };
        net_.listen(cfg_.master, 21, std::move(ftp));
    }

    void add_honeypots(const HoneypotFiles& f)
    {
        auto conf = honeypot::parse_honeyd_config(read_file(f.config));
        auto db = honeypot::parse_fingerprints(read_file(f.osdb));
        honeypot::ServiceSettings s;
        s.script_dir = f.scripts.string();
        s.hostmap["127.0.0.1"] = cfg_.master;
        s.hostmap["localhost"] = cfg_.master;
        std::uint64_t seed = cfg_.seed * 104729;
        for (auto& node : conf.nodes()) {
            std::optional<honeypot::Personality> pers;
            if (!node.personality.empty()) {
                auto* p = honeypot::find_personality(db, node.personality);
                if (!p) throw ini::ConfigError("personality '" + node.personality + "' not in the fingerprint database");
                pers = *p;
            }
            honeypots_.push_back(std::make_unique<honeypot::SimHoneypot>(net_, node, pers, ++seed, s));
            if (node.ethernet)
                for (auto ip : node.addresses) macs_.emplace_back(ip, *node.ethernet);
        }
    }

public:
    /// Link-layer addresses the honeypot claims, for the capture writer.
    const std::vector<std::pair<net::Ipv4, net::Mac>>& macs() const { return macs_; }

private:
    TestbedConfig cfg_;
    sim::Scheduler sched_;
    sim::Network net_;
    TagConfig tags_;
    AddressMap map_;
    logic::LogicProgram program_;
    DataTable slave_table_;
    DataTable master_table_;
    LogicTable logic_;
    slave::SlaveNode slave_node_;
    slave::SlaveNode master_node_;
    std::unique_ptr<ModbusServer> slave_server_;
    std::unique_ptr<ModbusServer> master_server_;
    std::vector<std::unique_ptr<master::MasterPoller>> pollers_;
    std::unique_ptr<gateway::Gateway> gateway_;
    std::vector<std::unique_ptr<honeypot::SimHoneypot>> honeypots_;
    std::vector<std::pair<net::Ipv4, net::Mac>> macs_;
    std::unique_ptr<attack::Attacker> attacker_;
    process::TankState tank_;
    bool running_ = false;
    std::vector<AlarmSample> alarm_trace_;
    std::deque<HmiEvent> events_;
    std::map<std::string, bool> last_state_;
};

} // namespace scada::orchestrator
