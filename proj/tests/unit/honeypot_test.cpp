#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "scada/honeypot/fingerprint.hpp"
#include "scada/honeypot/honeyd_config.hpp"
#include "scada/honeypot/responder.hpp"

using namespace scada;
using namespace scada::honeypot;

namespace {

std::string data_file(const char* name)
{
    std::ifstream in(std::string(SCADA_DATA_DIR) + "/" + name);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Responder plc_responder(std::uint64_t seed = 1)
{
    auto cfg = parse_honeyd_config(data_file("honeyd.conf"));
    auto db = parse_fingerprints(data_file("nmap-os-db"));
    auto* node = cfg.node_for(net::Ipv4::must("10.0.0.5"));
    auto* pers = find_personality(db, node->personality);
    return Responder(*node, *pers, seed);
}

} // namespace

TEST(Honeyd, ParsesProfilesAndBindings)
{
    auto cfg = parse_honeyd_config(data_file("honeyd.conf"));
    auto nodes = cfg.nodes();
    ASSERT_EQ(nodes.size(), 1u);
    auto& n = nodes[0];
    EXPECT_EQ(n.profile, "CustomNodeProfile-0");
    EXPECT_EQ(n.personality, "VxWorks 12.0");
    EXPECT_EQ(n.addresses.size(), 2u);
    EXPECT_EQ(n.tcp_default, PortMode::filtered);
    EXPECT_EQ(n.icmp_default, PortMode::open);
    auto* p502 = n.binding(net::Transport::tcp, 502);
    ASSERT_TRUE(p502);
    EXPECT_EQ(p502->kind, PortAction::Kind::proxy);
    EXPECT_EQ(p502->proxy_host, "127.0.0.1");
    EXPECT_EQ(p502->proxy_port, 502);
    auto* p23 = n.binding(net::Transport::tcp, 23);
    ASSERT_TRUE(p23);
    EXPECT_EQ(p23->kind, PortAction::Kind::script);
    ASSERT_TRUE(n.ethernet);
    EXPECT_EQ((*n.ethernet)[5], 0xC2);
}

TEST(Honeyd, HighestPortIsBindable)
{
    auto cfg = parse_honeyd_config("create x\nadd x tcp port 65535 open\nadd x udp port 65535 open\nbind 10.0.0.9 x\n");
    auto& n = cfg.profiles.at("x");
    EXPECT_TRUE(n.binding(net::Transport::tcp, 65535));
    Responder r(n, std::nullopt);
    EXPECT_EQ(r.respond({net::Transport::tcp, 65535, net::tcp::SYN}).kind, ProbeResponse::Kind::synack);
}

TEST(Honeyd, RejectsBadInput)
{
    EXPECT_THROW(parse_honeyd_config("create x\nadd x tcp port 65536 open\n"), ConfigError);
    EXPECT_THROW(parse_honeyd_config("add nobody tcp port 1 open\n"), ConfigError);
    EXPECT_THROW(parse_honeyd_config("create x\nset x droprate in 150\n"), ConfigError);
    EXPECT_THROW(parse_honeyd_config("create x\nset x ethernet \"00:11\"\n"), ConfigError);
    try {
        parse_honeyd_config("create x\n\nfrobnicate x\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line, 3);
    }
}

TEST(Fingerprint, ParsesBlocksAndOptions)
{
    auto db = parse_fingerprints(data_file("nmap-os-db"));
    auto* p = find_personality(db, "VxWorks 12.0");
    ASSERT_TRUE(p);
    EXPECT_EQ(p->text("WIN", "W1"), std::optional<std::string>("2000"));
    auto opts = decode_option_string("M5B4ST11NW7");
    ASSERT_EQ(opts.size(), 5u);
    EXPECT_EQ(opts[0].kind, TcpOption::Kind::mss);
    EXPECT_EQ(opts[0].value, 0x5B4u);
    EXPECT_EQ(opts[4].kind, TcpOption::Kind::wscale);
    EXPECT_EQ(opts[4].value, 7u);
    EXPECT_EQ(parse_tcp_options(encode_tcp_options(opts)), opts);
}

TEST(Fingerprint, SkipsUnknownBlockWithWarning)
{
    auto db = parse_fingerprints("Fingerprint X\nZZZ(R=Y)\nWIN(W1=10)\n");
    auto* p = find_personality(db, "X");
    ASSERT_TRUE(p);
    EXPECT_EQ(p->text("WIN", "W1"), std::optional<std::string>("10"));
    EXPECT_FALSE(p->tests.count("ZZZ"));
    ASSERT_EQ(p->warnings.size(), 1u);
}

TEST(Fingerprint, RejectsMalformedLines)
{
    EXPECT_THROW(parse_fingerprints("Fingerprint X\nWIN(W1)\n"), FingerprintError);
    EXPECT_THROW(parse_fingerprints("Fingerprint X\nWIN W1=10\n"), FingerprintError);
    EXPECT_THROW(parse_fingerprint("# nothing\n"), FingerprintError);
}

TEST(Responder, SynAckCarriesPersonality)
{
    auto r = plc_responder();
    auto a = r.respond({net::Transport::tcp, 502, net::tcp::SYN});
    ASSERT_EQ(a.kind, ProbeResponse::Kind::synack);
    EXPECT_EQ(a.window, 0x2000);
    EXPECT_FALSE(a.df);
    auto opts = parse_tcp_options(a.options);
    ASSERT_EQ(opts.size(), 3u);
    EXPECT_EQ(opts[0], (TcpOption{TcpOption::Kind::mss, 0x200}));
    EXPECT_EQ(opts[1].kind, TcpOption::Kind::nop);
    EXPECT_EQ(opts[2], (TcpOption{TcpOption::Kind::wscale, 0}));
}

TEST(Responder, FilteredDefaultsStaySilent)
{
    auto r = plc_responder();
    EXPECT_EQ(r.respond({net::Transport::tcp, 8080, net::tcp::SYN}).kind, ProbeResponse::Kind::none);
    EXPECT_EQ(r.respond({net::Transport::udp, 53}).kind, ProbeResponse::Kind::none);
    EXPECT_EQ(r.respond({net::Transport::icmp, 0}).kind, ProbeResponse::Kind::icmp_reply);
}

TEST(Responder, OpenPortProbeClasses)
{
    auto r = plc_responder();
    EXPECT_EQ(r.respond({net::Transport::tcp, 111, 0}).kind, ProbeResponse::Kind::none); // T2 R=N
    auto t4 = r.respond({net::Transport::tcp, 111, net::tcp::ACK});
    EXPECT_EQ(t4.kind, ProbeResponse::Kind::reset);
}

TEST(Responder, DropRateIsBernoulli)
{
    auto cfg = parse_honeyd_config("create x\nset x default tcp action open\nset x droprate in 20\nbind 10.0.0.9 x\n");
    Responder r(cfg.profiles.at("x"), std::nullopt, 99);
    const int n = 10000;
    int dropped = 0;
    for (int i = 0; i < n; ++i) dropped += r.respond({net::Transport::tcp, 80, net::tcp::SYN}).dropped;
    double mean = n * 0.2, sd = std::sqrt(n * 0.2 * 0.8);
    EXPECT_LE(std::abs(dropped - mean), 3 * sd);
    EXPECT_EQ(r.dropped(), std::uint64_t(dropped));
}
