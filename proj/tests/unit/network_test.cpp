// Scheduler, simulated TCP, Modbus server/slave, master poller.

#include <gtest/gtest.h>

#include "scada/master_poller.hpp"
#include "scada/modbus/client.hpp"
#include "scada/modbus_server.hpp"
#include "scada/sim/network.hpp"
#include "scada/slave_node.hpp"

using namespace scada;
using namespace std::chrono_literals;

namespace {

/// Drives the scheduler until `t` completes.
template <class T>
T drive(sim::Scheduler& s, sim::Task<T> t)
{
    std::optional<T> out;
    auto wrap = [&](sim::Task<T> inner) -> sim::Task<void> {
        auto v = co_await std::move(inner);
        out.emplace(std::move(v));
    };
    sim::spawn(wrap(std::move(t)));
    while (!out && s.run_one()) {}
    if (!out) throw std::runtime_error("task never finished");
    return std::move(*out);
}

Bytes adu(std::uint16_t tid, modbus::Pdu p) { return modbus::encode_adu(modbus::make_adu(tid, 1, std::move(p))); }

} // namespace

TEST(Scheduler, OrdersByTimeThenSubmission)
{
    sim::Scheduler s;
    std::string order;
    s.after(2ms, [&] { order += 'c'; });
    s.after(1ms, [&] { order += 'a'; });
    s.after(1ms, [&] { order += 'b'; });
    s.run_all();
    EXPECT_EQ(order, "abc");
    EXPECT_EQ(s.now(), sim::Time(2ms));
    EXPECT_EQ(s.executed(), 3u);
}

TEST(Scheduler, RunUntilParksClock)
{
    sim::Scheduler s;
    bool fired = false;
    s.after(10ms, [&] { fired = true; });
    s.run_until(sim::Time(5ms));
    EXPECT_FALSE(fired);
    EXPECT_EQ(s.now(), sim::Time(5ms));
    EXPECT_EQ(s.next_event(), std::optional<sim::Time>(10ms));
    s.run_until(sim::Time(10ms));
    EXPECT_TRUE(fired);
}

TEST(Scheduler, SleepResumesCoroutine)
{
    sim::Scheduler s;
    auto body = [&]() -> sim::Task<int> {
        co_await s.sleep(250ms);
        co_return 7;
    };
    EXPECT_EQ(drive(s, body()), 7);
    EXPECT_EQ(s.now(), sim::Time(250ms));
}

TEST(Mailbox, TimeoutAndClose)
{
    sim::Scheduler s;
    sim::Mailbox<int> box(s);
    auto wait = [&]() -> sim::Task<int> {
        auto r = co_await box.recv(100ms);
        co_return r.status == sim::Mailbox<int>::Status::timeout ? -1 : *r.item;
    };
    EXPECT_EQ(drive(s, wait()), -1);
    box.push(4);
    EXPECT_EQ(drive(s, wait()), 4);
}

struct SlaveFixture : ::testing::Test {
    sim::Scheduler sched;
    sim::Network net{sched};
    DataTable table;
    slave::SlaveNode node{table};
    net::Ipv4 server_ip = net::Ipv4::must("10.0.0.4");
    net::Ipv4 client_ip = net::Ipv4::must("10.0.0.3");
    std::unique_ptr<ModbusServer> server;

    void SetUp() override
    {
        net.add_host(server_ip, "slave");
        net.add_host(client_ip, "master");
        server = std::make_unique<ModbusServer>(net, server_ip, 502, node);
    }

    /// Sends each frame on one connection and collects the replies.
    std::vector<std::optional<Bytes>> exchange(std::vector<Bytes> frames)
    {
        auto body = [&]() -> sim::Task<std::vector<std::optional<Bytes>>> {
            std::vector<std::optional<Bytes>> out;
            auto c = co_await net.connect(client_ip, {server_ip, 502}, 1s);
            if (!c.ok()) throw std::runtime_error("connect failed");
            for (auto& f : frames) {
                c.stream.send(f);
                auto m = co_await c.stream.recv(200ms);
                if (m.status == sim::Mailbox<Bytes>::Status::item) out.push_back(*m.item);
                else out.push_back(std::nullopt);
            }
            c.stream.close();
            co_return out;
        };
        return drive(sched, body());
    }
};

TEST_F(SlaveFixture, ReadHoldingOverTcp)
{
    table.set_holding(42210, 50);
    auto r = exchange({adu(1, modbus::read_request(modbus::fc::read_holding_registers, 42210, 1))});
    ASSERT_TRUE(r[0]);
    EXPECT_EQ(to_hex(*r[0]), "00 01 00 00 00 05 01 03 02 00 32");
}

TEST_F(SlaveFixture, WriteAcceptsAnySixteenBitValue)
{
    auto r = exchange({adu(2, modbus::write_registers_request(32210, {200}))});
    ASSERT_TRUE(r[0]);
    EXPECT_EQ(table.holding(32210), 200);
    EXPECT_EQ(to_hex(*r[0]), "00 02 00 00 00 06 01 10 7D D2 00 01");
}

TEST_F(SlaveFixture, ExceptionsForBadRequests)
{
    auto r = exchange({adu(3, modbus::Pdu{0x07, {}}),
                       adu(4, modbus::read_request(modbus::fc::read_holding_registers, 65535, 2)),
                       adu(5, modbus::read_request(modbus::fc::read_holding_registers, 0, 126))});
    EXPECT_EQ(to_hex(*r[0]), "00 03 00 00 00 03 01 87 01");
    EXPECT_EQ(to_hex(*r[1]), "00 04 00 00 00 03 01 83 02");
    EXPECT_EQ(to_hex(*r[2]), "00 05 00 00 00 03 01 83 03");
}

TEST_F(SlaveFixture, ListenOnlySilencesUntilRestart)
{
    auto read = adu(6, modbus::read_request(modbus::fc::read_holding_registers, 0, 1));
    auto r = exchange({from_hex("00 07 00 00 00 06 01 08 00 04 00 00"), read,
                       from_hex("00 08 00 00 00 06 01 08 00 01 00 00"), read});
    EXPECT_FALSE(r[0]);
    EXPECT_FALSE(r[1]);
    EXPECT_FALSE(r[2]);
    EXPECT_TRUE(r[3]);
    EXPECT_FALSE(node.state().listen_only);
}

TEST_F(SlaveFixture, LengthMismatchIsDropped)
{
    auto r = exchange({from_hex("00 01 00 00 00 08 01 10 7D D2 00 01 02 FF FB")});
    EXPECT_FALSE(r[0]);
    EXPECT_EQ(table.holding(32210), 0);
    EXPECT_EQ(server->stats().dropped, 1u);
}

TEST_F(SlaveFixture, RtuFrameWithGoodCrcIsServed)
{
    auto good = modbus::encode_rtu(1, modbus::write_registers_request(32210, {3}));
    auto bad = modbus::encode_rtu(1, modbus::write_registers_request(32210, {9}), true);
    auto r = exchange({good, bad});
    EXPECT_TRUE(r[0]);
    EXPECT_FALSE(r[1]);
    EXPECT_EQ(table.holding(32210), 3);
}

TEST_F(SlaveFixture, BackToBackFramesAreSplit)
{
    auto two = adu(1, modbus::write_register_request(100, 1));
    auto second = adu(2, modbus::write_register_request(101, 2));
    two.insert(two.end(), second.begin(), second.end());
    auto out = node.handle_segment(two);
    EXPECT_EQ(out.requests, 2u);
    EXPECT_EQ(out.replies.size(), 2u);
    EXPECT_EQ(table.holding(101), 2);
}

TEST_F(SlaveFixture, ConnectToClosedPortIsRefused)
{
    auto body = [&]() -> sim::Task<bool> {
        auto c = co_await net.connect(client_ip, {server_ip, 503}, 1s);
        co_return c.status == sim::ConnectResult::Status::refused;
    };
    EXPECT_TRUE(drive(sched, body()));
}

TEST(SlaveNode, BusyReplyEchoesTransaction)
{
    auto r = slave::SlaveNode::busy_reply(from_hex("12 34 00 00 00 06 01 03 00 00 00 01"));
    ASSERT_TRUE(r);
    EXPECT_EQ(to_hex(*r), "12 34 00 00 00 03 01 83 06");
    EXPECT_FALSE(slave::SlaveNode::busy_reply(from_hex("12 34 00 00 00 09 01 03 00 00 00 01")));
}

TEST(ClientConfig, ParsesPollPlan)
{
    auto cfgs = master::parse_client_config("[P]\naction = poll\ntype = tcpclient\nhost = 10.0.0.4\nport = 502\n"
                                            "repeattime = 100\nretrytime = 5000\ncmdtime = 100\nfault_coil = 1340\n"
                                            "&r1 = function=3, uid=1, memaddr=42210, qty=2, remoteaddr=42210\n");
    ASSERT_EQ(cfgs.size(), 1u);
    EXPECT_EQ(cfgs[0].fault_coil, 1340);
    ASSERT_EQ(cfgs[0].commands.size(), 1u);
    EXPECT_EQ(cfgs[0].commands[0].qty, 2);
    EXPECT_THROW(master::parse_client_config("[P]\naction = poll\ntype = tcpclient\nhost = 10.0.0.4\n"
                                             "&r1 = function=99, uid=1, memaddr=1, qty=1, remoteaddr=1\n"),
                 std::exception);
}

struct PollerFixture : SlaveFixture {
    DataTable local;
    std::unique_ptr<master::MasterPoller> poller;

    void make(net::Ipv4 target)
    {
        master::ClientConfig c;
        c.name = "test";
        c.host = target;
        c.fault_coil = 1340;
        c.fault_inp = 1340;
        c.fault_holdingreg = 1340;
        c.fault_inpreg = 1340;
        c.fault_reset = 65283;
        c.commands.push_back({"lvl", 3, 1, 42210, 2, 42210});
        c.commands.push_back({"spd", 16, 1, 32210, 1, 32210});
        poller = std::make_unique<master::MasterPoller>(net, client_ip, local, c);
        poller->start();
    }

    void rounds(int n)
    {
        for (int i = 0; i < n; ++i) {
            poller->trigger();
            sched.run_for(100ms);
        }
    }
};

TEST_F(PollerFixture, CopiesLevelsAndPushesWrites)
{
    table.set_holding(42210, 61);
    table.set_holding(42211, 39);
    make(server_ip);
    rounds(3);
    EXPECT_EQ(local.holding(42210), 61);
    EXPECT_EQ(local.holding(42211), 39);
    poller->send_write(32210, {as_unsigned(-4)});
    rounds(2);
    EXPECT_EQ(table.holding(32210), as_unsigned(-4));
    EXPECT_FALSE(poller->faulted());
    poller->stop();
    sched.run_for(1s);
}

TEST_F(PollerFixture, UnreachableSlaveRaisesFaultCoil)
{
    make(net::Ipv4::must("10.0.0.99"));
    rounds(30);
    EXPECT_TRUE(local.coil(1340));
    EXPECT_TRUE(poller->faulted());
    EXPECT_EQ(local.holding(1340), 1);
    poller->stop();
    sched.run_for(10s);
}
