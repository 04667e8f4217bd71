#pragma once

// Modbus/TCP listener on the simulated network. Segments are served one at a
// time through the host's service queue; once the backlog reaches the busy
// threshold, well-formed requests get a server-busy exception straight away
// and everything else is dropped.

#include "scada/sim/network.hpp"
#include "scada/slave_node.hpp"

namespace scada {

struct ServerSettings {
    sim::Duration service_time = std::chrono::milliseconds(1);
    std::size_t busy_threshold = 64;
};

struct ServerStats {
    std::uint64_t connections = 0;
    std::uint64_t segments = 0;
    std::uint64_t requests = 0;
    std::uint64_t dropped = 0;
    std::uint64_t busy_replies = 0;
    std::uint64_t busy_dropped = 0;
};

class ModbusServer {
public:
    ModbusServer(sim::Network& net, net::Ipv4 ip, std::uint16_t port, slave::SlaveNode& node, ServerSettings s = {})
        : node_(node), queue_(net.scheduler(), s.service_time, s.busy_threshold)
    {
        sim::Listener l;
        l.on_open = [this](const sim::ConnPtr&) { ++stats_.connections; };
        l.on_data = [this](const sim::ConnPtr& c, Bytes seg) { on_segment(c, std::move(seg)); };
        net.listen(ip, port, std::move(l));
    }

    ModbusServer(const ModbusServer&) = delete;
    ModbusServer& operator=(const ModbusServer&) = delete;

    const ServerStats& stats() const { return stats_; }
    const sim::ServiceQueue& queue() const { return queue_; }

private:
    void on_segment(const sim::ConnPtr& c, Bytes seg)
    {
        ++stats_.segments;
        if (queue_.busy()) {
            if (auto r = slave::SlaveNode::busy_reply(seg)) {
                ++stats_.busy_replies;
                c->server_send(std::move(*r));
            } else {
                ++stats_.busy_dropped;
            }
            return;
        }
        queue_.submit([this, c, seg = std::move(seg)] {
            if (!c->open()) return;
            auto out = node_.handle_segment(seg);
            stats_.requests += out.requests;
            stats_.dropped += out.dropped;
            for (auto& r : out.replies) c->server_send(std::move(r));
            if (out.close) c->server_close();
        });
    }

    slave::SlaveNode& node_;
    sim::ServiceQueue queue_;
    ServerStats stats_;
};

} // namespace scada
