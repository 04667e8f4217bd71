#pragma once

// Puts a honeypot profile on the simulated network: one host per bound
// address, probe answers from the Responder, and per-port services (silent
// open ports, script handlers, byte-forwarding proxies).

#include <chrono>
#include <map>
#include <memory>
#include <string>

#include "scada/honeypot/responder.hpp"
#include "scada/sim/network.hpp"
#include "scada/util/process.hpp"

namespace scada::honeypot {

struct ServiceSettings {
    std::string script_dir;                  // working directory for scripts
    std::map<std::string, net::Ipv4> hostmap; // proxy host names, e.g. 127.0.0.1 -> the honeypot's host
    std::chrono::milliseconds script_first{2000};
    std::chrono::milliseconds script_quiet{150};
    sim::Duration script_latency = std::chrono::milliseconds(1);
    sim::Duration connect_timeout = std::chrono::seconds(1);
};

/// Replaces $ipsrc $sport $ipdst $dport in each word.
inline std::vector<std::string> script_argv(const std::string& command, const net::Endpoint& src, const net::Endpoint& dst)
{
    auto words = util::split_command(command);
    for (auto& w : words) {
        auto sub = [&](const std::string& key, const std::string& v) {
            for (auto at = w.find(key); at != std::string::npos; at = w.find(key, at + v.size())) w.replace(at, key.size(), v);
        };
        sub("$ipsrc", src.ip.str());
        sub("$sport", std::to_string(src.port));
        sub("$ipdst", dst.ip.str());
        sub("$dport", std::to_string(dst.port));
    }
    return words;
}

struct NodeStats {
    std::uint64_t probes = 0;
    std::uint64_t sessions = 0;
    std::uint64_t scripts_started = 0;
    std::uint64_t scripts_killed = 0;
    std::uint64_t script_failures = 0;
    std::uint64_t proxied = 0;
    std::uint64_t proxy_failures = 0;
};

class SimHoneypot {
public:
    SimHoneypot(sim::Network& net, HoneyNode node, std::optional<Personality> personality, std::uint64_t seed,
                ServiceSettings settings)
        : net_(net), responder_(std::move(node), std::move(personality), seed), settings_(std::move(settings))
    {
        const auto& n = responder_.node();
        for (auto ip : n.addresses) {
            auto& h = net_.add_host(ip, "honeypot:" + n.profile);
            h.ttl = responder_.shape("T1").ttl;
            h.responder = [this](const net::PacketRecord& p) { return answer(p); };
            for (auto& [key, action] : n.ports) {
                if (key.first != net::Transport::tcp || !action.answers()) continue;
                net_.listen(ip, key.second, listener_for(action));
            }
        }
    }

    SimHoneypot(const SimHoneypot&) = delete;
    SimHoneypot& operator=(const SimHoneypot&) = delete;

    Responder& responder() { return responder_; }
    const NodeStats& stats() const { return stats_; }
    std::size_t live_scripts() const { return scripts_.size(); }

private:
    struct ProxySession {
        sim::Stream backend;
        Bytes pending;
        bool ready = false;
        bool client_gone = false;
    };

    sim::Reply answer(const net::PacketRecord& p)
    {
        ++stats_.probes;
        Probe probe;
        probe.transport = p.transport;
        probe.dst_port = p.dst.port;
        probe.tcp_flags = p.flags;
        probe.icmp_type = p.icmp_type;
        probe.df = p.df;
        auto r = responder_.respond(probe);

        sim::Reply out;
        out.ttl = r.ttl;
        out.df = r.df;
        switch (r.kind) {
        case ProbeResponse::Kind::none: break;
        case ProbeResponse::Kind::synack:
            out.kind = sim::Reply::Kind::synack;
            out.window = r.window;
            out.tcp_options = r.options;
            break;
        case ProbeResponse::Kind::reset:
            if (p.transport == net::Transport::tcp) {
                out.kind = sim::Reply::Kind::rst;
            } else {
                out.kind = sim::Reply::Kind::icmp;
                out.icmp_type = net::icmp::unreachable;
                out.icmp_code = net::icmp::port_unreachable;
            }
            break;
        case ProbeResponse::Kind::tcp: break; // odd-flag replies are not modelled on the wire
        case ProbeResponse::Kind::icmp_reply:
            out.kind = sim::Reply::Kind::icmp;
            out.icmp_type = net::icmp::echo_reply;
            break;
        case ProbeResponse::Kind::udp_payload:
            out.kind = sim::Reply::Kind::udp;
            if (r.service && r.service->kind == PortAction::Kind::script)
                out.payload = run_datagram_script(r.service->command, p);
            break;
        }
        return out;
    }

    Bytes run_datagram_script(const std::string& command, const net::PacketRecord& p)
    {
        try {
            util::ChildProcess child(script_argv(command, p.src, p.dst), settings_.script_dir);
            ++stats_.scripts_started;
            child.write(p.payload);
            child.close_stdin();
            auto out = child.read_burst(settings_.script_first, settings_.script_quiet);
            ++stats_.scripts_killed;
            return out;
        } catch (const std::exception&) {
            ++stats_.script_failures;
            return {};
        }
    }

    sim::Listener listener_for(const PortAction& action)
    {
        sim::Listener l;
        switch (action.kind) {
        case PortAction::Kind::script: {
            std::string cmd = action.command;
            l.on_open = [this, cmd](const sim::ConnPtr& c) { open_script(c, cmd); };
            l.on_data = [this](const sim::ConnPtr& c, Bytes d) { feed_script(c, std::move(d)); };
            l.on_close = [this](const sim::ConnPtr& c) { end_script(c); };
            break;
        }
        case PortAction::Kind::proxy: {
            std::string host = action.proxy_host;
            std::uint16_t port = action.proxy_port;
            l.on_open = [this, host, port](const sim::ConnPtr& c) { open_proxy(c, host, port); };
            l.on_data = [this](const sim::ConnPtr& c, Bytes d) { feed_proxy(c, std::move(d)); };
            l.on_close = [this](const sim::ConnPtr& c) { end_proxy(c); };
            break;
        }
        default:
            l.on_open = [this](const sim::ConnPtr&) { ++stats_.sessions; };
            break;
        }
        return l;
    }

    // scripts

    void open_script(const sim::ConnPtr& c, const std::string& cmd)
    {
        ++stats_.sessions;
        std::unique_ptr<util::ChildProcess> child;
        try {
            child = std::make_unique<util::ChildProcess>(script_argv(cmd, c->client(), c->server()), settings_.script_dir);
        } catch (const std::exception&) {
            ++stats_.script_failures;
            c->server_abort();
            return;
        }
        ++stats_.scripts_started;
        auto banner = child->read_burst(settings_.script_first, settings_.script_quiet);
        bool ended = child->eof();
        scripts_[c.get()] = std::move(child);
        deliver_script_output(c, std::move(banner), ended);
    }

    void feed_script(const sim::ConnPtr& c, Bytes d)
    {
        auto it = scripts_.find(c.get());
        if (it == scripts_.end()) return;
        it->second->write(d);
        auto reply = it->second->read_burst(settings_.script_first, settings_.script_quiet);
        deliver_script_output(c, std::move(reply), it->second->eof());
    }

    void deliver_script_output(const sim::ConnPtr& c, Bytes out, bool ended)
    {
        net_.scheduler().after(settings_.script_latency, [this, c, out = std::move(out), ended]() mutable {
            if (!out.empty()) c->server_send(std::move(out));
            if (ended) {
                c->server_close();
                end_script(c);
            }
        });
    }

    void end_script(const sim::ConnPtr& c)
    {
        auto it = scripts_.find(c.get());
        if (it == scripts_.end()) return;
        it->second->kill();
        ++stats_.scripts_killed;
        scripts_.erase(it);
    }

    // proxies

    net::Ipv4 resolve(const std::string& host) const
    {
        auto it = settings_.hostmap.find(host);
        if (it != settings_.hostmap.end()) return it->second;
        if (auto ip = net::Ipv4::parse(host)) return *ip;
        throw std::invalid_argument("proxy host '" + host + "' does not resolve");
    }

    void open_proxy(const sim::ConnPtr& c, const std::string& host, std::uint16_t port)
    {
        ++stats_.sessions;
        auto s = std::make_shared<ProxySession>();
        proxies_[c.get()] = s;
        sim::spawn(run_proxy(c, s, host, port));
    }

    sim::Task<void> run_proxy(sim::ConnPtr c, std::shared_ptr<ProxySession> s, std::string host, std::uint16_t port)
    {
        net::Ipv4 target;
        try {
            target = resolve(host);
        } catch (const std::exception&) {
            ++stats_.proxy_failures;
            c->server_abort();
            proxies_.erase(c.get());
            co_return;
        }
        auto r = co_await net_.connect(c->server().ip, {target, port}, settings_.connect_timeout);
        if (!r.ok() || s->client_gone) {
            if (!r.ok()) ++stats_.proxy_failures;
            c->server_abort();
            proxies_.erase(c.get());
            co_return;
        }
        ++stats_.proxied;
        s->backend = std::move(r.stream);
        s->ready = true;
        if (!s->pending.empty()) s->backend.send(std::exchange(s->pending, {}));
        while (true) {
            auto m = co_await s->backend.recv(std::nullopt);
            if (m.status != sim::Mailbox<Bytes>::Status::item) break;
            c->server_send(std::move(*m.item));
        }
        // backend finished: pass the close on
        c->server_close();
        proxies_.erase(c.get());
    }

    void feed_proxy(const sim::ConnPtr& c, Bytes d)
    {
        auto it = proxies_.find(c.get());
        if (it == proxies_.end()) return;
        auto& s = *it->second;
        if (s.ready) s.backend.send(std::move(d));
        else s.pending.insert(s.pending.end(), d.begin(), d.end());
    }

    void end_proxy(const sim::ConnPtr& c)
    {
        auto it = proxies_.find(c.get());
        if (it == proxies_.end()) return;
        auto s = it->second;
        s->client_gone = true;
        if (s->ready) s->backend.close();
    }

    sim::Network& net_;
    Responder responder_;
    ServiceSettings settings_;
    NodeStats stats_;
    std::map<const sim::Connection*, std::unique_ptr<util::ChildProcess>> scripts_;
    std::map<const sim::Connection*, std::shared_ptr<ProxySession>> proxies_;
};

} // namespace scada::honeypot
