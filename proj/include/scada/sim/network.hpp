#pragma once

// Packet-level network on the simulated clock. Hosts exchange PacketRecords
// with a fixed hop latency; a gateway hook sees every packet first and may
// drop it. TCP is modelled just far enough for captures and signatures to
// look right: three-way handshake, sequence numbers, data segments, FIN and
// RST. Raw probes (SYN, UDP, ICMP) bypass the connection layer.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <tuple>

#include "scada/net/packet.hpp"
#include "scada/sim/scheduler.hpp"
#include "scada/sim/task.hpp"

namespace scada::sim {

using net::Endpoint;
using net::Ipv4;
using net::PacketRecord;
using net::Transport;

/// How a host answers a SYN, a UDP datagram, an ICMP message, or a stray TCP
/// segment that belongs to no connection.
struct Reply {
    enum class Kind { none, synack, rst, udp, icmp };
    Kind kind = Kind::none;
    std::uint16_t window = 64240;
    Bytes tcp_options;
    std::uint8_t ttl = 64;
    bool df = true;
    std::uint8_t icmp_type = 0;
    std::uint8_t icmp_code = 0;
    Bytes payload;
};

/// Linux-like SYN-ACK: MSS 1460, SACK permitted, NOP, window scale 7.
inline Reply linux_synack()
{
    Reply r;
    r.kind = Reply::Kind::synack;
    r.window = 64240;
    r.tcp_options = {0x02, 0x04, 0x05, 0xB4, 0x04, 0x02, 0x01, 0x03, 0x03, 0x07};
    return r;
}

/// IPv4 header + first 8 bytes of the offending datagram, as quoted in ICMP
/// errors.
inline Bytes quote_datagram(const PacketRecord& p)
{
    Bytes q{0x45, 0x00};
    std::size_t l4 = p.transport == Transport::udp ? 8 + p.payload.size() : 20 + p.payload.size();
    put_be16(q, static_cast<std::uint16_t>(20 + l4));
    put_be16(q, 0);
    put_be16(q, p.df ? 0x4000 : 0);
    q.push_back(p.ttl);
    q.push_back(static_cast<std::uint8_t>(p.transport));
    put_be16(q, 0);
    put_be32(q, p.src.ip.value());
    put_be32(q, p.dst.ip.value());
    put_be16(q, p.src.port);
    put_be16(q, p.dst.port);
    put_be16(q, static_cast<std::uint16_t>(8 + p.payload.size()));
    put_be16(q, 0);
    return q;
}

class Network;
class Connection;
using ConnPtr = std::shared_ptr<Connection>;

/// Server-side callbacks for one listening port.
struct Listener {
    std::function<void(const ConnPtr&)> on_open;
    std::function<void(const ConnPtr&, Bytes)> on_data;
    std::function<void(const ConnPtr&)> on_close; // peer closed or reset
};

class Connection {
public:
    enum class State { syn_sent, established, closed };

    Connection(Network& net, Endpoint client, Endpoint server)
        : net_(net), client_(client), server_(server), rx_(sched_of(net)), handshake_(sched_of(net)) {}

    const Endpoint& client() const { return client_; }
    const Endpoint& server() const { return server_; }
    State state() const { return state_; }
    bool open() const { return state_ == State::established; }
    bool was_reset() const { return reset_; }

    // client end
    void client_send(Bytes data) { send(true, std::move(data)); }
    auto client_recv(std::optional<Duration> timeout) { return rx_.recv(timeout); }
    void client_close() { close(true); }
    void client_abort() { abort(true); }

    // server end
    void server_send(Bytes data) { send(false, std::move(data)); }
    void server_close() { close(false); }
    void server_abort() { abort(false); }

private:
    friend class Network;
    static Scheduler& sched_of(Network& n);

    void send(bool from_client, Bytes data);
    void close(bool from_client);
    void abort(bool from_client);

    Network& net_;
    Endpoint client_, server_;
    State state_ = State::syn_sent;
    bool reset_ = false;
    bool accepted_ = false; // the server end has seen the handshake complete
    bool client_fin_ = false, server_fin_ = false;
    std::uint32_t client_seq_ = 0, server_seq_ = 0; // next sequence numbers
    Listener listener_;
    Mailbox<Bytes> rx_;       // data for the client end
    Mailbox<bool> handshake_; // true: established, false: refused
};

/// Client-side handle; closes the connection when destroyed.
class Stream {
public:
    Stream() = default;
    explicit Stream(ConnPtr c) : c_(std::move(c)) {}
    Stream(Stream&&) noexcept = default;
    Stream& operator=(Stream&& o) noexcept
    {
        if (this != &o) {
            close();
            c_ = std::move(o.c_);
        }
        return *this;
    }
    ~Stream() { close(); }

    bool open() const { return c_ && c_->open(); }
    void send(Bytes data)
    {
        if (c_) c_->client_send(std::move(data));
    }
    auto recv(std::optional<Duration> timeout) { return c_->client_recv(timeout); }
    void close()
    {
        if (c_ && c_->open()) c_->client_close();
    }
    void abort()
    {
        if (c_ && c_->open()) c_->client_abort();
    }
    Endpoint local() const { return c_->client(); }
    Endpoint remote() const { return c_->server(); }

private:
    ConnPtr c_;
};

struct ConnectResult {
    enum class Status { ok, refused, timeout };
    Status status = Status::timeout;
    Stream stream;
    bool ok() const { return status == Status::ok; }
};

/// Serial request processing on one host: each job costs a fixed service
/// time and jobs run in submission order.
class ServiceQueue {
public:
    ServiceQueue(Scheduler& s, Duration cost, std::size_t busy_threshold)
        : sched_(s), cost_(cost), threshold_(busy_threshold) {}

    std::size_t in_flight() const { return in_flight_; }
    bool busy() const { return in_flight_ >= threshold_; }
    std::size_t threshold() const { return threshold_; }

    void submit(std::function<void()> job)
    {
        ++in_flight_;
        Time start = std::max(sched_.now(), free_at_);
        free_at_ = start + cost_;
        sched_.at(free_at_, [this, job = std::move(job)] {
            --in_flight_;
            job();
        });
    }

private:
    Scheduler& sched_;
    Duration cost_;
    std::size_t threshold_;
    std::size_t in_flight_ = 0;
    Time free_at_{0};
};

/// Gateway decision for one packet.
struct Passage {
    bool deliver = true;
};

class Network {
public:
    struct Host {
        Ipv4 ip;
        std::string name;
        std::map<std::uint16_t, Listener> tcp;
        std::function<Reply(const PacketRecord&)> responder; // overrides default replies
        std::uint16_t next_port = 40000;
        std::uint8_t ttl = 64;
    };

    Network(Scheduler& s, std::uint64_t seed = 1, Duration hop = std::chrono::microseconds(250))
        : sched_(s), hop_(hop), rng_(seed) {}

    Scheduler& scheduler() { return sched_; }
    Duration hop_latency() const { return hop_; }

    Host& add_host(Ipv4 ip, std::string name)
    {
        auto [it, fresh] = hosts_.try_emplace(ip);
        if (!fresh) throw std::invalid_argument("address " + ip.str() + " bound twice");
        it->second.ip = ip;
        it->second.name = std::move(name);
        return it->second;
    }
    Host* host(Ipv4 ip)
    {
        auto it = hosts_.find(ip);
        return it == hosts_.end() ? nullptr : &it->second;
    }
    bool has_host(Ipv4 ip) const { return hosts_.count(ip) != 0; }

    void listen(Ipv4 ip, std::uint16_t port, Listener l)
    {
        auto* h = host(ip);
        if (!h) throw std::invalid_argument("no host " + ip.str());
        if (!h->tcp.emplace(port, std::move(l)).second)
            throw std::invalid_argument(ip.str() + ":" + std::to_string(port) + " already listening");
    }

    /// Called for every packet before delivery.
    void set_gateway(std::function<Passage(PacketRecord&)> g) { gateway_ = std::move(g); }

    std::uint16_t ephemeral_port(Ipv4 ip)
    {
        auto* h = host(ip);
        if (!h) throw std::invalid_argument("no host " + ip.str());
        for (int tries = 0; tries < 25536; ++tries) {
            std::uint16_t p = h->next_port;
            h->next_port = p == 65535 ? 40000 : static_cast<std::uint16_t>(p + 1);
            if (!h->tcp.count(p) && !ports_in_use_.count({ip, p})) return p;
        }
        throw std::runtime_error("ephemeral ports exhausted on " + ip.str());
    }

    /// Active open from `from` to `to`.
    Task<ConnectResult> connect(Ipv4 from, Endpoint to, Duration timeout)
    {
        Endpoint local{from, ephemeral_port(from)};
        auto c = std::make_shared<Connection>(*this, local, to);
        c->client_seq_ = isn();
        conns_[{local, to}] = c;
        ports_in_use_.insert({local.ip, local.port});

        PacketRecord syn = base(local, to, Transport::tcp);
        syn.flags = net::tcp::SYN;
        syn.seq = c->client_seq_++;
        syn.tcp_options = linux_synack().tcp_options;
        syn.new_connection = true;
        emit(std::move(syn));

        auto r = co_await c->handshake_.recv(timeout);
        ConnectResult out;
        if (r.status == Mailbox<bool>::Status::item && *r.item) {
            out.status = ConnectResult::Status::ok;
            out.stream = Stream(c);
        } else {
            out.status = r.status == Mailbox<bool>::Status::item ? ConnectResult::Status::refused
                                                                  : ConnectResult::Status::timeout;
            c->state_ = Connection::State::closed;
            forget(c);
        }
        co_return out;
    }

    /// Sends one raw packet from `p.src` and waits for the first reply aimed
    /// back at that endpoint. A SYN-ACK answering a SYN probe is reset, as a
    /// raw-socket scanner's kernel would do.
    Task<std::optional<PacketRecord>> probe(PacketRecord p, Duration timeout)
    {
        ProbeKey key{p.src.ip, p.src.port, p.transport == Transport::icmp ? Transport::icmp : p.transport};
        auto box = std::make_shared<Mailbox<PacketRecord>>(sched_);
        probes_[key] = box;
        if (p.transport != Transport::icmp) ports_in_use_.insert({p.src.ip, p.src.port});
        p.new_connection = true;
        emit(p);
        auto r = co_await box->recv(timeout);
        probes_.erase(key);
        if (p.transport != Transport::icmp) ports_in_use_.erase({p.src.ip, p.src.port});
        if (r.status != Mailbox<PacketRecord>::Status::item) co_return std::nullopt;
        auto reply = std::move(*r.item);
        if (p.transport == Transport::tcp && (p.flags & net::tcp::SYN) && reply.transport == Transport::tcp
            && (reply.flags & (net::tcp::SYN | net::tcp::ACK)) == (net::tcp::SYN | net::tcp::ACK)) {
            PacketRecord rst = base(p.src, p.dst, Transport::tcp);
            rst.flags = net::tcp::RST;
            rst.seq = reply.ack;
            rst.window = 0;
            emit(std::move(rst));
        }
        co_return reply;
    }

    /// Tears a flow down from the middle (reset_both responses): both ends
    /// receive a RST.
    void reset_flow(const PacketRecord& p)
    {
        auto c = find(p.src, p.dst);
        if (!c) c = find(p.dst, p.src);
        if (!c || c->state_ == Connection::State::closed) return;
        PacketRecord to_client = base(c->server_, c->client_, Transport::tcp);
        to_client.flags = net::tcp::RST;
        to_client.seq = c->server_seq_;
        PacketRecord to_server = base(c->client_, c->server_, Transport::tcp);
        to_server.flags = net::tcp::RST;
        to_server.seq = c->client_seq_;
        to_server.from_client = true;
        sched_.after(hop_, [this, a = std::move(to_client), b = std::move(to_server)]() mutable {
            deliver(std::move(a));
            deliver(std::move(b));
        });
    }

    std::uint64_t packets() const { return packets_; }
    std::size_t open_connections() const { return conns_.size(); }

    /// Builds a packet skeleton with TTL from the sending host.
    PacketRecord base(Endpoint src, Endpoint dst, Transport t)
    {
        PacketRecord p;
        p.src = src;
        p.dst = dst;
        p.transport = t;
        if (auto* h = host(src.ip)) p.ttl = h->ttl;
        return p;
    }

    /// Stamps, passes through the gateway, and schedules delivery.
    void emit(PacketRecord p)
    {
        p.ts = sched_.now();
        ++packets_;
        if (gateway_ && !gateway_(p).deliver) return;
        sched_.after(hop_, [this, p = std::move(p)]() mutable { deliver(std::move(p)); });
    }

private:
    friend class Connection;
    using ProbeKey = std::tuple<Ipv4, std::uint16_t, Transport>;
    using FlowKey = std::pair<Endpoint, Endpoint>; // client, server

    std::uint32_t isn() { return static_cast<std::uint32_t>(rng_()); }

    ConnPtr find(const Endpoint& client, const Endpoint& server)
    {
        auto it = conns_.find({client, server});
        return it == conns_.end() ? nullptr : it->second;
    }

    void forget(const ConnPtr& c)
    {
        conns_.erase({c->client_, c->server_});
        ports_in_use_.erase({c->client_.ip, c->client_.port});
    }

    std::optional<ProbeKey> probe_key(const PacketRecord& p) const
    {
        if (p.transport == Transport::icmp) {
            if (p.icmp_type == net::icmp::unreachable && p.payload.size() >= 28)
                return ProbeKey{p.dst.ip, read_be16(p.payload, 20), static_cast<Transport>(p.payload[9])};
            return ProbeKey{p.dst.ip, p.src.port, Transport::icmp};
        }
        return ProbeKey{p.dst.ip, p.dst.port, p.transport};
    }

    void reply_to(const PacketRecord& req, const Reply& r)
    {
        switch (r.kind) {
        case Reply::Kind::none: return;
        case Reply::Kind::synack:
        case Reply::Kind::rst: {
            PacketRecord out = base(req.dst, req.src, Transport::tcp);
            out.ttl = r.ttl;
            out.df = r.df;
            out.window = r.window;
            out.tcp_options = r.tcp_options;
            out.from_client = false;
            if (r.kind == Reply::Kind::synack) {
                out.flags = net::tcp::SYN | net::tcp::ACK;
                out.seq = isn();
                out.ack = req.seq + 1;
                half_open_[{req.src, req.dst}] = out.seq + 1;
            } else {
                out.flags = net::tcp::RST | net::tcp::ACK;
                out.seq = (req.flags & net::tcp::ACK) ? req.ack : 0;
                out.ack = req.seq + (req.flags & net::tcp::SYN ? 1 : 0) + static_cast<std::uint32_t>(req.payload.size());
                out.window = 0;
                out.tcp_options.clear();
            }
            emit(std::move(out));
            return;
        }
        case Reply::Kind::udp: {
            PacketRecord out = base(req.dst, req.src, Transport::udp);
            out.ttl = r.ttl;
            out.df = r.df;
            out.payload = r.payload;
            out.from_client = false;
            emit(std::move(out));
            return;
        }
        case Reply::Kind::icmp: {
            PacketRecord out = base({req.dst.ip, 0}, {req.src.ip, 0}, Transport::icmp);
            out.ttl = r.ttl;
            out.df = r.df;
            out.icmp_type = r.icmp_type;
            out.icmp_code = r.icmp_code;
            out.from_client = false;
            if (req.transport == Transport::icmp) {
                out.src.port = req.src.port; // identifier
                out.dst.port = req.dst.port; // sequence
                out.payload = req.payload;
            } else {
                out.payload = quote_datagram(req);
            }
            emit(std::move(out));
            return;
        }
        }
    }

    Reply default_reply(Host& h, const PacketRecord& p)
    {
        Reply r;
        switch (p.transport) {
        case Transport::tcp:
            if ((p.flags & (net::tcp::SYN | net::tcp::ACK)) == net::tcp::SYN && h.tcp.count(p.dst.port))
                r = linux_synack();
            else if (!(p.flags & net::tcp::RST))
                r.kind = Reply::Kind::rst;
            break;
        case Transport::udp:
            r.kind = Reply::Kind::icmp;
            r.icmp_type = net::icmp::unreachable;
            r.icmp_code = net::icmp::port_unreachable;
            break;
        case Transport::icmp:
            if (p.icmp_type == net::icmp::echo_request) {
                r.kind = Reply::Kind::icmp;
                r.icmp_type = net::icmp::echo_reply;
            }
            break;
        }
        r.ttl = h.ttl;
        return r;
    }

    Reply answer(Host& h, const PacketRecord& p) { return h.responder ? h.responder(p) : default_reply(h, p); }

    void deliver(PacketRecord p)
    {
        if (auto k = probe_key(p)) {
            auto it = probes_.find(*k);
            if (it != probes_.end()) {
                it->second->push(std::move(p));
                return;
            }
        }
        auto* h = host(p.dst.ip);
        if (!h) return;
        if (p.transport == Transport::tcp) {
            deliver_tcp(*h, std::move(p));
            return;
        }
        if (p.transport == Transport::icmp && p.icmp_type != net::icmp::echo_request) return;
        reply_to(p, answer(*h, p));
    }

    void deliver_tcp(Host& h, PacketRecord p)
    {
        using namespace net::tcp;
        // segment for a client end we opened
        if (auto c = find(p.dst, p.src)) {
            on_client_segment(c, p);
            return;
        }
        FlowKey key{p.src, p.dst};
        // segment for a server end; the client registers the flow before its
        // SYN arrives, so the server side only exists once accepted
        auto c = find(p.src, p.dst);
        if (c && c->accepted_) {
            on_server_segment(c, p);
            return;
        }
        if ((p.flags & (SYN | ACK)) == SYN) {
            reply_to(p, answer(h, p));
            return;
        }
        auto ho = half_open_.find(key);
        if (ho != half_open_.end()) {
            if (p.flags & RST) {
                half_open_.erase(ho);
                return;
            }
            if (p.flags & ACK) {
                if (!c) {
                    c = std::make_shared<Connection>(*this, p.src, p.dst);
                    c->state_ = Connection::State::established;
                    c->client_seq_ = p.seq;
                    conns_[key] = c;
                }
                c->server_seq_ = ho->second;
                c->accepted_ = true;
                half_open_.erase(ho);
                auto l = h.tcp.find(p.dst.port);
                if (l != h.tcp.end()) c->listener_ = l->second;
                if (c->listener_.on_open) c->listener_.on_open(c);
                if (!p.payload.empty() || (p.flags & FIN)) on_server_segment(c, p);
                return;
            }
        }
        if (c) return; // the peer never answered this flow
        if (p.flags & RST) return;
        reply_to(p, answer(h, p));
    }

    void on_client_segment(const ConnPtr& c, const PacketRecord& p)
    {
        using namespace net::tcp;
        if (c->state_ == Connection::State::syn_sent) {
            if ((p.flags & (SYN | ACK)) == (SYN | ACK)) {
                c->server_seq_ = p.seq + 1;
                c->state_ = Connection::State::established;
                PacketRecord ack = base(c->client_, c->server_, Transport::tcp);
                ack.flags = ACK;
                ack.seq = c->client_seq_;
                ack.ack = c->server_seq_;
                ack.established = true;
                emit(std::move(ack));
                c->handshake_.push(true);
            } else if (p.flags & RST) {
                c->handshake_.push(false);
            }
            return;
        }
        if (p.flags & RST) {
            c->state_ = Connection::State::closed;
            c->reset_ = true;
            c->rx_.close();
            forget(c);
            return;
        }
        if (!p.payload.empty()) c->rx_.push(p.payload);
        if (p.flags & FIN) peer_fin(c, true);
        else if (c->client_fin_ && c->server_fin_) forget(c);
    }

    void on_server_segment(const ConnPtr& c, const PacketRecord& p)
    {
        using namespace net::tcp;
        if (p.flags & RST) {
            bool was_open = c->state_ != Connection::State::closed;
            c->state_ = Connection::State::closed;
            c->reset_ = true;
            forget(c);
            if (was_open && c->listener_.on_close) c->listener_.on_close(c);
            return;
        }
        if (!p.payload.empty() && c->state_ == Connection::State::established && !c->client_fin_
            && c->listener_.on_data)
            c->listener_.on_data(c, p.payload);
        if (p.flags & FIN) peer_fin(c, false);
        else if (p.payload.empty() && c->client_fin_ && c->server_fin_) forget(c);
    }

    /// The end opposite `receiver_is_client` sent FIN.
    void peer_fin(const ConnPtr& c, bool receiver_is_client)
    {
        using namespace net::tcp;
        bool& peer_fin = receiver_is_client ? c->server_fin_ : c->client_fin_;
        bool& own_fin = receiver_is_client ? c->client_fin_ : c->server_fin_;
        peer_fin = true;
        PacketRecord out = receiver_is_client ? base(c->client_, c->server_, Transport::tcp)
                                              : base(c->server_, c->client_, Transport::tcp);
        out.established = true;
        out.from_client = receiver_is_client;
        std::uint32_t& my_seq = receiver_is_client ? c->client_seq_ : c->server_seq_;
        std::uint32_t& their_seq = receiver_is_client ? c->server_seq_ : c->client_seq_;
        ++their_seq;
        out.ack = their_seq;
        if (!own_fin) {
            own_fin = true;
            out.flags = FIN | ACK;
            out.seq = my_seq++;
            c->state_ = Connection::State::closed;
            if (receiver_is_client) c->rx_.close();
            else if (c->listener_.on_close) c->listener_.on_close(c);
        } else {
            out.flags = ACK;
            out.seq = my_seq;
            forget(c);
        }
        emit(std::move(out));
    }

    Scheduler& sched_;
    Duration hop_;
    std::mt19937 rng_;
    std::map<Ipv4, Host> hosts_;
    std::map<FlowKey, ConnPtr> conns_;
    std::map<FlowKey, std::uint32_t> half_open_; // server's next seq
    std::map<ProbeKey, std::shared_ptr<Mailbox<PacketRecord>>> probes_;
    std::set<std::pair<Ipv4, std::uint16_t>> ports_in_use_;
    std::function<Passage(PacketRecord&)> gateway_;
    std::uint64_t packets_ = 0;
};

inline Scheduler& Connection::sched_of(Network& n) { return n.scheduler(); }

inline void Connection::send(bool from_client, Bytes data)
{
    if (state_ != State::established || data.empty()) return;
    if (from_client ? client_fin_ : server_fin_) return;
    PacketRecord p = from_client ? net_.base(client_, server_, Transport::tcp) : net_.base(server_, client_, Transport::tcp);
    p.flags = net::tcp::PSH | net::tcp::ACK;
    p.established = true;
    p.from_client = from_client;
    auto& seq = from_client ? client_seq_ : server_seq_;
    p.seq = seq;
    p.ack = from_client ? server_seq_ : client_seq_;
    seq += static_cast<std::uint32_t>(data.size());
    p.payload = std::move(data);
    net_.emit(std::move(p));
}

inline void Connection::close(bool from_client)
{
    if (state_ != State::established) return;
    bool& fin = from_client ? client_fin_ : server_fin_;
    if (fin) return;
    fin = true;
    state_ = State::closed;
    PacketRecord p = from_client ? net_.base(client_, server_, Transport::tcp) : net_.base(server_, client_, Transport::tcp);
    p.flags = net::tcp::FIN | net::tcp::ACK;
    p.established = true;
    p.from_client = from_client;
    auto& seq = from_client ? client_seq_ : server_seq_;
    p.seq = seq++;
    p.ack = from_client ? server_seq_ : client_seq_;
    if (from_client) rx_.close();
    net_.emit(std::move(p));
}

inline void Connection::abort(bool from_client)
{
    if (reset_) return;
    PacketRecord p = from_client ? net_.base(client_, server_, Transport::tcp) : net_.base(server_, client_, Transport::tcp);
    p.flags = net::tcp::RST | net::tcp::ACK;
    p.established = true;
    p.from_client = from_client;
    p.seq = from_client ? client_seq_ : server_seq_;
    p.ack = from_client ? server_seq_ : client_seq_;
    p.window = 0;
    state_ = State::closed;
    reset_ = true;
    if (from_client) rx_.close();
    net_.emit(std::move(p));
}

} // namespace scada::sim
