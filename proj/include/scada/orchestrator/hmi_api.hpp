#pragma once

// Operator JSON API: tag snapshot, range-checked writes through the master,
// recent alarm transitions. The HTTP side only queues work; the coordinator
// thread owns the plant and runs both the clock and the queued requests.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "scada/orchestrator/testbed.hpp"

namespace scada::orchestrator {

using json = nlohmann::json;

struct ApiReply {
    int status = 200;
    json body;
};

inline json tags_json(Topology& topo)
{
    const auto& table = topo.master_table();
    json tags = json::object();
    json bands = json::object();
    for (auto& t : topo.tags().tags) {
        double v = t.read(table);
        json j{{"value", t.type == TagType::boolean ? json(v != 0) : json(v)},
               {"type", t.type == TagType::boolean ? "boolean" : "integer"},
               {"valid", t.in_range(v)}};
        if (t.range) j["range"] = {t.range->first, t.range->second};
        tags[t.name] = std::move(j);
        if (t.type == TagType::integer && t.name.find("Level") != std::string::npos)
            bands[t.name] = std::string(process::band_name(process::classify_level(v)));
    }
    double speed = as_signed(table.holding(process::reg::pump_speed));
    if (auto* t = topo.tags().find("PumpSpeed")) speed = t->read(table);
    return json{{"time_us", topo.sched().now().count()},
                {"tags", std::move(tags)},
                {"bands", std::move(bands)},
                {"pump_speed", speed},
                {"alarm", topo.alarm()},
                {"warning", table.coil(32) || table.coil(33)},
                {"comm_fault", topo.poller().faulted()}};
}

inline ApiReply write_tag(Topology& topo, const json& req)
{
    if (!req.is_object() || !req.contains("tag") || !req["tag"].is_string())
        return {400, {{"error", "body must be {\"tag\": name, \"value\": number}"}}};
    auto name = req["tag"].get<std::string>();
    const Tag* t = topo.tags().find(name);
    if (!t) return {404, {{"error", "unknown tag '" + name + "'"}}};
    if (!req.contains("value") || !(req["value"].is_number() || req["value"].is_boolean()))
        return {400, {{"error", "value must be a number"}}};
    double v = req["value"].is_boolean() ? double(req["value"].get<bool>()) : req["value"].get<double>();
    if (t->space != Space::holding_registers) return {403, {{"error", "tag '" + name + "' is not operator-writable"}}};
    if (!t->in_range(v)) {
        json r{{"error", "value outside the tag's range"}};
        if (t->range) r["range"] = {t->range->first, t->range->second};
        return {422, r};
    }
    topo.operator_write(*t, v);
    return {200, {{"ok", true}, {"tag", name}, {"value", v}}};
}

inline json events_json(Topology& topo)
{
    json list = json::array();
    for (auto& e : topo.events()) list.push_back({{"time_us", e.at.count()}, {"tag", e.tag}, {"state", e.state}});
    return json{{"events", std::move(list)}};
}

/// Runs the plant on the calling thread, pacing the simulated clock to wall
/// time (or as fast as possible) and executing requests queued by other
/// threads between events.
class Coordinator {
public:
    explicit Coordinator(Topology& topo) : topo_(topo) {}

    template <class F>
    auto call(F f) -> decltype(f(std::declval<Topology&>()))
    {
        using R = decltype(f(std::declval<Topology&>()));
        auto task = std::make_shared<std::packaged_task<R()>>([this, f = std::move(f)] { return f(topo_); });
        auto fut = task->get_future();
        {
            std::lock_guard lk(m_);
            jobs_.push_back([task] { (*task)(); });
        }
        cv_.notify_one();
        return fut.get();
    }

    void stop()
    {
        stop_ = true;
        cv_.notify_one();
    }

    /// wall_clock: one simulated second per real second. Otherwise runs
    /// `limit` of simulated time flat out. Returns when stopped or done.
    void run(bool wall_clock, std::optional<sim::Duration> limit = std::nullopt)
    {
        auto& sched = topo_.sched();
        auto sim0 = sched.now();
        auto wall0 = std::chrono::steady_clock::now();
        while (!stop_) {
            drain();
            if (wall_clock) {
                auto elapsed = std::chrono::duration_cast<sim::Duration>(std::chrono::steady_clock::now() - wall0);
                auto target = sim0 + elapsed;
                if (limit && target > sim0 + *limit) target = sim0 + *limit;
                sched.run_until(target);
                if (limit && sched.now() >= sim0 + *limit) break;
                std::unique_lock lk(m_);
                cv_.wait_for(lk, std::chrono::milliseconds(5), [this] { return stop_ || !jobs_.empty(); });
            } else {
                sched.run_until(sched.now() + topo_.config().tick);
                if (limit && sched.now() >= sim0 + *limit) break;
            }
        }
        drain();
    }

private:
    void drain()
    {
        std::deque<std::function<void()>> batch;
        {
            std::lock_guard lk(m_);
            batch.swap(jobs_);
        }
        for (auto& j : batch) j();
    }

    Topology& topo_;
    std::mutex m_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> jobs_;
    std::atomic<bool> stop_{false};
};

/// HTTP front for the coordinator, listening on its own thread.
class HmiServer {
public:
    HmiServer(Coordinator& coord, std::string host, std::uint16_t port) : coord_(coord)
    {
        auto send = [](httplib::Response& res, const ApiReply& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        srv_.Get("/api/tags", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, {200, coord_.call([](Topology& t) { return tags_json(t); })});
        });
        srv_.Get("/api/events", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, {200, coord_.call([](Topology& t) { return events_json(t); })});
        });
        srv_.Post("/api/write", [this, send](const httplib::Request& req, httplib::Response& res) {
            auto body = json::parse(req.body, nullptr, false);
            if (body.is_discarded()) return send(res, {400, {{"error", "body is not JSON"}}});
            send(res, coord_.call([&body](Topology& t) { return write_tag(t, body); }));
        });
        if (!srv_.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { srv_.listen_after_bind(); });
    }

    HmiServer(const HmiServer&) = delete;
    HmiServer& operator=(const HmiServer&) = delete;
    ~HmiServer()
    {
        srv_.stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    Coordinator& coord_;
    httplib::Server srv_;
    std::thread thread_;
};

} // namespace scada::orchestrator
