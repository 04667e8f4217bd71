#pragma once

// Discrete-event scheduler on a simulated microsecond clock. Events at the
// same instant run in the order they were scheduled.

#include <chrono>
#include <coroutine>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <vector>

#include "scada/sim/task.hpp"

namespace scada::sim {

using Duration = std::chrono::microseconds;
using Time = std::chrono::microseconds; // since simulation start

using namespace std::chrono_literals;

class Scheduler {
public:
    Time now() const { return now_; }

    void at(Time t, std::function<void()> fn)
    {
        if (t < now_) t = now_;
        queue_.push(Event{t, seq_++, std::move(fn)});
    }
    void after(Duration d, std::function<void()> fn) { at(now_ + d, std::move(fn)); }
    void post(std::function<void()> fn) { at(now_, std::move(fn)); }

    bool run_one()
    {
        if (queue_.empty()) return false;
        // priority_queue::top is const; the function is moved out via a copy of the node.
        Event ev = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        now_ = ev.at;
        ev.fn();
        ++executed_;
        return true;
    }

    /// Runs every event scheduled at or before `t`, then parks the clock at `t`.
    void run_until(Time t)
    {
        while (!queue_.empty() && queue_.top().at <= t) run_one();
        if (now_ < t) now_ = t;
    }
    void run_for(Duration d) { run_until(now_ + d); }
    void run_all()
    {
        while (run_one()) {}
    }

    std::size_t pending() const { return queue_.size(); }
    std::uint64_t executed() const { return executed_; }
    std::optional<Time> next_event() const
    {
        if (queue_.empty()) return std::nullopt;
        return queue_.top().at;
    }

    struct SleepAwaiter {
        Scheduler& s;
        Time until;
        bool await_ready() const noexcept { return false; }
        void await_suspend(std::coroutine_handle<> h) { s.at(until, [h] { h.resume(); }); }
        void await_resume() const noexcept {}
    };
    SleepAwaiter sleep(Duration d) { return {*this, now_ + d}; }
    SleepAwaiter sleep_until(Time t) { return {*this, t}; }

private:
    struct Event {
        Time at;
        std::uint64_t seq;
        std::function<void()> fn;
        bool operator>(const Event& o) const { return at != o.at ? at > o.at : seq > o.seq; }
    };
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    Time now_{0};
    std::uint64_t seq_ = 0;
    std::uint64_t executed_ = 0;
};

/// Single-consumer queue whose receive can be awaited with a timeout.
template <class T>
class Mailbox {
    struct State;

public:
    explicit Mailbox(Scheduler& s) : st_(std::make_shared<State>(s)) {}

    void push(T v)
    {
        if (st_->closed) return;
        st_->items.push_back(std::move(v));
        wake();
    }
    void close()
    {
        st_->closed = true;
        wake();
    }
    bool closed() const { return st_->closed; }
    bool empty() const { return st_->items.empty(); }
    std::size_t size() const { return st_->items.size(); }

    enum class Status { item, timeout, closed };
    struct Result {
        Status status;
        std::optional<T> item;
    };

    struct RecvAwaiter {
        std::shared_ptr<typename Mailbox::State> st;
        std::optional<Duration> timeout;

        bool await_ready() const noexcept { return !st->items.empty() || st->closed; }
        void await_suspend(std::coroutine_handle<> h)
        {
            st->waiter = h;
            auto gen = ++st->gen;
            if (timeout) {
                std::weak_ptr<typename Mailbox::State> w = st;
                st->sched.after(*timeout, [w, gen] {
                    auto s = w.lock();
                    if (!s || !s->waiter || s->gen != gen) return;
                    auto h2 = std::exchange(s->waiter, {});
                    h2.resume();
                });
            }
        }
        Result await_resume()
        {
            if (!st->items.empty()) {
                Result r{Status::item, std::move(st->items.front())};
                st->items.pop_front();
                return r;
            }
            if (st->closed) return {Status::closed, std::nullopt};
            return {Status::timeout, std::nullopt};
        }
    };

    RecvAwaiter recv(std::optional<Duration> timeout = std::nullopt) { return RecvAwaiter{st_, timeout}; }

private:
    struct State {
        explicit State(Scheduler& s) : sched(s) {}
        Scheduler& sched;
        std::deque<T> items;
        std::coroutine_handle<> waiter;
        std::uint64_t gen = 0;
        bool closed = false;
    };

    void wake()
    {
        if (!st_->waiter) return;
        auto h = std::exchange(st_->waiter, {});
        ++st_->gen;
        st_->sched.post([h] { h.resume(); });
    }

    std::shared_ptr<State> st_;
};

/// One-shot value that coroutines can await.
template <class T>
class Promise {
public:
    explicit Promise(Scheduler& s) : box_(s) {}
    void set(T v) { box_.push(std::move(v)); }
    auto wait(std::optional<Duration> timeout = std::nullopt) { return box_.recv(timeout); }

private:
    Mailbox<T> box_;
};

} // namespace scada::sim
