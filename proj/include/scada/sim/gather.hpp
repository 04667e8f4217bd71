#pragma once

// Runs a batch of tasks with at most `limit` in flight and collects their
// results in order.

#include <memory>
#include <optional>
#include <vector>

#include "scada/sim/scheduler.hpp"
#include "scada/sim/task.hpp"

namespace scada::sim {

template <class T>
Task<std::vector<T>> gather(Scheduler& sched, std::vector<Task<T>> tasks, std::size_t limit = 64)
{
    struct Shared {
        std::vector<Task<T>> tasks;
        std::vector<std::optional<T>> results;
        std::size_t next = 0;
        std::size_t live = 0;
        Mailbox<int> done;
        explicit Shared(Scheduler& s) : done(s) {}
    };
    auto st = std::make_shared<Shared>(sched);
    st->tasks = std::move(tasks);
    st->results.resize(st->tasks.size());
    if (st->tasks.empty()) co_return std::vector<T>{};

    auto worker = [](std::shared_ptr<Shared> s) -> Task<void> {
        while (s->next < s->tasks.size()) {
            auto i = s->next++;
            s->results[i].emplace(co_await std::move(s->tasks[i]));
        }
        if (--s->live == 0) s->done.push(1);
    };
    std::size_t n = std::min(std::max<std::size_t>(limit, 1), st->tasks.size());
    st->live = n;
    for (std::size_t i = 0; i < n; ++i) spawn(worker(st));
    co_await st->done.recv(std::nullopt);

    std::vector<T> out;
    out.reserve(st->results.size());
    for (auto& r : st->results) out.push_back(std::move(*r));
    co_return out;
}

} // namespace scada::sim
