#pragma once

// Minimal lazy coroutine task with symmetric transfer, a fire-and-forget
// spawn, and a blocking sync_wait for code that runs outside the scheduler.

#include <condition_variable>
#include <coroutine>
#include <exception>
#include <mutex>
#include <optional>
#include <utility>
#include <variant>

namespace scada::sim {

template <class T = void>
class Task;

namespace detail {

struct FinalAwaiter {
    bool await_ready() const noexcept { return false; }
    template <class P>
    std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) const noexcept
    {
        if (auto c = h.promise().continuation) return c;
        return std::noop_coroutine();
    }
    void await_resume() const noexcept {}
};

struct PromiseBase {
    std::coroutine_handle<> continuation;
    std::exception_ptr error;
    std::suspend_always initial_suspend() const noexcept { return {}; }
    FinalAwaiter final_suspend() const noexcept { return {}; }
    void unhandled_exception() noexcept { error = std::current_exception(); }
};

template <class T>
struct Promise : PromiseBase {
    std::optional<T> value;
    Task<T> get_return_object() noexcept;
    template <class U>
    void return_value(U&& v) { value.emplace(std::forward<U>(v)); }
    T take()
    {
        if (error) std::rethrow_exception(error);
        return std::move(*value);
    }
};

template <>
struct Promise<void> : PromiseBase {
    Task<void> get_return_object() noexcept;
    void return_void() const noexcept {}
    void take()
    {
        if (error) std::rethrow_exception(error);
    }
};

} // namespace detail

template <class T>
class [[nodiscard]] Task {
public:
    using promise_type = detail::Promise<T>;
    using handle_type = std::coroutine_handle<promise_type>;

    Task() = default;
    explicit Task(handle_type h) : h_(h) {}
    Task(Task&& o) noexcept : h_(std::exchange(o.h_, {})) {}
    Task& operator=(Task&& o) noexcept
    {
        if (this != &o) {
            if (h_) h_.destroy();
            h_ = std::exchange(o.h_, {});
        }
        return *this;
    }
    Task(const Task&) = delete;
    Task& operator=(const Task&) = delete;
    ~Task()
    {
        if (h_) h_.destroy();
    }

    bool await_ready() const noexcept { return !h_ || h_.done(); }
    std::coroutine_handle<> await_suspend(std::coroutine_handle<> caller) noexcept
    {
        h_.promise().continuation = caller;
        return h_;
    }
    T await_resume() { return h_.promise().take(); }

    handle_type handle() const { return h_; }

private:
    handle_type h_;
};

namespace detail {
template <class T>
Task<T> Promise<T>::get_return_object() noexcept
{
    return Task<T>{std::coroutine_handle<Promise<T>>::from_promise(*this)};
}
inline Task<void> Promise<void>::get_return_object() noexcept
{
    return Task<void>{std::coroutine_handle<Promise<void>>::from_promise(*this)};
}

/// Eagerly started, self-destroying wrapper used by spawn().
struct Detached {
    struct promise_type {
        Detached get_return_object() noexcept { return {}; }
        std::suspend_never initial_suspend() const noexcept { return {}; }
        std::suspend_never final_suspend() const noexcept { return {}; }
        void return_void() const noexcept {}
        void unhandled_exception() { throw; }
    };
};

inline Detached run_detached(Task<void> t) { co_await std::move(t); }
} // namespace detail

/// Starts `t` now and lets it finish on its own. Exceptions escape into
/// whoever resumed the task last (normally the scheduler loop).
inline void spawn(Task<void> t) { detail::run_detached(std::move(t)); }

/// Runs `t` to completion on the calling thread, blocking if it suspends on
/// something another thread resumes.
template <class T>
T sync_wait(Task<T> t)
{
    std::mutex m;
    std::condition_variable cv;
    bool done = false;
    std::optional<std::conditional_t<std::is_void_v<T>, std::monostate, T>> result;
    std::exception_ptr err;

    auto runner = [&](Task<T> inner) -> Task<void> {
        try {
            if constexpr (std::is_void_v<T>) {
                co_await std::move(inner);
                result.emplace();
            } else {
                result.emplace(co_await std::move(inner));
            }
        } catch (...) {
            err = std::current_exception();
        }
        std::lock_guard lk(m);
        done = true;
        cv.notify_all();
    };
    spawn(runner(std::move(t)));
    std::unique_lock lk(m);
    cv.wait(lk, [&] { return done; });
    if (err) std::rethrow_exception(err);
    if constexpr (!std::is_void_v<T>) return std::move(*result);
}

} // namespace scada::sim
