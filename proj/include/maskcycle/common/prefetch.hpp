#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace maskcycle {

// Loads items 0..count-1 on background workers and hands them out strictly in
// index order, keeping at most `capacity` finished items buffered. Exceptions
// raised by the loader surface from next() at the failing index.
template <typename T>
class OrderedPrefetcher {
public:
    OrderedPrefetcher(std::size_t count, std::function<T(std::size_t)> load, unsigned workers = 1,
                      std::size_t capacity = 8)
        : count_(count), load_(std::move(load)), capacity_(std::max<std::size_t>(1, capacity))
    {
        for (unsigned w = 0; w < std::max(1u, workers); ++w)
            workers_.emplace_back([this](std::stop_token stop) { run(stop); });
    }

    ~OrderedPrefetcher()
    {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        cv_.notify_all();
    }

    OrderedPrefetcher(const OrderedPrefetcher&) = delete;
    OrderedPrefetcher& operator=(const OrderedPrefetcher&) = delete;

    // nullopt once all items have been consumed.
    std::optional<T> next()
    {
        std::unique_lock lock(mutex_);
        if (consumed_ == count_)
            return std::nullopt;
        cv_.wait(lock, [&] { return ready_.count(consumed_) || failures_.count(consumed_); });
        if (auto f = failures_.find(consumed_); f != failures_.end())
            std::rethrow_exception(f->second);
        T item = std::move(ready_.at(consumed_));
        ready_.erase(consumed_);
        ++consumed_;
        lock.unlock();
        cv_.notify_all();
        return item;
    }

private:
    void run(std::stop_token stop)
    {
        for (;;) {
            std::size_t index;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return stopping_ || stop.stop_requested() || claimed_ < consumed_ + capacity_; });
                if (stopping_ || stop.stop_requested() || claimed_ >= count_)
                    return;
                index = claimed_++;
            }
            std::optional<T> item;
            std::exception_ptr failure;
            try {
                item.emplace(load_(index));
            } catch (...) {
                failure = std::current_exception();
            }
            {
                std::lock_guard lock(mutex_);
                if (failure)
                    failures_.emplace(index, failure);
                else
                    ready_.emplace(index, std::move(*item));
            }
            cv_.notify_all();
        }
    }

    std::size_t count_;
    std::function<T(std::size_t)> load_;
    std::size_t capacity_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t claimed_ = 0;
    std::size_t consumed_ = 0;
    bool stopping_ = false;
    std::map<std::size_t, T> ready_;
    std::map<std::size_t, std::exception_ptr> failures_;
    std::vector<std::jthread> workers_; // last member: joined before the state above is destroyed
};

} // namespace maskcycle
