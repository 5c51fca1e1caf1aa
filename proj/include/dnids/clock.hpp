#pragma once

#include <atomic>
#include <chrono>

#include "dnids/packet.hpp"

namespace dnids {

/// Time source injected into daemons so tests can drive them deterministically.
class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() const override {
        auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
        return Timestamp::from_micros(us);
    }
};

class ManualClock final : public Clock {
public:
    explicit ManualClock(Timestamp start = {1'700'000'000, 0}) : us_(start.micros()) {}
    Timestamp now() const override { return Timestamp::from_micros(us_.load()); }
    void set(Timestamp t) { us_ = t.micros(); }
    void advance_ms(std::int64_t ms) { us_ += ms * 1000; }

private:
    std::atomic<std::int64_t> us_;
};

}  // namespace dnids
