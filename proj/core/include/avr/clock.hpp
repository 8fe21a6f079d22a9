// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>

#include "avr/types.hpp"

namespace avr {

// Time source in seconds since an arbitrary epoch. Must be monotone.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() = 0;
};

// Simulated time: advances only when told to, so scheduled work takes zero
// processing time by construction.
class VirtualClock : public Clock {
public:
    explicit VirtualClock(double start = 0.0) : t_(start) {}
    double now() override { return t_; }
    void advance_to(double t) {
        if (t < t_) throw error("virtual clock moved backwards");
        t_ = t;
    }
    void advance_by(double dt) { advance_to(t_ + dt); }

private:
    double t_;
};

class WallClock : public Clock {
public:
    WallClock() : epoch_(std::chrono::steady_clock::now()) {}
    double now() override {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
    }

private:
    std::chrono::steady_clock::time_point epoch_;
};

}  // namespace avr
