#pragma once

#include <cstddef>
#include <vector>

namespace fokkerid {

// Uniform grid t_n = n * dt, n = 0..steps, on [0, T].
//
// Two quadratures live on the grid:
//  - trapezoid weights for parameter and drift space inner products (L2(0,T)),
//  - right-endpoint weights (w_0 = 0, w_n = dt) for observation space
//    inner products; implicit Euler produces one new state per interval.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double horizon, std::size_t steps);

    double horizon() const noexcept { return horizon_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t samples() const noexcept { return steps_ + 1; }
    double dt() const noexcept { return dt_; }
    double time(std::size_t n) const noexcept { return static_cast<double>(n) * dt_; }

    double trapezoid_weight(std::size_t n) const noexcept;
    double observation_weight(std::size_t n) const noexcept { return n == 0 ? 0.0 : dt_; }

    std::vector<double> trapezoid_weights() const;
    std::vector<double> observation_weights() const;

    bool operator==(const TimeGrid& other) const noexcept {
        return steps_ == other.steps_ && horizon_ == other.horizon_;
    }

private:
    double horizon_ = 0.0;
    std::size_t steps_ = 0;
    double dt_ = 0.0;
};

}  // namespace fokkerid
