#include "fokkerid/time_grid.hpp"

#include "fokkerid/errors.hpp"

namespace fokkerid {

TimeGrid::TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0)) throw ConfigError("time horizon must be positive");
    if (steps == 0) throw ConfigError("time grid needs at least one step");
    dt_ = horizon / static_cast<double>(steps);
}

double TimeGrid::trapezoid_weight(std::size_t n) const noexcept {
    return (n == 0 || n == steps_) ? 0.5 * dt_ : dt_;
}

std::vector<double> TimeGrid::trapezoid_weights() const {
    std::vector<double> w(samples());
    for (std::size_t n = 0; n < w.size(); ++n) w[n] = trapezoid_weight(n);
    return w;
}

std::vector<double> TimeGrid::observation_weights() const {
    std::vector<double> w(samples());
    for (std::size_t n = 0; n < w.size(); ++n) w[n] = observation_weight(n);
    return w;
}

}  // namespace fokkerid
