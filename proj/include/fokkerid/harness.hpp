#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fokkerid/inversion.hpp"
#include "fokkerid/model.hpp"
#include "fokkerid/observation.hpp"

namespace fokkerid {

inline constexpr const char* kScenarioFormatTag = "FOKKERID-SCENARIO-v1";

// Componentwise offset + sum_k a_k cos(2 pi f_k t/T + phase_k).
struct Waveform {
    struct Term {
        double amplitude = 0.0;
        double frequency = 0.0;  // cycles per horizon
        double phase = 0.0;      // radians
    };
    std::array<double, 3> offset{};
    std::array<std::vector<Term>, 3> terms;

    static Waveform constant(const Vec3& v);
    TimeSeries3 sample(const TimeGrid& grid) const;
};

// phi(m) = k (m . n) n, the landscape of a uniaxial particle with easy axis n.
struct UniaxialLandscape {
    std::array<double, 3> axis{1.0, 0.0, 0.0};
    double strength = 1.0;

    CellVectors sample(const CellVectors& centers) const;
};

using ParameterSpec = std::variant<Waveform, UniaxialLandscape>;

struct Scenario {
    std::string name;
    ParameterCase parameter_case = ParameterCase::field_waveform;
    PhysicalConstants constants;
    int fine_level = 5;
    int coarse_level = 4;
    double horizon = 40e-9;
    std::size_t steps = 150;
    ObservationMode mode = ObservationMode::expectation;
    Waveform background;  // mu0*H_app for cases 2 and 3
    std::optional<ParameterSpec> truth;  // required to simulate, optional to reconstruct
    ParameterSpec initial_guess;
    std::vector<double> noise_levels;
    std::uint64_t seed = 1;

    void validate() const;
    TimeGrid grid() const { return TimeGrid(horizon, steps); }
    TimeSeries3 background_field() const;
    bool has_truth() const { return truth.has_value(); }
    // Throws EvaluationError without a ground truth.
    Parameter truth_on(const SphereMesh& mesh) const;
    Parameter initial_guess_on(const SphereMesh& mesh) const;
};

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
void save_scenario(const std::filesystem::path& path, const Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);

// Applied-field reconstruction, no anisotropy.
Scenario preset_case1();
// Static uniaxial landscape along y from an x-axis guess under a Lissajous field.
Scenario preset_case2();
// Easy axis rotating once in the xy-plane under a constant 10 mT field.
Scenario preset_case3();
Scenario preset(int parameter_case);

ForwardOperator make_forward(const Scenario& s, std::shared_ptr<const SphereMesh> mesh);

struct NoisyMeasurement {
    double level = 0.0;
    ObservationSeries series;
    double delta = 0.0;       // Y-norm of the injected noise
    double data_error = 0.0;  // ||y_delta - F_coarse(p_true)||, used by the discrepancy principle
};

struct Measurement {
    ObservationSeries clean;      // fine-mesh solve, transferred to the coarse mesh
    double model_mismatch = 0.0;  // ||clean - F_coarse(p_true)||
    std::vector<NoisyMeasurement> noisy;
};

// Seeded i.i.d. Gaussian noise with sigma = level * max |y|.
ObservationSeries add_noise(const ObservationSeries& clean, double level, std::uint64_t seed, std::size_t stream);

Measurement generate_measurement(const Scenario& s, const SphereMesh& fine, const ForwardOperator& coarse);

struct RelativeErrors {
    double l2 = 0.0;
    double h1 = 0.0;
};

// Relative errors over (0,T) (time scaled to unit length for the H1
// seminorm); for static landscapes the spatial H1 norm on the sphere.
// Easy axes are compared as lines, since n and -n give the same drift:
// samples are normalized and sign-matched to the truth, and each time
// difference uses one sign for both ends.
RelativeErrors relative_errors(const Parameter& reconstruction, const Parameter& truth, const ForwardOperator& forward);

struct StoppedError {
    std::size_t index = 0;  // 1-based iteration
    RelativeErrors errors;
    bool reached = true;    // false: the rule never fired and the last iterate stands in
};

struct ErrorReport {
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    std::optional<StoppedError> discrepancy_principle;
    std::optional<StoppedError> best;
};

// With delta > 0 and no discrepancy-principle stop, the last iterate is
// reported for that rule with reached = false.
ErrorReport evaluate(const ReconstructionRun& run, const Parameter& truth, const ForwardOperator& forward,
                     double noise_level, std::uint64_t seed);

TruthError make_truth_error(const Parameter& truth, const ForwardOperator& forward);

}  // namespace fokkerid
