#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace matrace::oracle {

struct BatteryOptions {
    int n_specs = 200;
    std::uint64_t seed = 0;
    int value_pairs = 100;
    double fixed_point_tol = 1e-10;
    double trunc_tol = 1e-12;
    bool inject_unclipped_rho = false;
};

// Thresholds asserted per spec.
inline constexpr double kFixedPointIdentityTol = 1e-6;
inline constexpr double kContractionSlack = 1e-9;
inline constexpr double kRhoInfTol = 1e-5;
inline constexpr double kRhoZeroTol = 1e-4;
inline constexpr double kCBarInvarianceTol = 1e-6;
inline constexpr double kAlphaFloor = -1e-12;

struct BatteryRow {
    std::uint64_t seed = 0;
    int n_states = 0;
    int n_agents = 0;
    int n_actions = 0;
    double gamma = 0.0;
    double c_bar = 0.0;
    double rho_bar = 0.0;
    double beta = 0.0;
    double min_alpha = 0.0;
    double max_contraction = 0.0;
    double contraction_bound = 0.0;
    double fixed_point_residual = 0.0;
    double fixed_point_error = 0.0;
    double rho_inf_error = 0.0;
    double rho_zero_error = 0.0;
    double c_bar_spread = 0.0;
    double telescoping_max = 0.0;
    double telescoping_bound = 0.0;
    std::vector<std::string> violations;
};

struct BatteryReport {
    std::vector<BatteryRow> rows;
    bool passed() const;
    std::vector<std::string> violations() const;  // "seed=<s>: <quantity> ..."
};

BatteryReport run_battery(const BatteryOptions& options);

/// One header line plus one row per spec.
void write_battery_csv(std::ostream& out, const BatteryReport& report);
std::string battery_csv_header();

}  // namespace matrace::oracle
