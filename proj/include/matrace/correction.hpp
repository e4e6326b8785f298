#pragma once

#include <stdexcept>
#include <string>

namespace matrace {

/// Truncation levels for the importance weights
///   c = lambda * min(c_bar, pi/mu),  rho = min(rho_bar, pi/mu).
struct CorrectionConfig {
    double c_bar = 1.0;
    double rho_bar = 1.0;
    double lambda = 1.0;
    // Permit c_bar > rho_bar (breaks the fixed-point hypothesis; ablations only).
    bool allow_c_above_rho = false;
    // Negative control for the oracle battery: rho is left unclipped.
    bool unclipped_rho = false;

    void validate() const {
        if (!(c_bar >= 0.0)) throw std::invalid_argument("c_bar must be >= 0");
        if (!(rho_bar >= 0.0)) throw std::invalid_argument("rho_bar must be >= 0");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
        if (c_bar > rho_bar && !allow_c_above_rho) {
            throw std::invalid_argument("c_bar (" + std::to_string(c_bar) + ") exceeds rho_bar (" +
                                        std::to_string(rho_bar) + "); set allow_c_above_rho to study this regime");
        }
    }
};

}  // namespace matrace
