#include "matrace/oracle/battery.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "matrace/oracle/oracle.hpp"

namespace matrace::oracle {

namespace {

std::string fmt(double x) {
    std::ostringstream s;
    s << std::setprecision(6) << std::scientific << x;
    return s.str();
}

BatteryRow check_one(std::uint64_t seed, const BatteryOptions& options) {
    auto problem = random_problem(seed);
    const auto& spec = problem.spec;
    auto config = problem.config;
    config.unclipped_rho = options.inject_unclipped_rho;

    const auto index = index_observations(spec);
    const auto pi = joint_policy(spec, problem.pi, index);
    const auto mu = joint_policy(spec, problem.mu, index);

    BatteryRow row;
    row.seed = seed;
    row.n_states = spec.n_states;
    row.n_agents = spec.n_agents;
    row.n_actions = spec.n_actions;
    row.gamma = spec.gamma;
    row.c_bar = config.c_bar;
    row.rho_bar = config.rho_bar;
    auto violate = [&](const std::string& what) { row.violations.push_back(what); };

    try {
        row.beta = expected_rho(spec, pi, mu, config).beta;
        const auto alpha = alpha_table(spec, pi, mu, config);
        row.min_alpha = *std::min_element(alpha.begin(), alpha.end());
        if (row.min_alpha < kAlphaFloor) violate("min alpha " + fmt(row.min_alpha) + " < 0 with c_bar <= rho_bar");

        // Fixed-point identity.
        const auto fp = fixed_point(spec, pi, mu, config, options.fixed_point_tol);
        row.fixed_point_residual = fp.residual;
        const auto target = exact_value(spec, corrected_policy(pi, mu, config.rho_bar), 1e-13);
        row.fixed_point_error = sup_distance(fp.value, target);
        if (row.fixed_point_error > kFixedPointIdentityTol) {
            violate("fixed-point identity error " + fmt(row.fixed_point_error));
        }

        // Contraction bound over random value pairs.
        row.contraction_bound = 1.0 - (1.0 - spec.gamma) * row.beta;
        env::Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_real_distribution<double> value_dist(-10.0, 10.0);
        for (int pair = 0; pair < options.value_pairs; ++pair) {
            ValueTable v1(spec.n_states, 1), v2(spec.n_states, 1);
            for (auto& x : v1.v) x = value_dist(rng);
            for (auto& x : v2.v) x = value_dist(rng);
            if (sup_distance(v1, v2) == 0.0) continue;
            const double ratio = contraction_ratio(spec, pi, mu, config, v1, v2, options.trunc_tol);
            row.max_contraction = std::max(row.max_contraction, ratio);
        }
        if (row.min_alpha >= kAlphaFloor && row.max_contraction > row.contraction_bound + kContractionSlack) {
            violate("contraction " + fmt(row.max_contraction) + " exceeds bound " + fmt(row.contraction_bound));
        }

        // rho_bar limits: large rho_bar recovers pi, vanishing rho_bar recovers mu.
        CorrectionConfig wide = config;
        wide.c_bar = 1.0;
        wide.rho_bar = 1e9;
        row.rho_inf_error = sup_distance(fixed_point(spec, pi, mu, wide, options.fixed_point_tol).value,
                                         exact_value(spec, pi, 1e-13));
        if (row.rho_inf_error > kRhoInfTol) violate("rho_bar=1e9 limit error " + fmt(row.rho_inf_error));

        CorrectionConfig narrow = config;
        narrow.c_bar = 1e-6;
        narrow.rho_bar = 1e-6;
        row.rho_zero_error = sup_distance(fixed_point(spec, pi, mu, narrow, options.fixed_point_tol).value,
                                          exact_value(spec, mu, 1e-13));
        if (row.rho_zero_error > kRhoZeroTol) violate("rho_bar=1e-6 limit error " + fmt(row.rho_zero_error));

        // The fixed point does not depend on c_bar.
        std::vector<ValueTable> by_c;
        for (double c_bar : {0.25, 0.5, 1.0}) {
            CorrectionConfig cfg = config;
            cfg.rho_bar = 1.0;
            cfg.c_bar = c_bar;
            by_c.push_back(fixed_point(spec, pi, mu, cfg, options.fixed_point_tol).value);
        }
        for (std::size_t a = 0; a < by_c.size(); ++a) {
            for (std::size_t b = a + 1; b < by_c.size(); ++b) {
                row.c_bar_spread = std::max(row.c_bar_spread, sup_distance(by_c[a], by_c[b]));
            }
        }
        if (row.c_bar_spread > kCBarInvarianceTol) violate("c_bar invariance spread " + fmt(row.c_bar_spread));

        const auto tele = telescoping_bound(spec, pi, mu, config, options.trunc_tol);
        row.telescoping_max = tele.max_value;
        row.telescoping_bound = tele.bound;
        if (tele.max_value > tele.bound + options.trunc_tol) {
            violate("telescoping sum " + fmt(tele.max_value) + " exceeds 1 + (gamma - 1) beta = " + fmt(tele.bound));
        }
    } catch (const std::exception& e) {
        violate(std::string("exception: ") + e.what());
    }
    return row;
}

}  // namespace

bool BatteryReport::passed() const {
    return std::all_of(rows.begin(), rows.end(), [](const BatteryRow& r) { return r.violations.empty(); });
}

std::vector<std::string> BatteryReport::violations() const {
    std::vector<std::string> out;
    for (const auto& r : rows) {
        for (const auto& v : r.violations) out.push_back("seed=" + std::to_string(r.seed) + ": " + v);
    }
    return out;
}

BatteryReport run_battery(const BatteryOptions& options) {
    BatteryReport report;
    report.rows.reserve(std::max(options.n_specs, 0));
    for (int i = 0; i < options.n_specs; ++i) report.rows.push_back(check_one(options.seed + i, options));
    return report;
}

std::string battery_csv_header() {
    return "seed,n_states,n_agents,n_actions,gamma,c_bar,rho_bar,beta,min_alpha,max_contraction,contraction_bound,"
           "fixed_point_residual,fixed_point_error,rho_inf_error,rho_zero_error,c_bar_spread,telescoping_max,"
           "telescoping_bound,violations";
}

void write_battery_csv(std::ostream& out, const BatteryReport& report) {
    out << battery_csv_header() << '\n';
    out << std::setprecision(17);
    for (const auto& r : report.rows) {
        std::string joined;
        for (const auto& v : r.violations) joined += (joined.empty() ? "" : "; ") + v;
        out << r.seed << ',' << r.n_states << ',' << r.n_agents << ',' << r.n_actions << ',' << r.gamma << ','
            << r.c_bar << ',' << r.rho_bar << ',' << r.beta << ',' << r.min_alpha << ',' << r.max_contraction << ','
            << r.contraction_bound << ',' << r.fixed_point_residual << ',' << r.fixed_point_error << ','
            << r.rho_inf_error << ',' << r.rho_zero_error << ',' << r.c_bar_spread << ',' << r.telescoping_max << ','
            << r.telescoping_bound << ",\"" << joined << "\"\n";
    }
}

}  // namespace matrace::oracle
