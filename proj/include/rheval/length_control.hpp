#pragma once

// Decode-time length-control strategies, expressed as stop-policy and
// intervention factories over the backend contract.

#include <string>
#include <utility>
#include <vector>

#include "rheval/backend.hpp"

namespace rheval {

struct SteeringDirections;  // steering.hpp

inline constexpr double kAlphaMin = -0.15;
inline constexpr double kAlphaMax = 0.15;

enum class ControlKind { budget_forcing, test_time_scaling, latent_steering, zerothink, none };

const char* to_string(ControlKind k);

struct LengthControl {
    ControlKind kind = ControlKind::none;
    long budget = 0;            // budget_forcing
    long cap = 0;               // test_time_scaling
    double halt_fraction = 0.5; // test_time_scaling
    long wait_count = 1;        // test_time_scaling
    double alpha = 0.0;         // latent_steering

    void validate() const;      // throws std::invalid_argument
    std::string tag() const;    // canonical form, e.g. "budget:16", "tts:4096:0.5:1"
    static LengthControl parse(const std::string& tag);

    static LengthControl budget_forcing(long budget);
    static LengthControl test_time_scaling(long cap, double halt_fraction, long wait_count);
    static LengthControl latent_steering(double alpha);
    static LengthControl zerothink();
    static LengthControl none_control();
};

// Hard cap on thinking tokens; on reaching the budget the policy forces the
// thinking-close marker. budget 0 keeps the markers but empties the span.
StopPolicy budget_forcing_policy(long budget);

// Staged generation: every close attempt during thinking spends one wait from
// the budget, and budget still unspent when thinking reaches
// floor(cap * halt_fraction) is spent there on consecutive steps. A finished
// run carries exactly wait_count injected waits; thinking never exceeds cap.
StopPolicy test_time_scaling_policy(long cap, double halt_fraction, long wait_count);

// Natural stop with a hard thinking-length ceiling.
StopPolicy safety_cap_policy(long cap);

struct SteeringPolicy {
    std::vector<InterventionSpec> interventions;
    StopPolicy stop;
};

// Interventions on every decoder layer at scale alpha, natural stop with a
// safety cap.
SteeringPolicy steering_policy(const SteeringDirections& dirs, double alpha,
                               long safety_cap = 4096);

// Resolves any control setting to its interventions + stop policy. dirs may
// be null unless kind == latent_steering.
SteeringPolicy policy_for(const LengthControl& control, const SteeringDirections* dirs,
                          long safety_cap = 4096);

}  // namespace rheval
