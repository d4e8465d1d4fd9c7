#include "rheval/length_control.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "rheval/steering.hpp"

namespace rheval {

const char* to_string(ControlKind k) {
    switch (k) {
        case ControlKind::budget_forcing:    return "budget_forcing";
        case ControlKind::test_time_scaling: return "test_time_scaling";
        case ControlKind::latent_steering:   return "latent_steering";
        case ControlKind::zerothink:         return "zerothink";
        case ControlKind::none:              return "none";
    }
    return "?";
}

void LengthControl::validate() const {
    switch (kind) {
        case ControlKind::budget_forcing:
            if (budget < 0) throw std::invalid_argument("length control: budget must be >= 0");
            break;
        case ControlKind::test_time_scaling:
            if (cap <= 0) throw std::invalid_argument("length control: cap must be > 0");
            if (!(halt_fraction > 0.0 && halt_fraction < 1.0))
                throw std::invalid_argument("length control: halt_fraction must be in (0, 1)");
            if (wait_count < 1) throw std::invalid_argument("length control: wait_count must be >= 1");
            if (wait_count > cap - static_cast<long>(std::floor(static_cast<double>(cap) * halt_fraction)))
                throw std::invalid_argument("length control: wait_count does not fit between halt point and cap");
            break;
        case ControlKind::latent_steering:
            if (!std::isfinite(alpha) || alpha < kAlphaMin || alpha > kAlphaMax)
                throw std::invalid_argument("length control: alpha outside supported range");
            break;
        case ControlKind::zerothink:
        case ControlKind::none:
            break;
    }
}

std::string LengthControl::tag() const {
    char buf[64];
    switch (kind) {
        case ControlKind::budget_forcing:
            std::snprintf(buf, sizeof(buf), "budget:%ld", budget);
            return buf;
        case ControlKind::test_time_scaling:
            std::snprintf(buf, sizeof(buf), "tts:%ld:%g:%ld", cap, halt_fraction, wait_count);
            return buf;
        case ControlKind::latent_steering:
            std::snprintf(buf, sizeof(buf), "steer:%+.3f", alpha);
            return buf;
        case ControlKind::zerothink:
            return "zerothink";
        case ControlKind::none:
            return "none";
    }
    return "?";
}

LengthControl LengthControl::parse(const std::string& tag) {
    auto bad = [&]() -> std::invalid_argument {
        return std::invalid_argument("length control: cannot parse tag '" + tag + "'");
    };
    if (tag == "zerothink") return zerothink();
    if (tag == "none") return none_control();
    std::vector<std::string> parts;
    std::stringstream ss(tag);
    std::string piece;
    while (std::getline(ss, piece, ':')) parts.push_back(piece);
    try {
        if (parts.size() == 2 && parts[0] == "budget") {
            return budget_forcing(std::stol(parts[1]));
        }
        if (parts.size() == 4 && parts[0] == "tts") {
            return test_time_scaling(std::stol(parts[1]), std::stod(parts[2]), std::stol(parts[3]));
        }
        if (parts.size() == 2 && parts[0] == "steer") {
            return latent_steering(std::stod(parts[1]));
        }
    } catch (const std::invalid_argument&) {
        throw bad();
    } catch (const std::out_of_range&) {
        throw bad();
    }
    throw bad();
}

LengthControl LengthControl::budget_forcing(long budget) {
    LengthControl c;
    c.kind = ControlKind::budget_forcing;
    c.budget = budget;
    c.validate();
    return c;
}

LengthControl LengthControl::test_time_scaling(long cap, double halt_fraction, long wait_count) {
    LengthControl c;
    c.kind = ControlKind::test_time_scaling;
    c.cap = cap;
    c.halt_fraction = halt_fraction;
    c.wait_count = wait_count;
    c.validate();
    return c;
}

LengthControl LengthControl::latent_steering(double alpha) {
    LengthControl c;
    c.kind = ControlKind::latent_steering;
    c.alpha = alpha;
    c.validate();
    return c;
}

LengthControl LengthControl::zerothink() {
    LengthControl c;
    c.kind = ControlKind::zerothink;
    return c;
}

LengthControl LengthControl::none_control() {
    return LengthControl{};
}

StopPolicy budget_forcing_policy(long budget) {
    if (budget < 0) throw std::invalid_argument("budget_forcing_policy: budget must be >= 0");
    return [budget](const StepView& v) {
        if (v.in_thinking && !v.candidate_is_close &&
            v.thinking_tokens >= static_cast<size_t>(budget))
            return TokenDecision::replace_close;
        return TokenDecision::accept;
    };
}

StopPolicy test_time_scaling_policy(long cap, double halt_fraction, long wait_count) {
    LengthControl::test_time_scaling(cap, halt_fraction, wait_count);  // reuse validation
    struct State { long waits = 0; };
    auto st = std::make_shared<State>();
    const long halt_at = static_cast<long>(std::floor(static_cast<double>(cap) * halt_fraction));
    return [=](const StepView& v) {
        if (!v.in_thinking) return TokenDecision::accept;
        if (v.thinking_tokens >= static_cast<size_t>(cap))
            return v.candidate_is_close ? TokenDecision::accept : TokenDecision::replace_close;
        // Every close attempt spends one wait; budget still unspent at the
        // halt point is spent on consecutive steps there, so a finished run
        // always carries the full wait count.
        if (st->waits < wait_count &&
            (v.candidate_is_close || v.thinking_tokens >= static_cast<size_t>(halt_at))) {
            st->waits += 1;
            return TokenDecision::replace_wait;
        }
        return TokenDecision::accept;
    };
}

StopPolicy safety_cap_policy(long cap) {
    if (cap <= 0) throw std::invalid_argument("safety_cap_policy: cap must be > 0");
    return [cap](const StepView& v) {
        if (v.in_thinking && !v.candidate_is_close &&
            v.thinking_tokens >= static_cast<size_t>(cap))
            return TokenDecision::replace_close;
        return TokenDecision::accept;
    };
}

SteeringPolicy steering_policy(const SteeringDirections& dirs, double alpha, long safety_cap) {
    SteeringConfig cfg;
    cfg.alpha = alpha;
    SteeringPolicy p;
    p.interventions = make_interventions(dirs, cfg);
    p.stop = safety_cap_policy(safety_cap);
    return p;
}

SteeringPolicy policy_for(const LengthControl& control, const SteeringDirections* dirs,
                          long safety_cap) {
    control.validate();
    SteeringPolicy p;
    switch (control.kind) {
        case ControlKind::budget_forcing:
            p.stop = budget_forcing_policy(control.budget);
            break;
        case ControlKind::zerothink:
            p.stop = budget_forcing_policy(0);
            break;
        case ControlKind::test_time_scaling:
            p.stop = test_time_scaling_policy(control.cap, control.halt_fraction, control.wait_count);
            break;
        case ControlKind::latent_steering:
            if (dirs == nullptr)
                throw std::invalid_argument("policy_for: latent steering needs extracted directions");
            return steering_policy(*dirs, control.alpha, safety_cap);
        case ControlKind::none:
            p.stop = safety_cap_policy(safety_cap);
            break;
    }
    return p;
}

}  // namespace rheval
