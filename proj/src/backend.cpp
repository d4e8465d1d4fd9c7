#include "rheval/backend.hpp"

#include <cmath>
#include <stdexcept>

namespace rheval {

const char* to_string(Segment s) {
    switch (s) {
        case Segment::system: return "system";
        case Segment::instruction: return "instruction";
        case Segment::visual: return "visual";
        case Segment::response: return "response";
    }
    return "?";
}

void SegmentMap::validate() const {
    std::vector<bool> covered(total_len, false);
    for (const auto& [seg, iv] : ranges) {
        if (iv.end < iv.begin || iv.end > total_len) {
            throw std::runtime_error(std::string("segment map: bad interval for ") +
                                     to_string(seg));
        }
        for (size_t p = iv.begin; p < iv.end; ++p) {
            if (covered[p]) {
                throw std::runtime_error("segment map: overlapping intervals at position " +
                                         std::to_string(p));
            }
            covered[p] = true;
        }
    }
    for (size_t p = 0; p < prompt_len; ++p) {
        if (!covered[p]) {
            throw std::runtime_error("segment map: prompt position " + std::to_string(p) +
                                     " not covered");
        }
    }
    auto it = ranges.find(Segment::response);
    if (it != ranges.end() && it->second.width() > 0 && it->second.begin != prompt_len) {
        throw std::runtime_error("segment map: response interval must start at prompt end");
    }
}

StopPolicy natural_stop_policy() {
    return [](const StepView&) { return TokenDecision::accept; };
}

void check_interventions(const BackendInfo& info, const std::vector<InterventionSpec>& specs) {
    for (const auto& spec : specs) {
        if (spec.layer < 0 || spec.layer >= info.layer_count) {
            throw std::out_of_range("intervention layer " + std::to_string(spec.layer) +
                                    " out of range [0, " + std::to_string(info.layer_count) + ")");
        }
        if (static_cast<int>(spec.direction.size()) != info.hidden_dim) {
            throw std::invalid_argument(
                "intervention direction has " + std::to_string(spec.direction.size()) +
                " entries, backend hidden_dim is " + std::to_string(info.hidden_dim));
        }
        for (double v : spec.direction) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("intervention direction contains a non-finite value");
            }
        }
        if (!std::isfinite(spec.scale)) {
            throw std::invalid_argument("intervention scale is non-finite");
        }
    }
}

}  // namespace rheval
