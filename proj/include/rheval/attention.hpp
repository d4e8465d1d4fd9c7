#pragma once

// Per-layer attention allocation over prompt segments, measured from the
// response side: where does the model look while it writes.

#include <map>
#include <string>
#include <vector>

#include "rheval/backend.hpp"

namespace rheval {

struct AttentionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AttentionProfile {
    // shares[layer][segment], each layer a probability vector over the four
    // named segments after renormalization
    std::vector<std::map<Segment, double>> shares;
    std::vector<double> excluded_mass;  // mean unclassified mass per layer, pre-renormalization
    std::string query_scope = "response positions, uniform mean";
    std::string sample_id;
    std::string control_tag;

    void validate() const;  // sum-to-1 within 1e-6, all shares >= 0
};

// Averages each layer's attention over response-position queries: the mass a
// query row puts inside a segment's interval is summed, averaged across
// queries, then renormalized over the named segments. Mass on positions
// outside every named segment is dropped from the shares and reported as
// excluded_mass.
AttentionProfile attention_shares(const std::vector<StepTrace>& traces, const SegmentMap& segmap);

struct ProfileDelta {
    // delta[layer][segment] = b - a
    std::vector<std::map<Segment, double>> delta;
    double mean_visual_delta = 0.0;
};

ProfileDelta compare_profiles(const AttentionProfile& a, const AttentionProfile& b);

// layer x segment share table
std::string profile_to_csv(const AttentionProfile& profile);

// Mean profile across several generations (uniform over profiles).
AttentionProfile mean_profile(const std::vector<AttentionProfile>& profiles);

}  // namespace rheval
