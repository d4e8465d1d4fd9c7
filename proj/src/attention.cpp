#include "rheval/attention.hpp"

#include <cmath>
#include <sstream>

namespace rheval {

static constexpr Segment kSegments[4] = {Segment::system, Segment::instruction, Segment::visual,
                                         Segment::response};

void AttentionProfile::validate() const {
    for (size_t l = 0; l < shares.size(); ++l) {
        double sum = 0.0;
        for (const auto& [seg, share] : shares[l]) {
            if (share < 0.0)
                throw AttentionError("attention profile: negative share at layer " +
                                     std::to_string(l));
            sum += share;
        }
        if (std::fabs(sum - 1.0) > 1e-6)
            throw AttentionError("attention profile: layer " + std::to_string(l) +
                                 " shares sum to " + std::to_string(sum));
    }
}

AttentionProfile attention_shares(const std::vector<StepTrace>& traces, const SegmentMap& segmap) {
    segmap.validate();
    if (traces.empty()) throw AttentionError("attention_shares: no response positions to average");

    const size_t layers = traces.front().attention.size();
    AttentionProfile prof;
    prof.shares.assign(layers, {});
    prof.excluded_mass.assign(layers, 0.0);

    std::vector<std::map<Segment, double>> acc(layers);
    std::vector<double> excluded(layers, 0.0);
    for (size_t l = 0; l < layers; ++l)
        for (Segment s : kSegments) acc[l][s] = 0.0;

    for (const auto& tr : traces) {
        if (tr.attention.size() != layers)
            throw AttentionError("attention_shares: inconsistent layer count across traces");
        for (size_t l = 0; l < layers; ++l) {
            const auto& row = tr.attention[l];
            if (row.size() != tr.position + 1)
                throw AttentionError("attention_shares: attention row at position " +
                                     std::to_string(tr.position) + " covers " +
                                     std::to_string(row.size()) + " positions");
            double classified = 0.0, total = 0.0;
            for (Segment s : kSegments) {
                auto it = segmap.ranges.find(s);
                if (it == segmap.ranges.end()) continue;
                const TokenInterval& iv = it->second;
                const size_t hi = std::min(iv.end, row.size());
                double mass = 0.0;
                for (size_t p = iv.begin; p < hi; ++p) mass += static_cast<double>(row[p]);
                acc[l][s] += mass;
                classified += mass;
            }
            for (float v : row) total += static_cast<double>(v);
            excluded[l] += total - classified;
        }
    }

    const double inv_q = 1.0 / static_cast<double>(traces.size());
    for (size_t l = 0; l < layers; ++l) {
        double named = 0.0;
        for (Segment s : kSegments) named += acc[l][s];
        if (named <= 0.0)
            throw AttentionError("attention_shares: no attention mass on named segments at layer " +
                                 std::to_string(l));
        for (Segment s : kSegments) prof.shares[l][s] = acc[l][s] / named;
        prof.excluded_mass[l] = excluded[l] * inv_q;
    }
    prof.validate();
    return prof;
}

ProfileDelta compare_profiles(const AttentionProfile& a, const AttentionProfile& b) {
    if (a.shares.size() != b.shares.size())
        throw AttentionError("compare_profiles: layer count mismatch");
    ProfileDelta d;
    d.delta.assign(a.shares.size(), {});
    double visual_sum = 0.0;
    for (size_t l = 0; l < a.shares.size(); ++l) {
        if (a.shares[l].size() != b.shares[l].size())
            throw AttentionError("compare_profiles: segment taxonomy mismatch at layer " +
                                 std::to_string(l));
        for (const auto& [seg, va] : a.shares[l]) {
            auto it = b.shares[l].find(seg);
            if (it == b.shares[l].end())
                throw AttentionError("compare_profiles: segment taxonomy mismatch at layer " +
                                     std::to_string(l));
            d.delta[l][seg] = it->second - va;
        }
        d.mean_visual_delta += d.delta[l].count(Segment::visual) ? d.delta[l][Segment::visual] : 0.0;
        visual_sum += 1.0;
    }
    if (visual_sum > 0.0) d.mean_visual_delta /= visual_sum;
    return d;
}

std::string profile_to_csv(const AttentionProfile& profile) {
    std::ostringstream os;
    os << "layer";
    for (Segment s : kSegments) os << "," << to_string(s);
    os << ",excluded\n";
    for (size_t l = 0; l < profile.shares.size(); ++l) {
        os << l;
        char buf[32];
        for (Segment s : kSegments) {
            auto it = profile.shares[l].find(s);
            std::snprintf(buf, sizeof(buf), "%.6f", it == profile.shares[l].end() ? 0.0 : it->second);
            os << "," << buf;
        }
        char ebuf[32];
        std::snprintf(ebuf, sizeof(ebuf), "%.6f",
                      l < profile.excluded_mass.size() ? profile.excluded_mass[l] : 0.0);
        os << "," << ebuf << "\n";
    }
    return os.str();
}

AttentionProfile mean_profile(const std::vector<AttentionProfile>& profiles) {
    if (profiles.empty()) throw AttentionError("mean_profile: no profiles");
    const size_t layers = profiles.front().shares.size();
    AttentionProfile out;
    out.shares.assign(layers, {});
    out.excluded_mass.assign(layers, 0.0);
    out.query_scope = profiles.front().query_scope;
    for (size_t l = 0; l < layers; ++l)
        for (Segment s : kSegments) out.shares[l][s] = 0.0;
    for (const auto& p : profiles) {
        if (p.shares.size() != layers) throw AttentionError("mean_profile: layer count mismatch");
        for (size_t l = 0; l < layers; ++l) {
            for (Segment s : kSegments) {
                auto it = p.shares[l].find(s);
                out.shares[l][s] += it == p.shares[l].end() ? 0.0 : it->second;
            }
            out.excluded_mass[l] += l < p.excluded_mass.size() ? p.excluded_mass[l] : 0.0;
        }
    }
    const double inv = 1.0 / static_cast<double>(profiles.size());
    for (size_t l = 0; l < layers; ++l) {
        for (Segment s : kSegments) out.shares[l][s] *= inv;
        out.excluded_mass[l] *= inv;
    }
    out.validate();
    return out;
}

}  // namespace rheval
