#pragma once

// Latent-state steering: contrastive direction extraction from long vs short
// reasoning traces, and its application as decode-time interventions.
//
// For each decoder layer the direction is
//     d[l] = mean over long records of (per-record mean hidden state on the
//            thinking span) - the same mean over short records,
// taken on post-attention hidden states. Directions are kept at their natural
// magnitude; the steering strength alpha scales them at apply time.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rheval/backend.hpp"
#include "rheval/corpus.hpp"
#include "rheval/records.hpp"

namespace rheval {

enum class PartitionRule { median, quartile };

const char* to_string(PartitionRule r);
PartitionRule partition_rule_from_string(const std::string& s);

struct SideStats {
    size_t count = 0;
    double mean_len = 0.0;
    long min_len = 0;
    long max_len = 0;
};

struct TracePartition {
    std::set<std::string> long_keys;
    std::set<std::string> short_keys;
    PartitionRule rule = PartitionRule::median;
    SideStats long_stats;
    SideStats short_stats;
};

struct PartitionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Splits records into long/short thinking-length sides.
//   median:   strictly above / strictly below the median, ties to neither side
//   quartile: shortest floor(n/4) vs longest floor(n/4), ties broken by
//             (length, key) so the split is deterministic
// Throws PartitionError when fewer than 4 records are given or all lengths
// are equal.
TracePartition partition_traces(const std::vector<GenerationRecord>& records, PartitionRule rule);

struct SteeringDirections {
    int layer_count = 0;
    int hidden_dim = 0;
    std::vector<std::vector<double>> direction;   // [layer][dim]
    std::vector<std::vector<double>> mean_long;   // [layer][dim]
    std::vector<std::vector<double>> mean_short;  // [layer][dim]
    size_t count_long = 0;
    size_t count_short = 0;
    PartitionRule rule = PartitionRule::median;
    uint64_t corpus_fingerprint = 0;
    std::string backend_fingerprint;

    double cosine_to(int layer, const std::vector<float>& probe) const;
};

// Thinking-span hidden states of one record, [layer][token][dim].
using SpanStates = std::vector<std::vector<std::vector<float>>>;

// Core extraction kernel over already-collected span states, keyed by record
// key. All accumulation happens in double precision. Throws on a missing key,
// an empty span, or a dimension mismatch.
SteeringDirections extract_from_span_states(const TracePartition& partition,
                                            const std::map<std::string, SpanStates>& states,
                                            int layer_count, int hidden_dim);

// Replays each partitioned record through the backend to collect span states,
// then runs the extraction kernel. Stamps fingerprints from corpus + backend.
SteeringDirections extract_directions(const TracePartition& partition,
                                      const std::vector<GenerationRecord>& records,
                                      const Corpus& corpus, Backend& backend);

struct SteeringConfig {
    double alpha = 0.0;
    std::vector<int> layers;  // empty = all layers
};

// One additive intervention per selected layer, direction scaled by alpha.
// Throws std::invalid_argument when alpha leaves [kAlphaMin, kAlphaMax].
std::vector<InterventionSpec> make_interventions(const SteeringDirections& dirs,
                                                 const SteeringConfig& cfg);

void save_directions(const std::string& path, const SteeringDirections& dirs);
SteeringDirections load_directions(const std::string& path);

}  // namespace rheval
