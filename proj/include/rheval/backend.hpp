#pragma once

// Generation-backend contract. Everything downstream (steering extraction,
// length-control policies, attention analysis) is written against this
// interface; the in-repo reference implementation is the toy decoder.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rheval/corpus.hpp"

namespace rheval {

enum class Segment { system, instruction, visual, response };

const char* to_string(Segment s);

struct TokenInterval {
    size_t begin = 0;  // half-open [begin, end)
    size_t end = 0;

    size_t width() const { return end - begin; }
    bool contains(size_t pos) const { return pos >= begin && pos < end; }
    bool operator==(const TokenInterval&) const = default;
};

// Token-segment taxonomy of the full sequence. The prompt is covered by the
// system/instruction/visual intervals; the response interval starts where the
// prompt ends.
struct SegmentMap {
    std::map<Segment, TokenInterval> ranges;
    size_t prompt_len = 0;
    size_t total_len = 0;

    // Throws std::runtime_error on overlap or a prompt not fully covered.
    void validate() const;
};

// Captured state for one emitted token: per-layer post-attention hidden state
// and the head-averaged attention row from this position over positions
// [0, position].
struct StepTrace {
    int token_id = 0;
    size_t position = 0;                                 // absolute index in the full sequence
    std::vector<std::vector<float>> hidden;              // [layer][hidden_dim]
    std::vector<std::vector<float>> attention;           // [layer][position + 1]
};

struct InterventionSpec {
    int layer = 0;
    std::vector<double> direction;  // hidden_dim entries, all finite
    double scale = 0.0;
};

struct BackendInfo {
    int layer_count = 0;
    int hidden_dim = 0;
    std::string think_open;
    std::string think_close;
    std::string wait_token;
    std::string fingerprint;  // identifies weights/config, not the sampling seed
};

// Verdict the stop policy returns for each sampled candidate token, before it
// is committed to the sequence.
enum class TokenDecision {
    accept,         // commit the sampled token
    replace_close,  // commit the thinking-close marker instead
    replace_wait,   // commit the wait token instead
    halt,           // stop generating; nothing further is committed
};

// What a stop policy sees per step. Counts refer to already-committed tokens.
struct StepView {
    size_t response_index = 0;         // index of the candidate among response tokens
    size_t thinking_tokens = 0;        // content tokens inside the thinking span
    bool in_thinking = false;          // open marker seen, close marker not yet
    bool thinking_closed = false;
    bool candidate_is_open = false;
    bool candidate_is_close = false;
    bool candidate_is_wait = false;
    bool candidate_is_eos = false;
    bool candidate_is_content = false;  // thinking-span content (non-marker, non-wait)
};

// Stateful per-generation callback; one instance owns exactly one stream.
using StopPolicy = std::function<TokenDecision(const StepView&)>;

StopPolicy natural_stop_policy();

struct GenerationResult {
    std::string text;                // full response, markers included
    std::vector<int> token_ids;
    std::vector<StepTrace> traces;   // aligned 1:1 with emitted response tokens
    SegmentMap segmap;
    std::string thinking_text;       // content between the markers
    std::string answer_text;         // tokens after the close marker, eos excluded
    size_t thinking_token_count = 0;
    size_t answer_token_count = 0;

    // Trace indices [begin, end) covering the thinking span. The response
    // always opens with the thinking marker at trace 0, so the span content
    // sits right behind it; empty for zerothink responses.
    std::pair<size_t, size_t> thinking_trace_span() const {
        return {1, 1 + thinking_token_count};
    }
};

class Backend {
public:
    virtual ~Backend() = default;

    // Constants stable for the backend's lifetime.
    virtual BackendInfo describe() const = 0;

    // Reseeds the sampling stream; generation is deterministic per seed.
    virtual void reseed(uint64_t seed) = 0;

    // Runs one generation. Each decode step applies every intervention's
    // scale * direction to the post-attention hidden state at its layer before
    // that layer's output is consumed; interventions act on generated
    // positions only. The stop policy is consulted on every sampled token.
    virtual GenerationResult generate(const BenchSample& sample,
                                      const std::vector<InterventionSpec>& interventions,
                                      StopPolicy stop_policy,
                                      size_t max_tokens) = 0;

    // Teacher-forced forward pass over a stored response, recovering the same
    // traces generate() would have captured. No interventions, no sampling.
    virtual GenerationResult replay(const BenchSample& sample,
                                    const std::string& thinking_text,
                                    const std::string& answer_text) = 0;
};

// Validates interventions against the backend's declared geometry.
void check_interventions(const BackendInfo& info, const std::vector<InterventionSpec>& specs);

}  // namespace rheval
