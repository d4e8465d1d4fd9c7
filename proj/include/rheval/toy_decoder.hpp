#pragma once

// Deterministic toy decoder: a genuine miniature transformer (4 layers,
// hidden dim 32, 4 heads, KV-cached causal attention, residual MLP blocks)
// used as the reference backend. Its only departures from a plain language
// model are planted mechanisms that make desk-scale verification possible:
//
//   * the thinking-close logit falls with the final hidden state's
//     projection along a planted direction, so steering along that
//     direction genuinely lengthens or shortens the reasoning span;
//   * attention logits toward visual-segment keys carry a bonus that
//     shrinks as the same projection grows, so longer reasoning diverts
//     attention away from visual tokens;
//   * the answer head's chance of picking the ground-truth token is a
//     unimodal function of the realized thinking length, so both empty
//     and excessive reasoning degrade accuracy.
//
// All hidden states and attention rows in traces come from the real forward
// pass. Prompts are encoded as [system][visual][instruction] segments with
// synthetic image tokens, so segment maps are well-defined even text-only.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rheval/backend.hpp"

namespace rheval {

struct ToyParams {
    uint64_t weights_seed = 0x52484556414c2d31ull;
    int layers = 4;
    int hidden_dim = 32;
    int heads = 4;
    int mlp_dim = 64;
    double temperature = 1.0;

    // Planted length mechanism.
    double close_logit_base = -1.35;
    double close_logit_slope = 2.0;
    double embed_planted_sd = 1.5;  // word-fixed component along the planted unit

    // Planted visual-attention mechanism.
    double visual_bias_base = 1.4;
    double visual_bias_slope = 1.2;

    // Planted answer-quality mechanism (peak thinking length per task).
    double answer_peak_reasoning = 32.0;
    double answer_width_reasoning = 18.0;
    double answer_peak_perception = 12.0;
    double answer_width_perception = 8.0;
    double answer_gain = 3.3;
    double answer_offset = 0.85;
};

class ToyDecoder final : public Backend {
public:
    // planted_direction must have hidden_dim entries; empty selects a fixed
    // direction derived from the weights seed.
    ToyDecoder(uint64_t seed, std::vector<float> planted_direction, ToyParams params = {});

    BackendInfo describe() const override;
    void reseed(uint64_t seed) override;
    GenerationResult generate(const BenchSample& sample,
                              const std::vector<InterventionSpec>& interventions,
                              StopPolicy stop_policy,
                              size_t max_tokens) override;
    GenerationResult replay(const BenchSample& sample,
                            const std::string& thinking_text,
                            const std::string& answer_text) override;

    const std::vector<float>& planted_direction() const { return planted_unit_; }
    const ToyParams& params() const { return params_; }

    // Whitespace tokenizer shared with token accounting elsewhere.
    static std::vector<std::string> tokenize(const std::string& text);
    static std::string detokenize(const std::vector<std::string>& words);

    // Prompt encoding is deterministic per sample; exposed for tests.
    std::vector<std::string> encode_prompt(const BenchSample& sample, SegmentMap& segmap) const;

private:
    struct LayerWeights {
        std::vector<float> wq, wk, wv, wo;  // [dim x dim], row-major
        std::vector<float> w1;              // [mlp x dim]
        std::vector<float> w2;              // [dim x mlp]
    };

    struct RunState {
        std::vector<std::vector<float>> k_cache;  // [layer][pos * dim]
        std::vector<std::vector<float>> v_cache;
        size_t positions = 0;
    };

    struct StepOutput {
        std::vector<std::vector<float>> hidden;     // post-attention, per layer
        std::vector<std::vector<float>> attention;  // head-averaged row, per layer
        std::vector<float> final_state;             // residual stream after last block
    };

    std::vector<float> token_embedding(const std::string& word) const;
    StepOutput forward_token(const std::string& word, size_t position, RunState& run,
                             const SegmentMap& segmap,
                             const std::vector<InterventionSpec>& interventions,
                             bool apply_interventions) const;
    double planted_projection(const std::vector<float>& state) const;
    double head_logit(const std::vector<float>& final_state, const std::string& word) const;

    GenerationResult run_sequence(const BenchSample& sample,
                                  const std::vector<std::string>& response_words,
                                  bool forced, const std::vector<InterventionSpec>& interventions,
                                  StopPolicy stop_policy, size_t max_tokens);

    ToyParams params_;
    uint64_t sample_seed_ = 0;
    std::vector<float> planted_unit_;
    std::vector<LayerWeights> layers_;
    std::string fingerprint_;
};

// Reference-backend factory.
std::unique_ptr<ToyDecoder> toy_decoder(uint64_t seed, std::vector<float> planted_direction = {},
                                        ToyParams params = {});

int toy_token_id(const std::string& word);

inline constexpr const char* kThinkOpen = "<think>";
inline constexpr const char* kThinkClose = "</think>";
inline constexpr const char* kWaitToken = "Wait";
inline constexpr const char* kEosToken = "<eos>";

}  // namespace rheval
