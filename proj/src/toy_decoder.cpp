#include "rheval/toy_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <sstream>
#include <stdexcept>

#include "rheval/common.hpp"

namespace rheval {

namespace {

constexpr uint64_t kEmbeddingSalt = 0x746f6b656d626564ull;
constexpr float kEmbedScale = 1.0f;
constexpr float kPosScale = 0.04f;
constexpr double kHeadScale = 0.12;

const std::vector<std::string>& thinking_lexicon() {
    static const std::vector<std::string> words = {
        "hmm",      "so",      "let",     "me",      "look",    "at",
        "the",      "figure",  "count",   "check",   "again",   "therefore",
        "consider", "first",   "then",    "maybe",   "actually", "wait",
        "area",     "edge",    "left",    "right",   "top",     "bottom",
        "compare",  "recount", "verify",  "because", "thus",    "still",
        "part",     "whole",
    };
    return words;
}

const std::vector<std::string>& distractor_lexicon() {
    static const std::vector<std::string> words = {
        "something", "unclear", "blurry", "object", "nothing", "shape",
    };
    return words;
}

void matvec(const std::vector<float>& m, const std::vector<float>& x, std::vector<float>& out,
            int rows, int cols) {
    out.assign(rows, 0.0f);
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        const float* row = m.data() + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * x[c];
        out[r] = static_cast<float>(acc);
    }
}

std::vector<float> rmsnorm(const std::vector<float>& x) {
    double ss = 0.0;
    for (float v : x) ss += static_cast<double>(v) * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + 1e-6);
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] * inv);
    return out;
}

float silu(float v) { return v / (1.0f + std::exp(-v)); }

std::vector<float> random_matrix(std::mt19937_64& rng, int rows, int cols, double sigma) {
    std::vector<float> m(static_cast<size_t>(rows) * cols);
    for (auto& v : m) v = static_cast<float>(normal_double(rng) * sigma);
    return m;
}

}  // namespace

int toy_token_id(const std::string& word) {
    return static_cast<int>(fnv1a64(word) & 0x7fffffff);
}

std::vector<std::string> ToyDecoder::tokenize(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream in(text);
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

std::string ToyDecoder::detokenize(const std::vector<std::string>& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

ToyDecoder::ToyDecoder(uint64_t seed, std::vector<float> planted_direction, ToyParams params)
    : params_(params), sample_seed_(seed) {
    const int dim = params_.hidden_dim;
    if (planted_direction.empty()) {
        std::mt19937_64 rng(splitmix64(params_.weights_seed ^ 0xd19e5));
        planted_direction.resize(dim);
        for (auto& v : planted_direction) v = static_cast<float>(normal_double(rng));
    }
    if (static_cast<int>(planted_direction.size()) != dim) {
        throw std::invalid_argument("toy decoder: planted direction has " +
                                    std::to_string(planted_direction.size()) +
                                    " entries, hidden_dim is " + std::to_string(dim));
    }
    double norm = 0.0;
    for (float v : planted_direction) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw std::invalid_argument("toy decoder: planted direction must be finite and nonzero");
    }
    planted_unit_.resize(dim);
    for (int i = 0; i < dim; ++i) {
        planted_unit_[i] = static_cast<float>(planted_direction[i] / norm);
    }

    std::mt19937_64 rng(splitmix64(params_.weights_seed));
    const double attn_sigma = 0.08;
    const double out_sigma = 0.5 * attn_sigma / std::sqrt(2.0 * params_.layers);
    const double mlp_sigma = 0.10;
    const double mlp_out_sigma = 0.5 * mlp_sigma / std::sqrt(2.0 * params_.layers);
    layers_.resize(params_.layers);
    for (auto& lw : layers_) {
        lw.wq = random_matrix(rng, dim, dim, attn_sigma);
        lw.wk = random_matrix(rng, dim, dim, attn_sigma);
        lw.wv = random_matrix(rng, dim, dim, attn_sigma);
        lw.wo = random_matrix(rng, dim, dim, out_sigma);
        lw.w1 = random_matrix(rng, params_.mlp_dim, dim, mlp_sigma);
        lw.w2 = random_matrix(rng, dim, params_.mlp_dim, mlp_out_sigma);
    }

    uint64_t fp = fnv1a64("toy-v1");
    fp = splitmix64(fp ^ params_.weights_seed);
    fp = splitmix64(fp ^ static_cast<uint64_t>(params_.layers));
    fp = splitmix64(fp ^ static_cast<uint64_t>(params_.hidden_dim));
    fingerprint_ = "toy-v1-" + hex64(fp);
}

std::unique_ptr<ToyDecoder> toy_decoder(uint64_t seed, std::vector<float> planted_direction,
                                        ToyParams params) {
    return std::make_unique<ToyDecoder>(seed, std::move(planted_direction), params);
}

BackendInfo ToyDecoder::describe() const {
    BackendInfo info;
    info.layer_count = params_.layers;
    info.hidden_dim = params_.hidden_dim;
    info.think_open = kThinkOpen;
    info.think_close = kThinkClose;
    info.wait_token = kWaitToken;
    info.fingerprint = fingerprint_;
    return info;
}

void ToyDecoder::reseed(uint64_t seed) { sample_seed_ = seed; }

std::vector<float> ToyDecoder::token_embedding(const std::string& word) const {
    std::mt19937_64 rng(mix_seed(params_.weights_seed ^ kEmbeddingSalt, word));
    std::vector<float> e(params_.hidden_dim);
    for (auto& v : e) v = static_cast<float>(normal_double(rng) * 0.28);
    // each word carries a fixed component along the planted unit, so sampled
    // continuations move the projection the close and visual mechanisms read
    const double c = normal_double(rng) * params_.embed_planted_sd;
    for (int i = 0; i < params_.hidden_dim; ++i)
        e[static_cast<size_t>(i)] += static_cast<float>(c * planted_unit_[static_cast<size_t>(i)]);
    return e;
}

double ToyDecoder::planted_projection(const std::vector<float>& state) const {
    double p = 0.0;
    for (int i = 0; i < params_.hidden_dim; ++i) {
        p += static_cast<double>(state[i]) * planted_unit_[i];
    }
    return p;
}

double ToyDecoder::head_logit(const std::vector<float>& final_state,
                              const std::string& word) const {
    const std::vector<float> normed = rmsnorm(final_state);
    const std::vector<float> emb = token_embedding(word);
    double dot = 0.0;
    for (int i = 0; i < params_.hidden_dim; ++i) {
        dot += static_cast<double>(normed[i]) * emb[i];
    }
    return dot * kHeadScale;
}

std::vector<std::string> ToyDecoder::encode_prompt(const BenchSample& sample,
                                                   SegmentMap& segmap) const {
    std::vector<std::string> words;
    words.push_back("system");
    words.push_back("prompt");
    const size_t sys_end = words.size();

    size_t n_visual = 0;
    if (sample.image_ref) {
        const std::string& ref = *sample.image_ref;
        if (ref.rfind("toy://", 0) == 0) {
            n_visual = static_cast<size_t>(std::strtoul(ref.c_str() + 6, nullptr, 10));
        } else {
            n_visual = 4 + (fnv1a64(ref) % 5);
        }
    }
    for (size_t i = 0; i < n_visual; ++i) {
        words.push_back("<img_" + std::to_string(i) + ">");
    }
    const size_t vis_end = words.size();

    for (const auto& w : tokenize(sample.question)) words.push_back(w);
    for (const auto& opt : sample.options) {
        words.push_back(std::string(1, opt.label) + ":");
        for (const auto& w : tokenize(opt.text)) words.push_back(w);
    }
    const size_t instr_end = words.size();

    segmap.ranges[Segment::system] = {0, sys_end};
    segmap.ranges[Segment::visual] = {sys_end, vis_end};
    segmap.ranges[Segment::instruction] = {vis_end, instr_end};
    segmap.ranges[Segment::response] = {instr_end, instr_end};
    segmap.prompt_len = instr_end;
    segmap.total_len = instr_end;
    return words;
}

ToyDecoder::StepOutput ToyDecoder::forward_token(
    const std::string& word, size_t position, RunState& run, const SegmentMap& segmap,
    const std::vector<InterventionSpec>& interventions, bool apply_interventions) const {
    const int dim = params_.hidden_dim;
    const int heads = params_.heads;
    const int dh = dim / heads;
    const TokenInterval visual = segmap.ranges.at(Segment::visual);

    std::vector<float> x = token_embedding(word);
    for (int i = 0; i < dim; ++i) {
        x[i] *= kEmbedScale;
        const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
        const double angle = static_cast<double>(position) * rate;
        x[i] += kPosScale * static_cast<float>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }

    StepOutput out;
    out.hidden.resize(params_.layers);
    out.attention.resize(params_.layers);

    std::vector<float> q, k, v, h, attn_concat, mlp_in, mlp_hidden, mlp_out;
    for (int l = 0; l < params_.layers; ++l) {
        const LayerWeights& lw = layers_[l];
        const std::vector<float> xin = x;
        h = rmsnorm(x);
        matvec(lw.wq, h, q, dim, dim);
        matvec(lw.wk, h, k, dim, dim);
        matvec(lw.wv, h, v, dim, dim);
        auto& kc = run.k_cache[l];
        auto& vc = run.v_cache[l];
        kc.insert(kc.end(), k.begin(), k.end());
        vc.insert(vc.end(), v.begin(), v.end());

        const double proj_in = planted_projection(xin);
        const double vis_bias =
            params_.visual_bias_base - params_.visual_bias_slope * proj_in;

        const size_t n_pos = position + 1;
        std::vector<double> row_mean(n_pos, 0.0);
        attn_concat.assign(dim, 0.0f);
        std::vector<double> logits(n_pos);
        std::vector<double> weights(n_pos);
        for (int hh = 0; hh < heads; ++hh) {
            const int off = hh * dh;
            for (size_t j = 0; j < n_pos; ++j) {
                const float* kj = kc.data() + j * dim + off;
                double dot = 0.0;
                for (int c = 0; c < dh; ++c) dot += static_cast<double>(q[off + c]) * kj[c];
                logits[j] = dot / std::sqrt(static_cast<double>(dh));
                if (visual.contains(j)) logits[j] += vis_bias;
            }
            double max_logit = logits[0];
            for (double lg : logits) max_logit = std::max(max_logit, lg);
            double total = 0.0;
            for (size_t j = 0; j < n_pos; ++j) {
                weights[j] = std::exp(logits[j] - max_logit);
                total += weights[j];
            }
            for (size_t j = 0; j < n_pos; ++j) {
                const double w = weights[j] / total;
                row_mean[j] += w / heads;
                const float* vj = vc.data() + j * dim + off;
                for (int c = 0; c < dh; ++c) {
                    attn_concat[off + c] += static_cast<float>(w * vj[c]);
                }
            }
        }

        matvec(lw.wo, attn_concat, mlp_in, dim, dim);  // reuse buffer for attn output
        for (int i = 0; i < dim; ++i) x[i] = xin[i] + mlp_in[i];

        if (apply_interventions) {
            for (const auto& iv : interventions) {
                if (iv.layer != l || iv.scale == 0.0) continue;
                for (int i = 0; i < dim; ++i) {
                    x[i] += static_cast<float>(iv.scale * iv.direction[i]);
                }
            }
        }

        out.hidden[l] = x;
        out.attention[l].assign(n_pos, 0.0f);
        for (size_t j = 0; j < n_pos; ++j) {
            out.attention[l][j] = static_cast<float>(row_mean[j]);
        }

        mlp_in = rmsnorm(x);
        matvec(lw.w1, mlp_in, mlp_hidden, params_.mlp_dim, dim);
        for (auto& mv : mlp_hidden) mv = silu(mv);
        matvec(lw.w2, mlp_hidden, mlp_out, dim, params_.mlp_dim);
        for (int i = 0; i < dim; ++i) x[i] += mlp_out[i];
    }
    out.final_state = x;
    return out;
}

GenerationResult ToyDecoder::generate(const BenchSample& sample,
                                      const std::vector<InterventionSpec>& interventions,
                                      StopPolicy stop_policy, size_t max_tokens) {
    if (max_tokens < 1) throw std::invalid_argument("generate: max_tokens must be >= 1");
    check_interventions(describe(), interventions);
    if (!stop_policy) stop_policy = natural_stop_policy();

    GenerationResult result;
    std::vector<std::string> prompt = encode_prompt(sample, result.segmap);
    RunState run;
    run.k_cache.assign(params_.layers, {});
    run.v_cache.assign(params_.layers, {});

    std::vector<float> last_final;
    for (size_t p = 0; p < prompt.size(); ++p) {
        StepOutput so = forward_token(prompt[p], p, run, result.segmap, interventions, false);
        last_final = std::move(so.final_state);
    }

    std::mt19937_64 rng(splitmix64(sample_seed_));

    const bool is_reasoning = sample.task == Task::reasoning;
    const double peak =
        is_reasoning ? params_.answer_peak_reasoning : params_.answer_peak_perception;
    const double width =
        is_reasoning ? params_.answer_width_reasoning : params_.answer_width_perception;

    std::vector<std::string> span_words;    // thinking content, waits included
    std::vector<std::string> answer_words;  // after close, eos excluded
    std::deque<std::string> script;         // forced continuation
    bool in_thinking = false;
    bool thinking_closed = false;
    bool decision_pending = false;
    bool done = false;

    const auto& lexicon = thinking_lexicon();

    for (size_t ri = 0; ri < max_tokens && !done; ++ri) {
        // Pick the candidate token for this step.
        std::string candidate;
        if (ri == 0) {
            candidate = kThinkOpen;
        } else if (!script.empty()) {
            candidate = script.front();
        } else if (decision_pending) {
            const double n_think = static_cast<double>(span_words.size());
            const double quality = std::exp(-((n_think - peak) * (n_think - peak)) /
                                            (2.0 * width * width));
            const double logits[2] = {params_.answer_gain * quality - params_.answer_offset, 0.0};
            const bool correct = sample_logits(rng, std::span<const double>(logits, 2), 1.0) == 0;
            if (sample.format == Format::multiple_choice) {
                if (correct) {
                    script.push_back(sample.ground_truth);
                } else {
                    std::vector<char> others;
                    for (const auto& o : sample.options) {
                        if (std::string(1, o.label) != sample.ground_truth) {
                            others.push_back(o.label);
                        }
                    }
                    const char pick = others.empty()
                                          ? sample.ground_truth[0]
                                          : others[sample_uniform_index(rng, others.size())];
                    script.push_back(std::string(1, pick));
                }
            } else {
                if (correct) {
                    for (const auto& w : tokenize(sample.ground_truth)) script.push_back(w);
                } else {
                    const auto& dl = distractor_lexicon();
                    script.push_back(dl[sample_uniform_index(rng, dl.size())]);
                }
            }
            script.push_back(kEosToken);
            decision_pending = false;
            candidate = script.front();
        } else if (in_thinking) {
            std::vector<double> logits(lexicon.size() + 1);
            for (size_t i = 0; i < lexicon.size(); ++i) {
                logits[i] = head_logit(last_final, lexicon[i]);
            }
            logits.back() = params_.close_logit_base -
                            params_.close_logit_slope * planted_projection(last_final);
            const size_t pick = sample_logits(rng, logits, params_.temperature);
            candidate = pick < lexicon.size() ? lexicon[pick] : kThinkClose;
        } else {
            candidate = kEosToken;  // nothing left to say
        }

        StepView view;
        view.response_index = ri;
        view.thinking_tokens = span_words.size();
        view.in_thinking = in_thinking;
        view.thinking_closed = thinking_closed;
        view.candidate_is_open = candidate == kThinkOpen;
        view.candidate_is_close = candidate == kThinkClose;
        view.candidate_is_wait = candidate == kWaitToken;
        view.candidate_is_eos = candidate == kEosToken;
        view.candidate_is_content = in_thinking && !view.candidate_is_close &&
                                    !view.candidate_is_wait && !view.candidate_is_eos;

        std::string committed;
        switch (stop_policy(view)) {
            case TokenDecision::accept: committed = candidate; break;
            case TokenDecision::replace_close: committed = kThinkClose; break;
            case TokenDecision::replace_wait: committed = kWaitToken; break;
            case TokenDecision::halt: done = true; break;
        }
        if (done) break;
        if (committed == candidate && !script.empty() && script.front() == candidate) {
            script.pop_front();
        } else if (committed != candidate) {
            script.clear();  // a replacement abandons any scripted continuation
        }

        const size_t pos = result.segmap.prompt_len + result.token_ids.size();
        StepOutput so = forward_token(committed, pos, run, result.segmap, interventions, true);
        last_final = std::move(so.final_state);

        StepTrace trace;
        trace.token_id = toy_token_id(committed);
        trace.position = pos;
        trace.hidden = std::move(so.hidden);
        trace.attention = std::move(so.attention);
        result.traces.push_back(std::move(trace));
        result.token_ids.push_back(toy_token_id(committed));
        result.segmap.total_len = pos + 1;
        result.segmap.ranges[Segment::response].end = pos + 1;

        if (committed == kThinkOpen) {
            in_thinking = true;
        } else if (committed == kThinkClose && in_thinking) {
            in_thinking = false;
            thinking_closed = true;
            script.assign({"the", "answer", "is"});
            decision_pending = true;
        } else if (committed == kEosToken) {
            done = true;
        } else if (in_thinking) {
            span_words.push_back(committed);
        } else if (thinking_closed && committed != kThinkClose) {
            answer_words.push_back(committed);
        }

        if (committed != kEosToken) {
            if (!result.text.empty()) result.text += ' ';
            result.text += committed;
        }
    }

    result.thinking_text = detokenize(span_words);
    result.answer_text = detokenize(answer_words);
    result.thinking_token_count = span_words.size();
    result.answer_token_count = answer_words.size();
    return result;
}

GenerationResult ToyDecoder::replay(const BenchSample& sample, const std::string& thinking_text,
                                    const std::string& answer_text) {
    GenerationResult result;
    std::vector<std::string> prompt = encode_prompt(sample, result.segmap);
    RunState run;
    run.k_cache.assign(params_.layers, {});
    run.v_cache.assign(params_.layers, {});
    for (size_t p = 0; p < prompt.size(); ++p) {
        forward_token(prompt[p], p, run, result.segmap, {}, false);
    }

    std::vector<std::string> span_words = tokenize(thinking_text);
    std::vector<std::string> answer_words = tokenize(answer_text);
    std::vector<std::string> response;
    response.push_back(kThinkOpen);
    response.insert(response.end(), span_words.begin(), span_words.end());
    response.push_back(kThinkClose);
    response.insert(response.end(), answer_words.begin(), answer_words.end());
    response.push_back(kEosToken);  // finished runs always commit the terminator

    for (const auto& word : response) {
        const size_t pos = result.segmap.prompt_len + result.token_ids.size();
        StepOutput so = forward_token(word, pos, run, result.segmap, {}, false);
        StepTrace trace;
        trace.token_id = toy_token_id(word);
        trace.position = pos;
        trace.hidden = std::move(so.hidden);
        trace.attention = std::move(so.attention);
        result.traces.push_back(std::move(trace));
        result.token_ids.push_back(toy_token_id(word));
        result.segmap.total_len = pos + 1;
        result.segmap.ranges[Segment::response].end = pos + 1;
        if (word != kEosToken) {
            if (!result.text.empty()) result.text += ' ';
            result.text += word;
        }
    }

    result.thinking_text = detokenize(span_words);
    result.answer_text = detokenize(answer_words);
    result.thinking_token_count = span_words.size();
    result.answer_token_count = answer_words.size();
    return result;
}

}  // namespace rheval
