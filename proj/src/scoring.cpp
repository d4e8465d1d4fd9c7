#include "rheval/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace rheval {

using nlohmann::json;

const char* to_string(VerdictMode m) {
    return m == VerdictMode::reasoning_match ? "reasoning_match" : "perception_scored";
}

const char* to_string(VerdictState s) {
    return s == VerdictState::scored ? "scored" : "pending";
}

// ---------------------------------------------------------------- extraction

static bool is_option_label(char c, const std::vector<Option>& options) {
    for (const auto& o : options)
        if (o.label == c) return true;
    return false;
}

std::optional<char> extract_choice(const std::string& answer_text,
                                   const std::vector<Option>& options) {
    if (options.empty()) throw ScoringError("extract_choice: empty option set");

    // explicit tier: keyword-introduced labels and parenthesized labels
    static const std::regex keyword_re(
        R"((?:answer\s+is|final\s+answer|correct\s+(?:answer|option|choice)(?:\s+is)?|answer|option|choice\s+is|choose|pick|select(?:ed)?)\s*[:\-]?\s*\(?([A-Za-z])\)?(?![A-Za-z0-9]))",
        std::regex::icase);
    static const std::regex paren_re(R"(\(\s*([A-Za-z])\s*\))");

    long best_pos = -1;
    char best = 0;
    for (const std::regex* re : {&keyword_re, &paren_re}) {
        for (auto it = std::sregex_iterator(answer_text.begin(), answer_text.end(), *re);
             it != std::sregex_iterator(); ++it) {
            const char c = static_cast<char>(std::toupper(static_cast<unsigned char>((*it)[1].str()[0])));
            if (!is_option_label(c, options)) continue;
            const long pos = static_cast<long>(it->position(1));
            if (pos >= best_pos) {
                best_pos = pos;
                best = c;
            }
        }
    }
    if (best_pos >= 0) return best;

    // fallback tier: last standalone uppercase label
    for (long i = static_cast<long>(answer_text.size()) - 1; i >= 0; --i) {
        const char c = answer_text[static_cast<size_t>(i)];
        if (c < 'A' || c > 'Z' || !is_option_label(c, options)) continue;
        const bool left_ok =
            i == 0 || !std::isalnum(static_cast<unsigned char>(answer_text[static_cast<size_t>(i - 1)]));
        const bool right_ok =
            i + 1 == static_cast<long>(answer_text.size()) ||
            !std::isalnum(static_cast<unsigned char>(answer_text[static_cast<size_t>(i + 1)]));
        if (left_ok && right_ok) return c;
    }
    return std::nullopt;
}

// ------------------------------------------------------------------- rubric

static std::vector<std::string> normalized_tokens(const std::string& s) {
    std::vector<std::string> toks;
    std::string cur;
    for (char ch : s) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!cur.empty()) {
            toks.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) toks.push_back(cur);
    return toks;
}

static std::string normalized(const std::string& s) {
    auto toks = normalized_tokens(s);
    std::string out;
    for (const auto& t : toks) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

int MockJudge::rubric_score(const std::string& reference, const std::string& response) {
    const std::string ref = normalized(reference);
    const std::string rsp = normalized(response);
    if (ref.empty() && rsp.empty()) return 6;
    if (ref == rsp) return 6;
    if (!ref.empty() && !rsp.empty() &&
        (rsp.find(ref) != std::string::npos || ref.find(rsp) != std::string::npos))
        return 5;
    auto a = normalized_tokens(reference);
    auto b = normalized_tokens(response);
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    size_t inter = 0;
    for (const auto& t : sa)
        if (sb.count(t)) ++inter;
    const size_t uni = sa.size() + sb.size() - inter;
    const double jac = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    if (jac >= 0.75) return 4;
    if (jac >= 0.5) return 3;
    if (jac >= 0.25) return 2;
    if (jac > 0.0) return 1;
    return 0;
}

// ---------------------------------------------------------------- templates

static std::string single_line(const std::string& s) {
    std::string out = s;
    std::replace(out.begin(), out.end(), '\n', ' ');
    return out;
}

std::string reasoning_judge_prompt(const BenchSample& sample, const GenerationRecord& record) {
    std::ostringstream os;
    os << "[" << kJudgeVersion << ":reasoning]\n"
       << "Question: " << single_line(sample.question) << "\n"
       << "Reference answer: " << single_line(sample.ground_truth) << "\n"
       << "Model response: " << single_line(record.answer_text) << "\n"
       << "Decide whether the model response is consistent with the reference answer.\n"
       << "Reply with a single line: Consistent: yes or Consistent: no\n";
    return os.str();
}

std::string perception_judge_prompt(const BenchSample& sample, const GenerationRecord& record) {
    std::ostringstream os;
    os << "[" << kJudgeVersion << ":perception]\n"
       << "Question: " << single_line(sample.question) << "\n"
       << "Reference answer: " << single_line(sample.ground_truth) << "\n"
       << "Model response: " << single_line(record.answer_text) << "\n"
       << "Rate how faithfully the model response describes what the reference answer\n"
       << "describes, as an integer from 0 (entirely fabricated) to 6 (fully faithful).\n"
       << "Reply with a single line: Score: <integer>\n";
    return os.str();
}

// ------------------------------------------------------------------- judges

static std::string prompt_field(const std::string& prompt, const std::string& field) {
    std::istringstream is(prompt);
    std::string line;
    const std::string prefix = field + ": ";
    while (std::getline(is, line))
        if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
    throw ScoringError("mock judge: prompt lacks field '" + field + "'");
}

std::string MockJudge::complete(const std::string& prompt) {
    const std::string reference = prompt_field(prompt, "Reference answer");
    const std::string response = prompt_field(prompt, "Model response");
    const int score = rubric_score(reference, response);
    if (prompt.rfind(std::string("[") + kJudgeVersion + ":reasoning]", 0) == 0)
        return score >= 4 ? "Consistent: yes" : "Consistent: no";
    return "Score: " + std::to_string(score);
}

HttpJudge::HttpJudge(HttpJudgeConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) throw JudgeUnavailable("judge endpoint not configured");
}

HttpJudge HttpJudge::from_env() {
    HttpJudgeConfig cfg;
    if (const char* ep = std::getenv("JUDGE_ENDPOINT")) cfg.endpoint = ep;
    if (const char* key = std::getenv("JUDGE_API_KEY")) cfg.api_key = key;
    if (cfg.endpoint.empty())
        throw JudgeUnavailable("JUDGE_ENDPOINT is not set; use the mock judge for offline runs");
    return HttpJudge(cfg);
}

static std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const auto scheme = endpoint.find("://");
    const size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = endpoint.find('/', host_start);
    if (slash == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

std::string HttpJudge::complete(const std::string& prompt) {
    const auto [base, path] = split_endpoint(cfg_.endpoint);
    httplib::Client cli(base);
    cli.set_connection_timeout(5, 0);
    cli.set_read_timeout(30, 0);
    httplib::Headers headers;
    if (!cfg_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    json body;
    body["model"] = cfg_.model;
    body["prompt"] = prompt;
    const std::string payload = body.dump();

    int backoff = cfg_.backoff_ms;
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        auto res = cli.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        try {
            json reply = json::parse(res->body);
            return reply.at("reply").get<std::string>();
        } catch (const std::exception& e) {
            throw ScoringError(std::string("judge reply was not valid JSON with a 'reply' field: ") +
                               e.what());
        }
    }
    throw JudgeUnavailable("judge endpoint unreachable after " +
                           std::to_string(cfg_.max_attempts) + " attempts: " + last_error);
}

// ------------------------------------------------------------------ verdicts

void JudgeVerdict::validate() const {
    if (state == VerdictState::pending) return;
    if (mode == VerdictMode::perception_scored) {
        if (score < 0 || score > 6)
            throw ScoringError("verdict for " + sample_id + ": score out of range");
        if (hallucination != (score < kHallucinationThreshold))
            throw ScoringError("verdict for " + sample_id +
                               ": hallucination flag contradicts the score threshold");
    }
}

JudgeVerdict parse_judge_reply(VerdictMode mode, const std::string& reply) {
    JudgeVerdict v;
    v.mode = mode;
    v.state = VerdictState::scored;
    if (mode == VerdictMode::reasoning_match) {
        static const std::regex re(R"(Consistent\s*:\s*(yes|no))", std::regex::icase);
        std::smatch m, last;
        auto begin = std::sregex_iterator(reply.begin(), reply.end(), re);
        for (auto it = begin; it != std::sregex_iterator(); ++it) last = *it;
        if (last.empty())
            throw ScoringError("judge reply lacks a 'Consistent: yes|no' line: " + reply);
        std::string word = last[1].str();
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        v.consistent = word == "yes";
        return v;
    }
    static const std::regex re(R"(Score\s*:\s*(-?\d+))", std::regex::icase);
    std::smatch last;
    for (auto it = std::sregex_iterator(reply.begin(), reply.end(), re);
         it != std::sregex_iterator(); ++it)
        last = *it;
    if (last.empty()) throw ScoringError("judge reply lacks a 'Score: <n>' line: " + reply);
    const int score = std::stoi(last[1].str());
    if (score < 0 || score > 6)
        throw ScoringError("judge reply score " + std::to_string(score) + " outside 0..6");
    v.score = score;
    v.hallucination = score < kHallucinationThreshold;
    return v;
}

JudgeVerdict judge_open_ended(const BenchSample& sample, const GenerationRecord& record,
                              JudgeClient& client) {
    if (sample.format != Format::open_ended)
        throw ScoringError("judge_open_ended: sample " + sample.id + " is multiple choice");

    const VerdictMode mode = sample.task == Task::reasoning ? VerdictMode::reasoning_match
                                                            : VerdictMode::perception_scored;
    JudgeVerdict v;
    v.sample_id = sample.id;
    v.mode = mode;
    v.judge_version = kJudgeVersion;

    if (mode == VerdictMode::reasoning_match &&
        normalized(record.answer_text) == normalized(sample.ground_truth) &&
        !normalized(sample.ground_truth).empty()) {
        v.judge_model = "exact-match";
        v.prompt = reasoning_judge_prompt(sample, record);
        v.reply = "Consistent: yes";
        v.consistent = true;
        v.state = VerdictState::scored;
        v.validate();
        return v;
    }

    v.prompt = mode == VerdictMode::reasoning_match ? reasoning_judge_prompt(sample, record)
                                                    : perception_judge_prompt(sample, record);
    v.judge_model = client.name();
    try {
        v.reply = client.complete(v.prompt);
        JudgeVerdict parsed = parse_judge_reply(mode, v.reply);
        v.state = VerdictState::scored;
        v.consistent = parsed.consistent;
        v.score = parsed.score;
        v.hallucination = parsed.hallucination;
    } catch (const JudgeUnavailable&) {
        v.state = VerdictState::pending;
    } catch (const ScoringError&) {
        // reply preserved for manual review
        v.state = VerdictState::pending;
    }
    v.validate();
    return v;
}

JudgeVerdict replay_verdict(const JudgeVerdict& stored) {
    if (stored.state == VerdictState::pending) return stored;
    JudgeVerdict parsed = parse_judge_reply(stored.mode, stored.reply);
    JudgeVerdict v = stored;
    v.consistent = parsed.consistent;
    v.score = parsed.score;
    v.hallucination = parsed.hallucination;
    v.validate();
    return v;
}

std::string verdict_to_json(const JudgeVerdict& v) {
    json j;
    j["sample_id"] = v.sample_id;
    j["mode"] = to_string(v.mode);
    j["state"] = to_string(v.state);
    if (v.mode == VerdictMode::reasoning_match) {
        j["consistent"] = v.consistent;
    } else {
        j["score"] = v.score;
        j["hallucination"] = v.hallucination;
    }
    j["judge_model"] = v.judge_model;
    j["judge_version"] = v.judge_version;
    j["prompt"] = v.prompt;
    j["reply"] = v.reply;
    return j.dump();
}

JudgeVerdict verdict_from_json(const std::string& line) {
    json j = json::parse(line);
    JudgeVerdict v;
    v.sample_id = j.at("sample_id").get<std::string>();
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "reasoning_match") v.mode = VerdictMode::reasoning_match;
    else if (mode == "perception_scored") v.mode = VerdictMode::perception_scored;
    else throw ScoringError("unknown verdict mode: " + mode);
    const std::string state = j.at("state").get<std::string>();
    if (state == "scored") v.state = VerdictState::scored;
    else if (state == "pending") v.state = VerdictState::pending;
    else throw ScoringError("unknown verdict state: " + state);
    if (v.mode == VerdictMode::reasoning_match) {
        v.consistent = j.value("consistent", false);
    } else {
        v.score = j.value("score", 0);
        v.hallucination = j.value("hallucination", false);
    }
    v.judge_model = j.value("judge_model", "");
    v.judge_version = j.value("judge_version", "");
    v.prompt = j.value("prompt", "");
    v.reply = j.value("reply", "");
    v.validate();
    return v;
}

std::vector<JudgeVerdict> read_verdicts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScoringError("cannot open verdict file: " + path);
    std::vector<JudgeVerdict> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(verdict_from_json(line));
        } catch (const std::exception& e) {
            throw ScoringError(path + ":" + std::to_string(lineno) + ": malformed verdict: " +
                               e.what());
        }
    }
    return out;
}

void append_verdicts(const std::string& path, const std::vector<JudgeVerdict>& vs) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw ScoringError("cannot append to verdict file: " + path);
    for (const auto& v : vs) out << verdict_to_json(v) << "\n";
}

// ---------------------------------------------------------------- aggregate

AccuracyResult accuracy(const std::vector<ScoredItem>& items, Task task) {
    AccuracyResult res;
    size_t hits = 0;
    for (const auto& it : items) {
        if (it.task != task) continue;
        if (it.pending) {
            ++res.pending;
            continue;
        }
        ++res.scored;
        if (task == Task::reasoning ? it.correct : !it.hallucination) ++hits;
    }
    if (res.scored == 0)
        throw ScoringError(std::string("accuracy: no scored ") + to_string(task) +
                           " items (" + std::to_string(res.pending) + " pending)");
    res.value = static_cast<double>(hits) / static_cast<double>(res.scored);
    return res;
}

ScoreOutput score_records(const Corpus& corpus, const std::vector<GenerationRecord>& records,
                          JudgeClient& client) {
    ScoreOutput out;
    out.items.reserve(records.size());
    for (const auto& rec : records) {
        const BenchSample& sample = corpus.at(rec.sample_id);
        ScoredItem item;
        item.sample_id = sample.id;
        item.task = sample.task;
        if (sample.format == Format::multiple_choice) {
            auto label = extract_choice(rec.answer_text, sample.options);
            item.correct = label.has_value() && sample.ground_truth.size() == 1 &&
                           *label == sample.ground_truth[0];
            if (sample.task == Task::perception) item.hallucination = !item.correct;
        } else {
            JudgeVerdict v = judge_open_ended(sample, rec, client);
            out.verdicts.push_back(v);
            if (v.state == VerdictState::pending) {
                item.pending = true;
            } else if (v.mode == VerdictMode::reasoning_match) {
                item.correct = v.consistent;
            } else {
                item.hallucination = v.hallucination;
                item.correct = !v.hallucination;
            }
        }
        out.items.push_back(std::move(item));
    }
    return out;
}

}  // namespace rheval
