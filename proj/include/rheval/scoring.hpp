#pragma once

// Turns raw generations into correctness and hallucination labels: answer
// extraction for multiple-choice items, judge-based scoring for open-ended
// ones, and aggregation to per-task accuracies.

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rheval/corpus.hpp"
#include "rheval/records.hpp"

namespace rheval {

inline constexpr const char* kJudgeVersion = "judge-v1";
inline constexpr int kHallucinationThreshold = 3;  // score below this = hallucination

struct ScoringError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct JudgeUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Extracts the chosen option label from free-form answer text. Explicit
// patterns ("the answer is B", "(C)", "option D") are preferred over bare
// standalone labels; within a tier the last occurrence wins. Returns nullopt
// when nothing parses; callers count that as incorrect, never as an error.
std::optional<char> extract_choice(const std::string& answer_text,
                                   const std::vector<Option>& options);

enum class VerdictMode { reasoning_match, perception_scored };
enum class VerdictState { scored, pending };

const char* to_string(VerdictMode m);
const char* to_string(VerdictState s);

struct JudgeVerdict {
    std::string sample_id;
    VerdictMode mode = VerdictMode::reasoning_match;
    VerdictState state = VerdictState::scored;
    bool consistent = false;     // reasoning_match
    int score = 0;               // perception_scored, 0..6
    bool hallucination = false;  // perception_scored
    std::string judge_model;
    std::string judge_version;
    std::string prompt;          // audit trail
    std::string reply;

    void validate() const;  // enforces the hallucination threshold invariant
};

std::string verdict_to_json(const JudgeVerdict& v);
JudgeVerdict verdict_from_json(const std::string& line);
std::vector<JudgeVerdict> read_verdicts(const std::string& path);
void append_verdicts(const std::string& path, const std::vector<JudgeVerdict>& vs);

// A judge client returns the raw reply text for a prompt, or throws
// JudgeUnavailable when the backend cannot be reached.
class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual std::string name() const = 0;
    virtual std::string complete(const std::string& prompt) = 0;
};

// Deterministic offline judge: recovers the reference and response from the
// prompt and scores them with a fixed lexical rubric (exact 6, containment 5,
// then token-overlap tiers down to 0). Used by tests and local runs.
class MockJudge : public JudgeClient {
public:
    std::string name() const override { return "mock"; }
    std::string complete(const std::string& prompt) override;

    static int rubric_score(const std::string& reference, const std::string& response);
};

struct HttpJudgeConfig {
    std::string endpoint;  // e.g. http://host:port/score
    std::string api_key;
    std::string model = "judge";
    int max_attempts = 3;
    int backoff_ms = 250;  // doubles per retry
};

// Live judge over HTTP: POSTs {"model", "prompt"} as JSON, expects
// {"reply": "..."}. Endpoint and key come from JUDGE_ENDPOINT and
// JUDGE_API_KEY when built via from_env.
class HttpJudge : public JudgeClient {
public:
    explicit HttpJudge(HttpJudgeConfig cfg);
    static HttpJudge from_env();

    std::string name() const override { return cfg_.model; }
    std::string complete(const std::string& prompt) override;

private:
    HttpJudgeConfig cfg_;
};

std::string reasoning_judge_prompt(const BenchSample& sample, const GenerationRecord& record);
std::string perception_judge_prompt(const BenchSample& sample, const GenerationRecord& record);

// Parses a raw judge reply ("Consistent: yes" / "Score: 4") for the given
// mode. Throws ScoringError on an unparseable reply.
JudgeVerdict parse_judge_reply(VerdictMode mode, const std::string& reply);

// Scores one open-ended record. Reasoning items short-circuit on normalized
// exact match without a judge call; otherwise the judge is consulted with
// retry + backoff, and persistent failure yields a pending verdict.
JudgeVerdict judge_open_ended(const BenchSample& sample, const GenerationRecord& record,
                              JudgeClient& client);

// Rebuilds the scored fields of a verdict from its stored raw reply; replays
// must reproduce persisted verdicts exactly.
JudgeVerdict replay_verdict(const JudgeVerdict& stored);

// One record's contribution to accuracy, same shape for MCQ and judged items.
struct ScoredItem {
    std::string sample_id;
    Task task = Task::reasoning;
    bool pending = false;
    bool correct = false;        // reasoning items and MCQ matches
    bool hallucination = false;  // perception items
};

struct AccuracyResult {
    double value = 0.0;
    size_t scored = 0;
    size_t pending = 0;
};

// Reasoning accuracy = fraction correct; perception accuracy = fraction not
// hallucinated. Pending items are excluded and counted, never treated as
// wrong. Throws ScoringError when nothing scorable remains.
AccuracyResult accuracy(const std::vector<ScoredItem>& items, Task task);

struct ScoreOutput {
    std::vector<ScoredItem> items;
    std::vector<JudgeVerdict> verdicts;  // open-ended records only
};

// Full scoring pass over a record set. MCQ items go through extract_choice
// (a wrong pick on a perception item counts as a hallucinated percept);
// open-ended items go through the judge.
ScoreOutput score_records(const Corpus& corpus, const std::vector<GenerationRecord>& records,
                          JudgeClient& client);

}  // namespace rheval
