#pragma once

// End-to-end orchestration: corpus -> length-controlled sweeps -> scoring ->
// balance curves -> reports, with a content-addressed store and resumability.

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rheval/attention.hpp"
#include "rheval/backend.hpp"
#include "rheval/corpus.hpp"
#include "rheval/length_control.hpp"
#include "rheval/metric.hpp"
#include "rheval/records.hpp"
#include "rheval/scoring.hpp"
#include "rheval/steering.hpp"

namespace rheval {

struct HarnessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string corpus_path;
    std::string backend = "toy";
    uint64_t seed = 1;
    std::vector<LengthControl> grid;
    std::string judge = "mock";
    std::string out_dir;
    int workers = 4;
    size_t max_tokens = 512;
    std::string directions_path;    // required when the grid steers
    bool attention_profiles = true; // mean profile per grid point

    void validate() const;
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

// Flat content-addressed file store for one run. Cell files are named by the
// hash of (grid tag, sample id, seed); writes go through a temp file + rename
// and existing cells are never rewritten, which is what makes interrupted
// sweeps resumable and reruns byte-identical.
class RunStore {
public:
    explicit RunStore(std::string root);

    const std::string& root() const { return root_; }

    // Creates the layout and writes the manifest, or verifies the manifest of
    // an existing store matches. A store never changes config mid-life.
    void init(const std::string& manifest_json);
    std::string manifest() const;

    static std::string cell_key(const std::string& grid_tag, const std::string& sample_id,
                                uint64_t seed);

    bool has_record(const std::string& key) const;
    void put_record(const std::string& key, const GenerationRecord& rec);
    GenerationRecord get_record(const std::string& key) const;

    bool has_verdict(const std::string& key) const;
    void put_verdicts(const std::string& key, const std::vector<JudgeVerdict>& vs);
    std::vector<JudgeVerdict> get_verdicts(const std::string& key) const;

    void put_curve(const BalanceCurve& curve);
    std::optional<BalanceCurve> get_curve() const;

    void put_profile(const std::string& grid_tag, const AttentionProfile& profile);
    std::vector<std::pair<std::string, AttentionProfile>> list_profiles() const;

    std::string report_dir() const;

private:
    std::string root_;
    void atomic_write(const std::string& path, const std::string& content) const;
};

struct GridPointOutcome {
    std::string control_tag;
    bool complete = false;   // every cell generated and scored
    bool withheld = false;   // pending verdicts kept the point off the curve
    std::string error;       // first backend failure, when any
    std::optional<BalancePoint> point;
};

struct SweepResult {
    std::string store_root;
    BalanceCurve curve;  // complete grid points only, grid order
    std::vector<GridPointOutcome> outcomes;
    bool aborted = false;  // should_stop fired before the sweep finished
};

using StopFlag = std::function<bool()>;

// Runs the full sweep described by cfg. Grid points run sequentially; samples
// within a grid point run on a bounded worker pool. Completed cells are
// skipped on restart. should_stop is polled between cells; when it returns
// true the sweep stops claiming work, finishes in-flight cells, and returns
// with aborted = true (no curve is written).
SweepResult run_sweep(const RunConfig& cfg, const StopFlag& should_stop = nullptr);

struct PeakResult {
    size_t index = 0;       // into the T-sorted series
    double t = 0.0;         // smoothed argmax location
    double t_low = 0.0;     // neighboring grid points bracketing the peak
    double t_high = 0.0;
    bool monotone = false;  // argmax sits on a boundary, no interior peak
    std::vector<double> smoothed;
};

// Finds the peak of accuracy vs thinking length: series is sorted by T,
// interior points smoothed with a 3-point moving average (endpoints kept
// raw), then argmax. Needs >= 3 distinct T values.
PeakResult detect_peak(const std::vector<double>& t, const std::vector<double>& accuracy);

struct ReportBundle {
    std::string dir;
    std::vector<std::string> files;
    std::string summary_text;
};

// Renders the report bundle from a finished store: per-task curve SVGs with
// the sweep envelopes annotated, the attention share CSV when profiles exist,
// the balance table, and a manifest echo. Byte-identical stores produce
// byte-identical bundles.
ReportBundle emit_report(const RunStore& store);

// Backend/judge factories used by the harness and CLI. Throws on unknown
// names; "toy" and "mock" are always available, "live" needs JUDGE_ENDPOINT.
std::unique_ptr<Backend> make_backend(const std::string& name, uint64_t seed);
std::unique_ptr<JudgeClient> make_judge(const std::string& name);

}  // namespace rheval
