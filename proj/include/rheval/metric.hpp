#pragma once

// The balance metric: (R, H) pairs across a thinking-length sweep are min-max
// normalized, sorted by reasoning performance, and integrated with the
// trapezoidal rule. Higher area = reasoning gains cost less perception.

#include <stdexcept>
#include <string>
#include <vector>

namespace rheval {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when an axis has zero range; axis is "R" or "H".
struct DegenerateCurveError : MetricError {
    DegenerateCurveError(std::string which, double value)
        : MetricError("degenerate balance curve: axis " + which + " is constant at " +
                      std::to_string(value)),
          axis(std::move(which)) {}
    std::string axis;
};

struct BalancePoint {
    double T = 0.0;  // realized mean thinking length across the grid point
    double R = 0.0;  // reasoning accuracy
    double H = 0.0;  // perception (non-hallucination) accuracy
    std::string control_tag;
    size_t n_reasoning = 0;
    size_t n_perception = 0;
    double reasoning_mean_len = 0.0;
    double perception_mean_len = 0.0;
};

struct BalanceCurve {
    std::vector<BalancePoint> points;
    bool normalized = false;
    // raw-axis bounds recorded when normalizing, for de-normalization
    double r_min = 0.0, r_max = 0.0;
    double h_min = 0.0, h_max = 0.0;
};

// Min-max normalizes both axes to [0, 1]. Needs >= 2 points; throws
// DegenerateCurveError when an axis has zero range.
BalanceCurve normalize_curve(const BalanceCurve& raw);

// Area under the normalized curve: points sorted ascending by R (ties by T,
// then input order), trapezoids summed. Input must be normalized.
double rh_auc(const BalanceCurve& curve);

struct ModelSummary {
    std::string name;
    std::string paradigm;  // training recipe label, e.g. "RL" or "SFT+RL"
    double perception_acc_pct = 0.0;
    double perception_mean_len = 0.0;
    double reasoning_acc_pct = 0.0;
    double reasoning_mean_len = 0.0;
    double auc = 0.0;
};

// Collapses one model's raw sweep to a summary row: sample-weighted mean
// accuracy and mean length per task, plus the curve's area.
ModelSummary summarize(const std::string& name, const std::string& paradigm,
                       const BalanceCurve& raw);

// Fixed-width text table over summary rows, one line per model, in input
// order. Accuracies render as %.1f, lengths as %g, the area as %.2f.
std::string balance_report(const std::vector<ModelSummary>& rows);

std::string curve_to_csv(const BalanceCurve& curve);
BalanceCurve curve_from_csv(const std::string& text);

}  // namespace rheval
