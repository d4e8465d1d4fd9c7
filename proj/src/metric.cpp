#include "rheval/metric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace rheval {

static void check_point(const BalancePoint& p) {
    if (!std::isfinite(p.T) || !std::isfinite(p.R) || !std::isfinite(p.H))
        throw MetricError("balance point has a non-finite coordinate");
    if (p.T < 0.0) throw MetricError("balance point has negative length");
}

BalanceCurve normalize_curve(const BalanceCurve& raw) {
    if (raw.normalized) throw MetricError("normalize_curve: curve already normalized");
    if (raw.points.size() < 2)
        throw MetricError("normalize_curve: need at least 2 points, got " +
                          std::to_string(raw.points.size()));

    double r_min = std::numeric_limits<double>::infinity(), r_max = -r_min;
    double h_min = r_min, h_max = -r_min;
    for (const auto& p : raw.points) {
        check_point(p);
        r_min = std::min(r_min, p.R);
        r_max = std::max(r_max, p.R);
        h_min = std::min(h_min, p.H);
        h_max = std::max(h_max, p.H);
    }
    if (r_max == r_min) throw DegenerateCurveError("R", r_min);
    if (h_max == h_min) throw DegenerateCurveError("H", h_min);

    BalanceCurve out = raw;
    out.normalized = true;
    out.r_min = r_min;
    out.r_max = r_max;
    out.h_min = h_min;
    out.h_max = h_max;
    for (auto& p : out.points) {
        p.R = (p.R - r_min) / (r_max - r_min);
        p.H = (p.H - h_min) / (h_max - h_min);
    }
    return out;
}

double rh_auc(const BalanceCurve& curve) {
    if (!curve.normalized) throw MetricError("rh_auc: curve must be normalized first");
    if (curve.points.size() < 2)
        throw MetricError("rh_auc: need at least 2 points, got " +
                          std::to_string(curve.points.size()));
    std::vector<BalancePoint> pts = curve.points;
    std::stable_sort(pts.begin(), pts.end(), [](const BalancePoint& a, const BalancePoint& b) {
        if (a.R != b.R) return a.R < b.R;
        return a.T < b.T;
    });
    double area = 0.0;
    for (size_t i = 0; i + 1 < pts.size(); ++i)
        area += (pts[i + 1].R - pts[i].R) * 0.5 * (pts[i + 1].H + pts[i].H);
    return area;
}

ModelSummary summarize(const std::string& name, const std::string& paradigm,
                       const BalanceCurve& raw) {
    if (raw.points.empty()) throw MetricError("summarize: empty curve");
    ModelSummary s;
    s.name = name;
    s.paradigm = paradigm;
    double r_acc = 0.0, p_acc = 0.0, r_len = 0.0, p_len = 0.0;
    double r_n = 0.0, p_n = 0.0;
    for (const auto& p : raw.points) {
        r_acc += p.R * static_cast<double>(p.n_reasoning);
        r_len += p.reasoning_mean_len * static_cast<double>(p.n_reasoning);
        r_n += static_cast<double>(p.n_reasoning);
        p_acc += p.H * static_cast<double>(p.n_perception);
        p_len += p.perception_mean_len * static_cast<double>(p.n_perception);
        p_n += static_cast<double>(p.n_perception);
    }
    if (r_n == 0.0 || p_n == 0.0)
        throw MetricError("summarize: curve lacks per-task sample counts");
    s.reasoning_acc_pct = 100.0 * r_acc / r_n;
    s.reasoning_mean_len = r_len / r_n;
    s.perception_acc_pct = 100.0 * p_acc / p_n;
    s.perception_mean_len = p_len / p_n;
    s.auc = rh_auc(normalize_curve(raw));
    return s;
}

std::string balance_report(const std::vector<ModelSummary>& rows) {
    if (rows.empty()) throw MetricError("balance_report: no rows");
    size_t name_w = std::string("model").size();
    size_t para_w = std::string("paradigm").size();
    for (const auto& r : rows) {
        name_w = std::max(name_w, r.name.size());
        para_w = std::max(para_w, r.paradigm.size());
    }
    std::ostringstream os;
    auto pad = [&os](const std::string& s, size_t w) {
        os << s;
        for (size_t i = s.size(); i < w + 2; ++i) os << ' ';
    };
    pad("model", name_w);
    pad("paradigm", para_w);
    pad("perc-acc", 8);
    pad("perc-len", 8);
    pad("reas-acc", 8);
    pad("reas-len", 8);
    os << "rh-auc\n";
    char buf[64];
    for (const auto& r : rows) {
        pad(r.name, name_w);
        pad(r.paradigm, para_w);
        std::snprintf(buf, sizeof(buf), "%.1f", r.perception_acc_pct);
        pad(buf, 8);
        std::snprintf(buf, sizeof(buf), "%g", r.perception_mean_len);
        pad(buf, 8);
        std::snprintf(buf, sizeof(buf), "%.1f", r.reasoning_acc_pct);
        pad(buf, 8);
        std::snprintf(buf, sizeof(buf), "%g", r.reasoning_mean_len);
        pad(buf, 8);
        std::snprintf(buf, sizeof(buf), "%.2f", r.auc);
        os << buf << "\n";
    }
    return os.str();
}

std::string curve_to_csv(const BalanceCurve& curve) {
    std::ostringstream os;
    os << "T,R,H,control,n_reasoning,n_perception,reasoning_mean_len,perception_mean_len\n";
    char buf[256];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%s,%zu,%zu,%.17g,%.17g\n", p.T, p.R,
                      p.H, p.control_tag.c_str(), p.n_reasoning, p.n_perception,
                      p.reasoning_mean_len, p.perception_mean_len);
        os << buf;
    }
    return os.str();
}

BalanceCurve curve_from_csv(const std::string& text) {
    BalanceCurve curve;
    std::istringstream is(text);
    std::string line;
    bool header = true;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("T,R,H", 0) == 0) continue;
            // headerless (T, R, H) rows are accepted too
        }
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3)
            throw MetricError("curve csv line " + std::to_string(lineno) + ": expected T,R,H");
        BalancePoint p;
        try {
            p.T = std::stod(cells[0]);
            p.R = std::stod(cells[1]);
            p.H = std::stod(cells[2]);
            if (cells.size() > 3) p.control_tag = cells[3];
            if (cells.size() > 5) {
                p.n_reasoning = static_cast<size_t>(std::stoull(cells[4]));
                p.n_perception = static_cast<size_t>(std::stoull(cells[5]));
            }
            if (cells.size() > 7) {
                p.reasoning_mean_len = std::stod(cells[6]);
                p.perception_mean_len = std::stod(cells[7]);
            }
        } catch (const std::exception&) {
            throw MetricError("curve csv line " + std::to_string(lineno) + ": bad number");
        }
        check_point(p);
        curve.points.push_back(std::move(p));
    }
    return curve;
}

}  // namespace rheval
