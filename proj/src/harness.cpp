#include "rheval/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "rheval/common.hpp"
#include "rheval/toy_decoder.hpp"

namespace fs = std::filesystem;

namespace rheval {

using nlohmann::json;

// ------------------------------------------------------------------- config

void RunConfig::validate() const {
    if (corpus_path.empty()) throw HarnessError("run config: corpus path missing");
    if (!fs::exists(corpus_path))
        throw HarnessError("run config: corpus path does not resolve: " + corpus_path);
    if (grid.empty()) throw HarnessError("run config: sweep grid is empty");
    for (const auto& c : grid) c.validate();
    if (out_dir.empty()) throw HarnessError("run config: output directory missing");
    if (workers < 1) throw HarnessError("run config: workers must be >= 1");
    if (max_tokens < 8) throw HarnessError("run config: max_tokens too small to hold a response");
    if (judge != "mock" && judge != "live")
        throw HarnessError("run config: judge must be 'mock' or 'live'");
    const bool steers = std::any_of(grid.begin(), grid.end(), [](const LengthControl& c) {
        return c.kind == ControlKind::latent_steering;
    });
    if (steers && directions_path.empty())
        throw HarnessError("run config: steering grid points need directions_path "
                           "(produce one with 'steer extract')");
    if (!directions_path.empty() && !fs::exists(directions_path))
        throw HarnessError("run config: directions path does not resolve: " + directions_path);
}

RunConfig run_config_from_json(const std::string& text) {
    json j = json::parse(text);
    RunConfig cfg;
    cfg.corpus_path = j.at("corpus").get<std::string>();
    cfg.backend = j.value("backend", std::string("toy"));
    cfg.seed = j.value("seed", static_cast<uint64_t>(1));
    for (const auto& tag : j.at("grid"))
        cfg.grid.push_back(LengthControl::parse(tag.get<std::string>()));
    cfg.judge = j.value("judge", std::string("mock"));
    cfg.out_dir = j.at("out_dir").get<std::string>();
    cfg.workers = j.value("workers", 4);
    cfg.max_tokens = j.value("max_tokens", static_cast<size_t>(512));
    cfg.directions_path = j.value("directions", std::string());
    cfg.attention_profiles = j.value("attention_profiles", true);
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["corpus"] = cfg.corpus_path;
    j["backend"] = cfg.backend;
    j["seed"] = cfg.seed;
    json grid = json::array();
    for (const auto& c : cfg.grid) grid.push_back(c.tag());
    j["grid"] = grid;
    j["judge"] = cfg.judge;
    j["out_dir"] = cfg.out_dir;
    j["workers"] = cfg.workers;
    j["max_tokens"] = cfg.max_tokens;
    j["directions"] = cfg.directions_path;
    j["attention_profiles"] = cfg.attention_profiles;
    return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw HarnessError("cannot open run config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return run_config_from_json(ss.str());
    } catch (const json::exception& e) {
        throw HarnessError("run config " + path + ": " + e.what());
    }
}

// -------------------------------------------------------------------- store

RunStore::RunStore(std::string root) : root_(std::move(root)) {
    if (root_.empty()) throw HarnessError("run store: empty root path");
}

void RunStore::atomic_write(const std::string& path, const std::string& content) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw HarnessError("run store: cannot write " + tmp);
        out << content;
        if (!out.flush()) throw HarnessError("run store: short write to " + tmp);
    }
    fs::rename(tmp, path);
}

void RunStore::init(const std::string& manifest_json) {
    fs::create_directories(root_);
    fs::create_directories(root_ + "/records");
    fs::create_directories(root_ + "/verdicts");
    fs::create_directories(root_ + "/curves");
    fs::create_directories(root_ + "/profiles");
    const std::string mpath = root_ + "/manifest.json";
    if (fs::exists(mpath)) {
        std::ifstream in(mpath, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        if (ss.str() != manifest_json)
            throw HarnessError("run store at " + root_ +
                               " was created with a different config; use a fresh out_dir");
        return;
    }
    atomic_write(mpath, manifest_json);
}

std::string RunStore::manifest() const {
    std::ifstream in(root_ + "/manifest.json", std::ios::binary);
    if (!in) throw HarnessError("run store at " + root_ + " has no manifest");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string RunStore::cell_key(const std::string& grid_tag, const std::string& sample_id,
                               uint64_t seed) {
    return hex64(fnv1a64(grid_tag + "|" + sample_id + "|" + hex64(seed)));
}

bool RunStore::has_record(const std::string& key) const {
    return fs::exists(root_ + "/records/" + key + ".json");
}

void RunStore::put_record(const std::string& key, const GenerationRecord& rec) {
    const std::string path = root_ + "/records/" + key + ".json";
    if (fs::exists(path)) return;  // records are immutable
    atomic_write(path, record_to_json(rec) + "\n");
}

GenerationRecord RunStore::get_record(const std::string& key) const {
    std::ifstream in(root_ + "/records/" + key + ".json");
    if (!in) throw HarnessError("run store: missing record " + key);
    std::string line;
    std::getline(in, line);
    return record_from_json(line);
}

bool RunStore::has_verdict(const std::string& key) const {
    return fs::exists(root_ + "/verdicts/" + key + ".json");
}

void RunStore::put_verdicts(const std::string& key, const std::vector<JudgeVerdict>& vs) {
    std::string content;
    for (const auto& v : vs) content += verdict_to_json(v) + "\n";
    atomic_write(root_ + "/verdicts/" + key + ".json", content);
}

std::vector<JudgeVerdict> RunStore::get_verdicts(const std::string& key) const {
    return read_verdicts(root_ + "/verdicts/" + key + ".json");
}

void RunStore::put_curve(const BalanceCurve& curve) {
    atomic_write(root_ + "/curves/balance.csv", curve_to_csv(curve));
}

std::optional<BalanceCurve> RunStore::get_curve() const {
    const std::string path = root_ + "/curves/balance.csv";
    if (!fs::exists(path)) return std::nullopt;
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return curve_from_csv(ss.str());
}

void RunStore::put_profile(const std::string& grid_tag, const AttentionProfile& profile) {
    const std::string path = root_ + "/profiles/" + hex64(fnv1a64(grid_tag)) + ".csv";
    if (fs::exists(path)) return;
    atomic_write(path, "# control: " + grid_tag + "\n" + profile_to_csv(profile));
}

std::vector<std::pair<std::string, AttentionProfile>> RunStore::list_profiles() const {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(root_ + "/profiles"))
        if (entry.path().extension() == ".csv") paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());

    std::vector<std::pair<std::string, AttentionProfile>> out;
    for (const auto& path : paths) {
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        std::string tag = header.rfind("# control: ", 0) == 0 ? header.substr(11) : "?";
        std::getline(in, header);  // column header
        AttentionProfile prof;
        prof.control_tag = tag;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ls(line);
            std::string cell;
            std::vector<std::string> cells;
            while (std::getline(ls, cell, ',')) cells.push_back(cell);
            if (cells.size() != 6) throw HarnessError("profile csv: bad row in " + path);
            std::map<Segment, double> row;
            row[Segment::system] = std::stod(cells[1]);
            row[Segment::instruction] = std::stod(cells[2]);
            row[Segment::visual] = std::stod(cells[3]);
            row[Segment::response] = std::stod(cells[4]);
            prof.shares.push_back(std::move(row));
            prof.excluded_mass.push_back(std::stod(cells[5]));
        }
        out.emplace_back(tag, std::move(prof));
    }
    return out;
}

std::string RunStore::report_dir() const { return root_ + "/report"; }

// -------------------------------------------------------------------- sweep

std::unique_ptr<Backend> make_backend(const std::string& name, uint64_t seed) {
    if (name == "toy") return toy_decoder(seed);
    throw HarnessError("unknown backend '" + name + "' (available: toy)");
}

std::unique_ptr<JudgeClient> make_judge(const std::string& name) {
    if (name == "mock") return std::make_unique<MockJudge>();
    if (name == "live") return std::make_unique<HttpJudge>(HttpJudge::from_env());
    throw HarnessError("unknown judge '" + name + "' (available: mock, live)");
}

namespace {

struct Cell {
    const BenchSample* sample = nullptr;
    uint64_t seed = 0;
    std::string key;
};

GenerationRecord to_record(const BenchSample& sample, const LengthControl& control, uint64_t seed,
                           const GenerationResult& gen, const std::string& backend_fp) {
    GenerationRecord rec;
    rec.sample_id = sample.id;
    rec.control = control;
    rec.seed = seed;
    rec.thinking_text = gen.thinking_text;
    rec.answer_text = gen.answer_text;
    rec.thinking_token_count = gen.thinking_token_count;
    rec.answer_token_count = gen.answer_token_count;
    rec.backend_fingerprint = backend_fp;
    return rec;
}

}  // namespace

SweepResult run_sweep(const RunConfig& cfg, const StopFlag& should_stop) {
    cfg.validate();
    const Corpus corpus = load_corpus(cfg.corpus_path);
    auto judge = make_judge(cfg.judge);

    std::optional<SteeringDirections> dirs;
    const bool steers = std::any_of(cfg.grid.begin(), cfg.grid.end(), [](const LengthControl& c) {
        return c.kind == ControlKind::latent_steering;
    });
    if (steers) dirs = load_directions(cfg.directions_path);

    const std::string backend_fp = make_backend(cfg.backend, 0)->describe().fingerprint;

    RunStore store(cfg.out_dir);
    {
        json manifest;
        manifest["code_version"] = kCodeVersion;
        manifest["config"] = json::parse(run_config_to_json(cfg));
        // the store knows its own location; a moved store is still the same run
        manifest["config"].erase("out_dir");
        manifest["corpus_fingerprint"] = hex64(corpus.fingerprint());
        manifest["backend_fingerprint"] = backend_fp;
        store.init(manifest.dump(2) + "\n");
    }

    SweepResult result;
    result.store_root = store.root();
    std::atomic<bool> stop_now{false};
    auto stopping = [&]() {
        if (stop_now.load()) return true;
        if (should_stop && should_stop()) {
            stop_now.store(true);
            return true;
        }
        return false;
    };

    for (const auto& control : cfg.grid) {
        GridPointOutcome outcome;
        outcome.control_tag = control.tag();
        if (stopping()) {
            result.aborted = true;
            result.outcomes.push_back(std::move(outcome));
            continue;
        }

        std::vector<Cell> cells;
        cells.reserve(corpus.size());
        for (const auto& s : corpus.samples()) {
            Cell c;
            c.sample = &s;
            c.seed = mix_seed(mix_seed(cfg.seed, s.id), control.tag());
            c.key = RunStore::cell_key(control.tag(), s.id, c.seed);
            cells.push_back(std::move(c));
        }

        std::vector<size_t> todo;
        for (size_t i = 0; i < cells.size(); ++i)
            if (!store.has_record(cells[i].key)) todo.push_back(i);

        std::string first_error;
        if (!todo.empty()) {
            std::atomic<size_t> next{0};
            std::mutex err_mu;
            auto work = [&]() {
                for (;;) {
                    if (stopping()) return;
                    const size_t i = next.fetch_add(1);
                    if (i >= todo.size()) return;
                    const Cell& cell = cells[todo[i]];
                    try {
                        auto backend = make_backend(cfg.backend, cell.seed);
                        SteeringPolicy pol =
                            policy_for(control, dirs ? &*dirs : nullptr,
                                       static_cast<long>(cfg.max_tokens));
                        GenerationResult gen = backend->generate(*cell.sample, pol.interventions,
                                                                 pol.stop, cfg.max_tokens);
                        store.put_record(cell.key,
                                         to_record(*cell.sample, control, cell.seed, gen, backend_fp));
                    } catch (const std::exception& e) {
                        std::lock_guard<std::mutex> lock(err_mu);
                        if (first_error.empty()) first_error = e.what();
                    }
                }
            };
            const int n_workers =
                std::max(1, std::min(cfg.workers, static_cast<int>(todo.size())));
            std::vector<std::thread> pool;
            pool.reserve(static_cast<size_t>(n_workers));
            for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }

        if (stop_now.load()) {
            result.aborted = true;
            outcome.error = first_error;
            result.outcomes.push_back(std::move(outcome));
            continue;
        }
        if (!first_error.empty()) {
            outcome.error = first_error;
            result.outcomes.push_back(std::move(outcome));
            continue;  // grid point failed, sweep continues
        }

        // score the grid point, reusing stored verdicts where already scored
        std::vector<ScoredItem> items;
        std::vector<AttentionProfile> profiles;
        const std::string profile_path =
            store.root() + "/profiles/" + hex64(fnv1a64(control.tag())) + ".csv";
        const bool want_profile = cfg.attention_profiles && !fs::exists(profile_path);
        size_t pending = 0;
        double think_sum = 0.0;
        double reas_len_sum = 0.0, perc_len_sum = 0.0;
        size_t reas_n = 0, perc_n = 0;

        for (const Cell& cell : cells) {
            const GenerationRecord rec = store.get_record(cell.key);
            const BenchSample& sample = *cell.sample;
            think_sum += static_cast<double>(rec.thinking_token_count);
            if (sample.task == Task::reasoning) {
                reas_len_sum += static_cast<double>(rec.thinking_token_count);
                ++reas_n;
            } else {
                perc_len_sum += static_cast<double>(rec.thinking_token_count);
                ++perc_n;
            }

            ScoredItem item;
            item.sample_id = sample.id;
            item.task = sample.task;
            if (sample.format == Format::multiple_choice) {
                auto label = extract_choice(rec.answer_text, sample.options);
                item.correct = label.has_value() && sample.ground_truth.size() == 1 &&
                               *label == sample.ground_truth[0];
                if (sample.task == Task::perception) item.hallucination = !item.correct;
            } else {
                JudgeVerdict v;
                bool have = false;
                if (store.has_verdict(cell.key)) {
                    auto stored = store.get_verdicts(cell.key);
                    if (!stored.empty() && stored.front().state == VerdictState::scored) {
                        v = replay_verdict(stored.front());
                        have = true;
                    }
                }
                if (!have) {
                    v = judge_open_ended(sample, rec, *judge);
                    store.put_verdicts(cell.key, {v});
                }
                if (v.state == VerdictState::pending) {
                    item.pending = true;
                    ++pending;
                } else if (v.mode == VerdictMode::reasoning_match) {
                    item.correct = v.consistent;
                } else {
                    item.hallucination = v.hallucination;
                    item.correct = !v.hallucination;
                }
            }
            items.push_back(std::move(item));

            if (want_profile) {
                auto backend = make_backend(cfg.backend, cell.seed);
                GenerationResult rep = backend->replay(sample, rec.thinking_text, rec.answer_text);
                profiles.push_back(attention_shares(rep.traces, rep.segmap));
            }
        }

        if (want_profile && !profiles.empty()) {
            AttentionProfile mean = mean_profile(profiles);
            mean.control_tag = control.tag();
            store.put_profile(control.tag(), mean);
        }

        if (pending > 0) {
            outcome.withheld = true;
            result.outcomes.push_back(std::move(outcome));
            continue;
        }

        const AccuracyResult racc = accuracy(items, Task::reasoning);
        const AccuracyResult pacc = accuracy(items, Task::perception);
        BalancePoint point;
        point.control_tag = control.tag();
        point.T = think_sum / static_cast<double>(cells.size());
        point.R = racc.value;
        point.H = pacc.value;
        point.n_reasoning = racc.scored;
        point.n_perception = pacc.scored;
        point.reasoning_mean_len = reas_n == 0 ? 0.0 : reas_len_sum / static_cast<double>(reas_n);
        point.perception_mean_len = perc_n == 0 ? 0.0 : perc_len_sum / static_cast<double>(perc_n);
        outcome.point = point;
        outcome.complete = true;
        result.curve.points.push_back(point);
        result.outcomes.push_back(std::move(outcome));
    }

    if (!result.aborted && !result.curve.points.empty()) store.put_curve(result.curve);
    return result;
}

// --------------------------------------------------------------------- peak

PeakResult detect_peak(const std::vector<double>& t, const std::vector<double>& accuracy) {
    if (t.size() != accuracy.size())
        throw HarnessError("detect_peak: length mismatch between T and accuracy");
    if (t.size() < 3)
        throw HarnessError("detect_peak: need at least 3 points, got " + std::to_string(t.size()));

    std::vector<size_t> order(t.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return t[a] < t[b]; });
    std::vector<double> ts(t.size()), acc(t.size());
    for (size_t i = 0; i < order.size(); ++i) {
        ts[i] = t[order[i]];
        acc[i] = accuracy[order[i]];
    }
    for (size_t i = 0; i + 1 < ts.size(); ++i)
        if (ts[i] == ts[i + 1])
            throw HarnessError("detect_peak: duplicate T value " + std::to_string(ts[i]));

    PeakResult res;
    res.smoothed = acc;
    for (size_t i = 1; i + 1 < acc.size(); ++i)
        res.smoothed[i] = (acc[i - 1] + acc[i] + acc[i + 1]) / 3.0;

    size_t best = 0;
    for (size_t i = 1; i < res.smoothed.size(); ++i)
        if (res.smoothed[i] > res.smoothed[best]) best = i;

    res.index = best;
    res.t = ts[best];
    res.t_low = best == 0 ? ts.front() : ts[best - 1];
    res.t_high = best + 1 == ts.size() ? ts.back() : ts[best + 1];
    res.monotone = best == 0 || best + 1 == ts.size();
    return res;
}

// ------------------------------------------------------------------- report

namespace {

std::string svg_curve(const std::string& title, const std::string& x_label,
                      const std::string& y_label, std::vector<std::pair<double, double>> pts,
                      double envelope_hi) {
    std::sort(pts.begin(), pts.end());
    const double w = 640.0, h = 400.0, ml = 70.0, mr = 20.0, mt = 40.0, mb = 50.0;
    const double pw = w - ml - mr, ph = h - mt - mb;
    double x_max = envelope_hi;
    for (const auto& [x, y] : pts) x_max = std::max(x_max, x);
    x_max *= 1.05;
    if (x_max <= 0.0) x_max = 1.0;

    auto px = [&](double x) { return ml + pw * (x / x_max); };
    auto py = [&](double y) { return mt + ph * (1.0 - y); };
    char buf[256];
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
          "viewBox=\"0 0 640 400\">\n";
    os << "<rect width=\"640\" height=\"400\" fill=\"#ffffff\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#eef3fb\"/>\n",
                  px(0.0), mt, px(envelope_hi) - px(0.0), ph);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" fill=\"#6b7a90\">sweep envelope "
                  "0-%g tokens</text>\n",
                  px(0.0) + 6.0, mt + 14.0, envelope_hi);
    os << buf;

    // axes
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#222\"/>\n", ml,
                  mt + ph, ml + pw, mt + ph);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#222\"/>\n", ml,
                  mt, ml, mt + ph);
    os << buf;
    for (int i = 0; i <= 4; ++i) {
        const double yv = 0.25 * i;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"end\" "
                      "fill=\"#222\">%.2f</text>\n",
                      ml - 6.0, py(yv) + 4.0, yv);
        os << buf;
        const double xv = x_max * 0.25 * i;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"middle\" "
                      "fill=\"#222\">%.0f</text>\n",
                      px(xv), mt + ph + 16.0, xv);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"13\" text-anchor=\"middle\" "
                  "fill=\"#111\">%s</text>\n",
                  ml + pw / 2.0, 22.0, title.c_str());
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" text-anchor=\"middle\" "
                  "fill=\"#222\">%s</text>\n",
                  ml + pw / 2.0, h - 12.0, x_label.c_str());
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" text-anchor=\"middle\" "
                  "transform=\"rotate(-90 16 %.2f)\" fill=\"#222\">%s</text>\n",
                  16.0, mt + ph / 2.0, mt + ph / 2.0, y_label.c_str());
    os << buf;

    if (!pts.empty()) {
        os << "<polyline fill=\"none\" stroke=\"#2456a8\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : pts) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(x), py(y));
            os << buf;
        }
        os << "\"/>\n";
        for (const auto& [x, y] : pts) {
            std::snprintf(buf, sizeof(buf),
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3.5\" fill=\"#2456a8\"/>\n", px(x),
                          py(y));
            os << buf;
        }
    }
    os << "</svg>\n";
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw HarnessError("report: cannot write " + path);
    out << content;
}

}  // namespace

ReportBundle emit_report(const RunStore& store) {
    auto maybe_curve = store.get_curve();
    if (!maybe_curve || maybe_curve->points.empty())
        throw HarnessError("emit_report: store has no complete balance curve");
    const BalanceCurve& curve = *maybe_curve;

    const std::string dir = store.report_dir();
    fs::create_directories(dir);
    ReportBundle bundle;
    bundle.dir = dir;

    // per-task curves against each task's own realized thinking lengths
    std::vector<std::pair<double, double>> reas, perc;
    for (const auto& p : curve.points) {
        reas.emplace_back(p.reasoning_mean_len, p.R);
        perc.emplace_back(p.perception_mean_len, p.H);
    }
    write_file(dir + "/reasoning_curve.svg",
               svg_curve("reasoning accuracy vs thinking length", "mean thinking tokens",
                         "reasoning accuracy", reas, 600.0));
    bundle.files.push_back(dir + "/reasoning_curve.svg");
    write_file(dir + "/perception_curve.svg",
               svg_curve("perception accuracy vs thinking length", "mean thinking tokens",
                         "non-hallucination accuracy", perc, 300.0));
    bundle.files.push_back(dir + "/perception_curve.svg");

    auto profiles = store.list_profiles();
    if (!profiles.empty()) {
        std::ostringstream os;
        os << "control,layer,system,instruction,visual,response,excluded\n";
        char buf[192];
        for (const auto& [tag, prof] : profiles) {
            for (size_t l = 0; l < prof.shares.size(); ++l) {
                std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.6f,%.6f,%.6f\n", tag.c_str(),
                              l, prof.shares[l].at(Segment::system),
                              prof.shares[l].at(Segment::instruction),
                              prof.shares[l].at(Segment::visual),
                              prof.shares[l].at(Segment::response), prof.excluded_mass[l]);
                os << buf;
            }
        }
        write_file(dir + "/attention.csv", os.str());
        bundle.files.push_back(dir + "/attention.csv");
    }

    std::string backend_name = "backend";
    try {
        json manifest = json::parse(store.manifest());
        backend_name = manifest.at("config").value("backend", backend_name);
    } catch (const json::exception&) {
        // manifest stays echoed verbatim below even if unparseable
    }

    std::ostringstream summary;
    summary << "balance sweep over " << curve.points.size() << " grid points\n\n";
    try {
        ModelSummary row = summarize(backend_name, "toy", curve);
        summary << balance_report({row}) << "\n";
    } catch (const MetricError& e) {
        summary << "balance table unavailable: " << e.what() << "\n\n";
    }
    summary << "grid points (control, T, R, H):\n";
    char buf[192];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof(buf), "  %-16s T=%-8.2f R=%.4f H=%.4f\n", p.control_tag.c_str(),
                      p.T, p.R, p.H);
        summary << buf;
    }
    if (curve.points.size() >= 3) {
        std::vector<double> ts, rs, hs;
        bool distinct = true;
        for (const auto& p : curve.points) ts.push_back(p.T);
        {
            auto sorted = ts;
            std::sort(sorted.begin(), sorted.end());
            for (size_t i = 0; i + 1 < sorted.size(); ++i)
                if (sorted[i] == sorted[i + 1]) distinct = false;
        }
        if (distinct) {
            for (const auto& p : curve.points) {
                rs.push_back(p.R);
                hs.push_back(p.H);
            }
            const PeakResult rp = detect_peak(ts, rs);
            const PeakResult hp = detect_peak(ts, hs);
            auto describe = [&summary, &buf](const char* name, const PeakResult& pr) {
                if (pr.monotone) {
                    std::snprintf(buf, sizeof(buf), "%s: no interior peak (monotone trend)\n",
                                  name);
                } else {
                    std::snprintf(buf, sizeof(buf), "%s: peak near T=%.1f (bracket %.1f..%.1f)\n",
                                  name, pr.t, pr.t_low, pr.t_high);
                }
                summary << buf;
            };
            summary << "\n";
            describe("reasoning accuracy", rp);
            describe("perception accuracy", hp);
        }
    } else {
        summary << "\n(short sweep: fewer than 3 points, no peak analysis)\n";
    }

    write_file(dir + "/summary.txt", summary.str());
    bundle.files.push_back(dir + "/summary.txt");
    write_file(dir + "/manifest.json", store.manifest());
    bundle.files.push_back(dir + "/manifest.json");
    bundle.summary_text = summary.str();
    return bundle;
}

}  // namespace rheval
