#include "rheval/steering.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rheval/common.hpp"

namespace rheval {

const char* to_string(PartitionRule r) {
    return r == PartitionRule::median ? "median" : "quartile";
}

PartitionRule partition_rule_from_string(const std::string& s) {
    if (s == "median") return PartitionRule::median;
    if (s == "quartile") return PartitionRule::quartile;
    throw std::invalid_argument("unknown partition rule: " + s);
}

static SideStats side_stats(const std::vector<long>& lens) {
    SideStats st;
    st.count = lens.size();
    if (lens.empty()) return st;
    st.min_len = *std::min_element(lens.begin(), lens.end());
    st.max_len = *std::max_element(lens.begin(), lens.end());
    double sum = 0.0;
    for (long v : lens) sum += static_cast<double>(v);
    st.mean_len = sum / static_cast<double>(lens.size());
    return st;
}

TracePartition partition_traces(const std::vector<GenerationRecord>& records, PartitionRule rule) {
    if (records.size() < 4)
        throw PartitionError("partition_traces: need at least 4 records, got " +
                             std::to_string(records.size()));

    std::vector<std::pair<long, std::string>> by_len;
    by_len.reserve(records.size());
    for (const auto& r : records)
        by_len.emplace_back(static_cast<long>(r.thinking_token_count), r.key());
    std::sort(by_len.begin(), by_len.end());

    if (by_len.front().first == by_len.back().first)
        throw PartitionError("partition_traces: degenerate lengths, all records have " +
                             std::to_string(by_len.front().first) + " thinking tokens");

    TracePartition part;
    part.rule = rule;
    std::vector<long> long_lens, short_lens;

    if (rule == PartitionRule::median) {
        const size_t n = by_len.size();
        const double med =
            (n % 2 == 1) ? static_cast<double>(by_len[n / 2].first)
                         : (static_cast<double>(by_len[n / 2 - 1].first) +
                            static_cast<double>(by_len[n / 2].first)) / 2.0;
        for (const auto& [len, key] : by_len) {
            if (static_cast<double>(len) > med) {
                part.long_keys.insert(key);
                long_lens.push_back(len);
            } else if (static_cast<double>(len) < med) {
                part.short_keys.insert(key);
                short_lens.push_back(len);
            }
        }
        if (part.long_keys.empty() || part.short_keys.empty())
            throw PartitionError("partition_traces: median split left one side empty");
    } else {
        const size_t k = by_len.size() / 4;
        for (size_t i = 0; i < k; ++i) {
            part.short_keys.insert(by_len[i].second);
            short_lens.push_back(by_len[i].first);
        }
        for (size_t i = by_len.size() - k; i < by_len.size(); ++i) {
            part.long_keys.insert(by_len[i].second);
            long_lens.push_back(by_len[i].first);
        }
    }

    part.long_stats = side_stats(long_lens);
    part.short_stats = side_stats(short_lens);
    return part;
}

double SteeringDirections::cosine_to(int layer, const std::vector<float>& probe) const {
    const auto& d = direction.at(static_cast<size_t>(layer));
    if (d.size() != probe.size())
        throw std::invalid_argument("cosine_to: dimension mismatch");
    double dot = 0.0, nd = 0.0, np = 0.0;
    for (size_t i = 0; i < d.size(); ++i) {
        dot += d[i] * static_cast<double>(probe[i]);
        nd += d[i] * d[i];
        np += static_cast<double>(probe[i]) * static_cast<double>(probe[i]);
    }
    if (nd == 0.0 || np == 0.0) return 0.0;
    return dot / (std::sqrt(nd) * std::sqrt(np));
}

// mean hidden state per layer over one record's thinking span
static std::vector<std::vector<double>> span_mean(const SpanStates& states, int layer_count,
                                                  int hidden_dim, const std::string& key) {
    if (static_cast<int>(states.size()) != layer_count)
        throw std::invalid_argument("extract: record " + key + " has wrong layer count");
    std::vector<std::vector<double>> mean(static_cast<size_t>(layer_count),
                                          std::vector<double>(static_cast<size_t>(hidden_dim), 0.0));
    for (int l = 0; l < layer_count; ++l) {
        const auto& toks = states[static_cast<size_t>(l)];
        if (toks.empty())
            throw std::invalid_argument("extract: record " + key + " has an empty thinking span");
        for (const auto& h : toks) {
            if (static_cast<int>(h.size()) != hidden_dim)
                throw std::invalid_argument("extract: record " + key + " has wrong hidden dim");
            for (int i = 0; i < hidden_dim; ++i)
                mean[static_cast<size_t>(l)][static_cast<size_t>(i)] += static_cast<double>(h[static_cast<size_t>(i)]);
        }
        const double inv = 1.0 / static_cast<double>(toks.size());
        for (int i = 0; i < hidden_dim; ++i) mean[static_cast<size_t>(l)][static_cast<size_t>(i)] *= inv;
    }
    return mean;
}

static std::vector<std::vector<double>> side_mean(const std::set<std::string>& keys,
                                                  const std::map<std::string, SpanStates>& states,
                                                  int layer_count, int hidden_dim) {
    if (keys.empty()) throw std::invalid_argument("extract: empty partition side");
    std::vector<std::vector<double>> acc(static_cast<size_t>(layer_count),
                                         std::vector<double>(static_cast<size_t>(hidden_dim), 0.0));
    for (const auto& key : keys) {
        auto it = states.find(key);
        if (it == states.end())
            throw std::invalid_argument("extract: no span states for record " + key);
        auto rec_mean = span_mean(it->second, layer_count, hidden_dim, key);
        for (int l = 0; l < layer_count; ++l)
            for (int i = 0; i < hidden_dim; ++i)
                acc[static_cast<size_t>(l)][static_cast<size_t>(i)] += rec_mean[static_cast<size_t>(l)][static_cast<size_t>(i)];
    }
    const double inv = 1.0 / static_cast<double>(keys.size());
    for (auto& layer : acc)
        for (double& v : layer) v *= inv;
    return acc;
}

SteeringDirections extract_from_span_states(const TracePartition& partition,
                                            const std::map<std::string, SpanStates>& states,
                                            int layer_count, int hidden_dim) {
    SteeringDirections dirs;
    dirs.layer_count = layer_count;
    dirs.hidden_dim = hidden_dim;
    dirs.rule = partition.rule;
    dirs.count_long = partition.long_keys.size();
    dirs.count_short = partition.short_keys.size();
    dirs.mean_long = side_mean(partition.long_keys, states, layer_count, hidden_dim);
    dirs.mean_short = side_mean(partition.short_keys, states, layer_count, hidden_dim);
    dirs.direction.assign(static_cast<size_t>(layer_count),
                          std::vector<double>(static_cast<size_t>(hidden_dim), 0.0));
    for (int l = 0; l < layer_count; ++l)
        for (int i = 0; i < hidden_dim; ++i)
            dirs.direction[static_cast<size_t>(l)][static_cast<size_t>(i)] =
                dirs.mean_long[static_cast<size_t>(l)][static_cast<size_t>(i)] -
                dirs.mean_short[static_cast<size_t>(l)][static_cast<size_t>(i)];
    return dirs;
}

SteeringDirections extract_directions(const TracePartition& partition,
                                      const std::vector<GenerationRecord>& records,
                                      const Corpus& corpus, Backend& backend) {
    const BackendInfo info = backend.describe();

    std::map<std::string, const GenerationRecord*> by_key;
    for (const auto& r : records) by_key[r.key()] = &r;

    std::set<std::string> wanted = partition.long_keys;
    wanted.insert(partition.short_keys.begin(), partition.short_keys.end());

    std::map<std::string, SpanStates> states;
    for (const auto& key : wanted) {
        auto it = by_key.find(key);
        if (it == by_key.end())
            throw std::invalid_argument("extract_directions: partition references unknown record " + key);
        const GenerationRecord& rec = *it->second;
        const BenchSample& sample = corpus.at(rec.sample_id);
        GenerationResult res = backend.replay(sample, rec.thinking_text, rec.answer_text);
        auto [begin, end] = res.thinking_trace_span();
        SpanStates span(static_cast<size_t>(info.layer_count));
        for (int l = 0; l < info.layer_count; ++l) {
            auto& toks = span[static_cast<size_t>(l)];
            toks.reserve(end - begin);
            for (size_t t = begin; t < end; ++t)
                toks.push_back(res.traces[t].hidden[static_cast<size_t>(l)]);
        }
        states.emplace(key, std::move(span));
    }

    SteeringDirections dirs =
        extract_from_span_states(partition, states, info.layer_count, info.hidden_dim);
    dirs.corpus_fingerprint = corpus.fingerprint();
    dirs.backend_fingerprint = info.fingerprint;
    return dirs;
}

std::vector<InterventionSpec> make_interventions(const SteeringDirections& dirs,
                                                 const SteeringConfig& cfg) {
    if (!std::isfinite(cfg.alpha) || cfg.alpha < kAlphaMin || cfg.alpha > kAlphaMax)
        throw std::invalid_argument("make_interventions: alpha outside supported range");
    std::vector<int> layers = cfg.layers;
    if (layers.empty()) {
        layers.resize(static_cast<size_t>(dirs.layer_count));
        for (int l = 0; l < dirs.layer_count; ++l) layers[static_cast<size_t>(l)] = l;
    }
    std::vector<InterventionSpec> specs;
    specs.reserve(layers.size());
    for (int l : layers) {
        if (l < 0 || l >= dirs.layer_count)
            throw std::invalid_argument("make_interventions: layer index out of range");
        InterventionSpec spec;
        spec.layer = l;
        spec.direction = dirs.direction[static_cast<size_t>(l)];
        spec.scale = cfg.alpha;
        specs.push_back(std::move(spec));
    }
    return specs;
}

namespace {

constexpr char kMagic[4] = {'R', 'H', 'S', 'D'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void put_string(std::ofstream& out, const std::string& s) {
    put(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& in) {
    const uint32_t n = get<uint32_t>(in);
    if (n > (1u << 20)) throw std::runtime_error("directions file: implausible string length");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

void put_matrix(std::ofstream& out, const std::vector<std::vector<double>>& m) {
    for (const auto& row : m)
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
}

void get_matrix(std::ifstream& in, std::vector<std::vector<double>>& m, int rows, int cols) {
    m.assign(static_cast<size_t>(rows), std::vector<double>(static_cast<size_t>(cols), 0.0));
    for (auto& row : m)
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
}

}  // namespace

void save_directions(const std::string& path, const SteeringDirections& dirs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write directions file: " + path);
    out.write(kMagic, 4);
    put(out, kVersion);
    put(out, static_cast<int32_t>(dirs.layer_count));
    put(out, static_cast<int32_t>(dirs.hidden_dim));
    put(out, static_cast<uint8_t>(dirs.rule == PartitionRule::median ? 0 : 1));
    put(out, static_cast<uint64_t>(dirs.count_long));
    put(out, static_cast<uint64_t>(dirs.count_short));
    put(out, dirs.corpus_fingerprint);
    put_string(out, dirs.backend_fingerprint);
    put_matrix(out, dirs.direction);
    put_matrix(out, dirs.mean_long);
    put_matrix(out, dirs.mean_short);
    if (!out) throw std::runtime_error("write failed for directions file: " + path);
}

SteeringDirections load_directions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open directions file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a steering-directions file: " + path);
    const uint32_t version = get<uint32_t>(in);
    if (version != kVersion)
        throw std::runtime_error("unsupported directions file version " + std::to_string(version));
    SteeringDirections dirs;
    dirs.layer_count = get<int32_t>(in);
    dirs.hidden_dim = get<int32_t>(in);
    if (dirs.layer_count <= 0 || dirs.layer_count > 4096 || dirs.hidden_dim <= 0 ||
        dirs.hidden_dim > (1 << 20))
        throw std::runtime_error("directions file: implausible shape");
    dirs.rule = get<uint8_t>(in) == 0 ? PartitionRule::median : PartitionRule::quartile;
    dirs.count_long = get<uint64_t>(in);
    dirs.count_short = get<uint64_t>(in);
    dirs.corpus_fingerprint = get<uint64_t>(in);
    dirs.backend_fingerprint = get_string(in);
    get_matrix(in, dirs.direction, dirs.layer_count, dirs.hidden_dim);
    get_matrix(in, dirs.mean_long, dirs.layer_count, dirs.hidden_dim);
    get_matrix(in, dirs.mean_short, dirs.layer_count, dirs.hidden_dim);
    if (!in) throw std::runtime_error("truncated directions file: " + path);
    return dirs;
}

}  // namespace rheval
