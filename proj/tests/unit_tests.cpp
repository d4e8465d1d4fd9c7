#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rheval/attention.hpp"
#include "rheval/backend.hpp"
#include "rheval/common.hpp"
#include "rheval/corpus.hpp"
#include "rheval/harness.hpp"
#include "rheval/length_control.hpp"
#include "rheval/metric.hpp"
#include "rheval/records.hpp"
#include "rheval/scoring.hpp"
#include "rheval/steering.hpp"
#include "rheval/toy_decoder.hpp"

using namespace rheval;
namespace fs = std::filesystem;

static std::string data_path(const std::string& name) {
    return std::string(RHEVAL_TEST_DATA_DIR) + "/" + name;
}

static const Corpus& mini_corpus() {
    static Corpus c = load_corpus(data_path("mini_corpus.jsonl"));
    return c;
}

// scratch directory wiped on scope exit
struct temp_dir {
    fs::path path;
    explicit temp_dir(const std::string& tag) {
        path = fs::temp_directory_path() / ("rheval_ut_" + tag + "_" + hex64(std::random_device{}()));
        fs::create_directories(path);
    }
    ~temp_dir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

// order-independent digest over relative paths and file bytes
static uint64_t dir_digest(const fs::path& root) {
    std::vector<std::string> rel;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), root).string());
    }
    std::sort(rel.begin(), rel.end());
    uint64_t h = fnv1a64("dir-v1");
    for (const auto& r : rel) {
        h = fnv1a64(r, h);
        std::ifstream in(root / r, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        h = fnv1a64(ss.str(), h);
    }
    return h;
}

static GenerationRecord record_from_result(const BenchSample& s, const LengthControl& control,
                                           uint64_t seed, const GenerationResult& r,
                                           const std::string& fingerprint) {
    GenerationRecord rec;
    rec.sample_id = s.id;
    rec.control = control;
    rec.seed = seed;
    rec.thinking_text = r.thinking_text;
    rec.answer_text = r.answer_text;
    rec.thinking_token_count = r.thinking_token_count;
    rec.answer_token_count = r.answer_token_count;
    rec.backend_fingerprint = fingerprint;
    return rec;
}

// natural generations across the corpus, empty spans dropped
static std::vector<GenerationRecord> natural_records(Backend& backend, const Corpus& corpus,
                                                     int seeds_per_sample, uint64_t base_seed) {
    const std::string fp = backend.describe().fingerprint;
    std::vector<GenerationRecord> out;
    for (const auto& s : corpus.samples()) {
        for (int k = 0; k < seeds_per_sample; ++k) {
            const uint64_t seed = mix_seed(mix_seed(base_seed, fnv1a64(s.id)), (uint64_t)k);
            backend.reseed(seed);
            GenerationResult r = backend.generate(s, {}, natural_stop_policy(), 2048);
            if (r.thinking_token_count == 0) continue;
            out.push_back(record_from_result(s, LengthControl::none_control(), seed, r, fp));
        }
    }
    return out;
}

static size_t count_word(const std::string& text, const std::string& word) {
    std::istringstream ss(text);
    std::string w;
    size_t n = 0;
    while (ss >> w)
        if (w == word) ++n;
    return n;
}

// ---------------------------------------------------------------- corpus

TEST_CASE("mini corpus loads with stable fingerprint and task split") {
    const Corpus& c = mini_corpus();
    CHECK(c.size() == 20);
    CHECK(c.count(Task::reasoning) == 10);
    CHECK(c.count(Task::perception) == 10);
    CHECK(c.count(Task::reasoning, Format::multiple_choice) == 5);
    CHECK(c.count(Task::perception, Format::open_ended) == 5);

    Corpus again = load_corpus(data_path("mini_corpus.jsonl"));
    CHECK(c.fingerprint() == again.fingerprint());

    auto [reas, perc] = split_by_task(c);
    CHECK(reas.size() == 10);
    CHECK(perc.size() == 10);
    for (const auto& s : reas.samples()) CHECK(s.task == Task::reasoning);
}

TEST_CASE("sample validation names the offending sample") {
    BenchSample s;
    s.id = "bad-1";
    s.task = Task::reasoning;
    s.format = Format::multiple_choice;
    s.question = "q";
    s.ground_truth = "A";
    CHECK_THROWS_AS(validate_sample(s), CorpusError);  // no options

    s.options = {{'A', "one"}, {'B', "two"}};
    s.ground_truth = "E";
    try {
        validate_sample(s);
        FAIL("expected CorpusError");
    } catch (const CorpusError& e) {
        CHECK(std::string(e.what()).find("bad-1") != std::string::npos);
    }

    s.ground_truth = "A";
    CHECK_NOTHROW(validate_sample(s));

    BenchSample open;
    open.id = "bad-2";
    open.format = Format::open_ended;
    open.question = "q";
    open.ground_truth = "";
    CHECK_THROWS_AS(validate_sample(open), CorpusError);

    CHECK_THROWS_AS(Corpus({s, s}), CorpusError);  // duplicate id
}

// ---------------------------------------------------------------- toy backend

TEST_CASE("toy generation is deterministic per seed and differs across seeds") {
    auto backend = toy_decoder(11);
    const BenchSample& s = mini_corpus().at("reas-001");

    GenerationResult a = backend->generate(s, {}, natural_stop_policy(), 512);
    backend->reseed(11);
    GenerationResult b = backend->generate(s, {}, natural_stop_policy(), 512);
    CHECK(a.text == b.text);
    CHECK(a.token_ids == b.token_ids);
    REQUIRE(a.traces.size() == b.traces.size());
    for (size_t i = 0; i < a.traces.size(); ++i) {
        CHECK(a.traces[i].hidden == b.traces[i].hidden);
        CHECK(a.traces[i].attention == b.traces[i].attention);
    }

    backend->reseed(12);
    GenerationResult c = backend->generate(s, {}, natural_stop_policy(), 512);
    CHECK(a.text != c.text);
}

TEST_CASE("toy response structure and trace alignment") {
    auto backend = toy_decoder(3);
    const BenchSample& s = mini_corpus().at("perc-001");
    GenerationResult r = backend->generate(s, {}, natural_stop_policy(), 512);

    CHECK(r.text.rfind(kThinkOpen, 0) == 0);
    CHECK(r.text.find(kThinkClose) != std::string::npos);
    CHECK(r.answer_token_count > 0);
    CHECK(r.traces.size() == r.token_ids.size());

    auto [begin, end] = r.thinking_trace_span();
    CHECK(begin == 1);
    CHECK(end - begin == r.thinking_token_count);
    CHECK(end <= r.traces.size());

    r.segmap.validate();
    const auto& vis = r.segmap.ranges.at(Segment::visual);
    CHECK(vis.width() > 0);  // toy:// image ref becomes visual tokens
    const auto& resp = r.segmap.ranges.at(Segment::response);
    CHECK(resp.begin == r.segmap.prompt_len);
    CHECK(resp.end == r.segmap.total_len);

    // traces sit at consecutive response positions
    for (size_t i = 0; i < r.traces.size(); ++i) {
        CHECK(r.traces[i].position == r.segmap.prompt_len + i);
        CHECK(r.traces[i].attention.front().size() == r.traces[i].position + 1);
    }
}

TEST_CASE("teacher-forced replay reproduces generation traces bit-exactly") {
    auto backend = toy_decoder(21);
    const BenchSample& s = mini_corpus().at("reas-003");
    GenerationResult gen = backend->generate(s, {}, natural_stop_policy(), 512);

    GenerationResult rep = backend->replay(s, gen.thinking_text, gen.answer_text);
    CHECK(rep.text == gen.text);
    CHECK(rep.token_ids == gen.token_ids);
    CHECK(rep.thinking_token_count == gen.thinking_token_count);
    REQUIRE(rep.traces.size() == gen.traces.size());
    for (size_t i = 0; i < gen.traces.size(); ++i) {
        CHECK(rep.traces[i].hidden == gen.traces[i].hidden);
        CHECK(rep.traces[i].attention == gen.traces[i].attention);
    }
}

TEST_CASE("zero-scale interventions are a bit-identical no-op") {
    auto backend = toy_decoder(5);
    const BenchSample& s = mini_corpus().at("reas-002");
    const BackendInfo info = backend->describe();

    GenerationResult plain = backend->generate(s, {}, natural_stop_policy(), 512);

    std::vector<InterventionSpec> zero(info.layer_count);
    for (int l = 0; l < info.layer_count; ++l) {
        zero[l].layer = l;
        zero[l].direction.assign(info.hidden_dim, 0.7);
        zero[l].scale = (l % 2 == 0) ? 0.0 : -0.0;
    }
    backend->reseed(5);
    GenerationResult zeroed = backend->generate(s, zero, natural_stop_policy(), 512);

    CHECK(zeroed.text == plain.text);
    REQUIRE(zeroed.traces.size() == plain.traces.size());
    for (size_t i = 0; i < plain.traces.size(); ++i)
        CHECK(zeroed.traces[i].hidden == plain.traces[i].hidden);
}

TEST_CASE("interventions are validated against backend geometry") {
    auto backend = toy_decoder(1);
    const BackendInfo info = backend->describe();

    InterventionSpec bad_layer;
    bad_layer.layer = info.layer_count;
    bad_layer.direction.assign(info.hidden_dim, 0.0);
    CHECK_THROWS(check_interventions(info, {bad_layer}));

    InterventionSpec bad_dim;
    bad_dim.layer = 0;
    bad_dim.direction.assign(info.hidden_dim + 1, 0.0);
    CHECK_THROWS(check_interventions(info, {bad_dim}));

    InterventionSpec ok;
    ok.layer = 0;
    ok.direction.assign(info.hidden_dim, 0.1);
    ok.scale = 0.05;
    CHECK_NOTHROW(check_interventions(info, {ok}));
}

// ---------------------------------------------------------------- length control

TEST_CASE("control tags round-trip through parse") {
    const std::vector<LengthControl> controls = {
        LengthControl::budget_forcing(16),
        LengthControl::budget_forcing(0),
        LengthControl::test_time_scaling(64, 0.5, 2),
        LengthControl::latent_steering(-0.05),
        LengthControl::zerothink(),
        LengthControl::none_control(),
    };
    for (const auto& c : controls) {
        LengthControl back = LengthControl::parse(c.tag());
        CHECK(back.tag() == c.tag());
        CHECK(back.kind == c.kind);
    }
    CHECK(LengthControl::budget_forcing(16).tag() == "budget:16");
    CHECK(LengthControl::test_time_scaling(64, 0.5, 2).tag() == "tts:64:0.5:2");
    CHECK(LengthControl::latent_steering(0.05).tag() == "steer:+0.050");
    CHECK_THROWS(LengthControl::parse("bogus:1"));
}

TEST_CASE("control validation rejects out-of-range settings") {
    CHECK_THROWS_AS(LengthControl::budget_forcing(-1), std::invalid_argument);
    CHECK_THROWS_AS(LengthControl::test_time_scaling(0, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(LengthControl::test_time_scaling(64, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(LengthControl::test_time_scaling(64, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(LengthControl::test_time_scaling(64, 0.5, 0), std::invalid_argument);
    // wait budget must fit between the halt point and the cap
    CHECK_THROWS_AS(LengthControl::test_time_scaling(64, 0.9, 20), std::invalid_argument);
    CHECK_THROWS_AS(LengthControl::latent_steering(0.2), std::invalid_argument);
    CHECK_THROWS_AS(LengthControl::latent_steering(-0.151), std::invalid_argument);
    CHECK_NOTHROW(LengthControl::latent_steering(kAlphaMax));
    CHECK_NOTHROW(LengthControl::latent_steering(kAlphaMin));
}

static StepView thinking_view(size_t tokens, bool close_candidate) {
    StepView v;
    v.in_thinking = true;
    v.thinking_tokens = tokens;
    v.candidate_is_close = close_candidate;
    v.candidate_is_content = !close_candidate;
    return v;
}

TEST_CASE("budget policy forces close at the budget and accepts close attempts") {
    StopPolicy p = budget_forcing_policy(4);
    CHECK(p(thinking_view(0, false)) == TokenDecision::accept);
    CHECK(p(thinking_view(3, false)) == TokenDecision::accept);
    CHECK(p(thinking_view(4, false)) == TokenDecision::replace_close);
    CHECK(p(thinking_view(2, true)) == TokenDecision::accept);

    StepView after_close;
    after_close.in_thinking = false;
    after_close.thinking_closed = true;
    CHECK(p(after_close) == TokenDecision::accept);

    StopPolicy zero = budget_forcing_policy(0);
    CHECK(zero(thinking_view(0, false)) == TokenDecision::replace_close);
}

TEST_CASE("test-time scaling policy spends the wait budget then respects the cap") {
    // cap 20, halt point 10, two waits
    StopPolicy p = test_time_scaling_policy(20, 0.5, 2);
    CHECK(p(thinking_view(3, true)) == TokenDecision::replace_wait);
    CHECK(p(thinking_view(5, true)) == TokenDecision::replace_wait);
    CHECK(p(thinking_view(7, true)) == TokenDecision::accept);  // budget spent

    // unspent budget drains on consecutive steps at the halt point
    StopPolicy q = test_time_scaling_policy(20, 0.5, 2);
    CHECK(q(thinking_view(9, false)) == TokenDecision::accept);
    CHECK(q(thinking_view(10, false)) == TokenDecision::replace_wait);
    CHECK(q(thinking_view(11, false)) == TokenDecision::replace_wait);
    CHECK(q(thinking_view(12, false)) == TokenDecision::accept);
    CHECK(q(thinking_view(13, true)) == TokenDecision::accept);

    // the cap still smothers everything
    StopPolicy r = test_time_scaling_policy(20, 0.5, 1);
    CHECK(r(thinking_view(20, false)) == TokenDecision::replace_close);
    CHECK(r(thinking_view(20, true)) == TokenDecision::accept);
}

TEST_CASE("zerothink keeps markers with an empty span") {
    auto backend = toy_decoder(9);
    const BenchSample& s = mini_corpus().at("perc-002");
    SteeringPolicy pol = policy_for(LengthControl::zerothink(), nullptr);
    GenerationResult r = backend->generate(s, pol.interventions, pol.stop, 512);

    CHECK(r.thinking_token_count == 0);
    CHECK(r.thinking_text.empty());
    CHECK(r.text.rfind(kThinkOpen, 0) == 0);
    CHECK(r.text.find(kThinkClose) != std::string::npos);
    CHECK(r.answer_token_count > 0);
    auto [begin, end] = r.thinking_trace_span();
    CHECK(begin == end);
}

TEST_CASE("budget forcing truncates toy generations with zero violations") {
    auto backend = toy_decoder(17);
    const BenchSample& s = mini_corpus().at("reas-004");
    size_t natural_over_16 = 0;
    for (long budget : {0L, 1L, 16L}) {
        StopPolicy p = budget_forcing_policy(budget);
        for (int k = 0; k < 10; ++k) {
            backend->reseed(mix_seed(100 + (uint64_t)budget, (uint64_t)k));
            GenerationResult r = backend->generate(s, {}, p, 2048);
            CHECK(r.thinking_token_count <= (size_t)budget);
            CHECK(r.answer_token_count > 0);
        }
    }
    for (int k = 0; k < 10; ++k) {
        backend->reseed(mix_seed(100, (uint64_t)k));
        GenerationResult r = backend->generate(s, {}, natural_stop_policy(), 2048);
        if (r.thinking_token_count > 16) ++natural_over_16;
    }
    CHECK(natural_over_16 > 0);  // the 16-token budget actually binds
}

TEST_CASE("test-time scaling on the toy injects exact waits under the cap") {
    auto backend = toy_decoder(23);
    const BenchSample& s = mini_corpus().at("reas-005");
    const long cap = 64;
    int dominated = 0;
    for (int k = 0; k < 10; ++k) {
        const uint64_t seed = mix_seed(7000, (uint64_t)k);
        size_t len[2] = {0, 0};
        for (long wc = 1; wc <= 2; ++wc) {
            backend->reseed(seed);
            GenerationResult r =
                backend->generate(s, {}, test_time_scaling_policy(cap, 0.5, wc), 4096);
            CHECK(count_word(r.thinking_text, kWaitToken) == (size_t)wc);
            CHECK(r.thinking_token_count <= (size_t)cap);
            len[wc - 1] = r.thinking_token_count;
        }
        if (len[1] >= len[0]) ++dominated;
    }
    CHECK(dominated >= 9);
}

// ---------------------------------------------------------------- records

TEST_CASE("generation records round-trip through JSONL") {
    temp_dir tmp("records");
    const std::string path = (tmp.path / "records.jsonl").string();

    std::vector<GenerationRecord> recs(3);
    recs[0].sample_id = "s1";
    recs[0].control = LengthControl::budget_forcing(16);
    recs[0].seed = 0xdeadbeefcafef00dull;
    recs[0].thinking_text = "count the legs again";
    recs[0].answer_text = "the answer is C";
    recs[0].thinking_token_count = 4;
    recs[0].answer_token_count = 4;
    recs[0].backend_fingerprint = "toy-test";
    recs[1] = recs[0];
    recs[1].sample_id = "s2";
    recs[1].control = LengthControl::latent_steering(0.1);
    recs[2] = recs[0];
    recs[2].sample_id = "s3";
    recs[2].thinking_text = "";
    recs[2].thinking_token_count = 0;

    write_records(path, recs);
    auto back = read_records(path);
    REQUIRE(back.size() == 3);
    for (size_t i = 0; i < 3; ++i) CHECK(back[i] == recs[i]);
    CHECK(back[0].key() == "s1/budget:16/deadbeefcafef00d");

    std::ofstream bad(tmp.path / "bad.jsonl");
    bad << record_to_json(recs[0]) << "\n" << "{not json\n";
    bad.close();
    try {
        read_records((tmp.path / "bad.jsonl").string());
        FAIL("expected malformed record error");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("malformed record") != std::string::npos);
        CHECK(msg.find(":2") != std::string::npos);
    }
}

// ---------------------------------------------------------------- steering

static GenerationRecord stub_record(const std::string& id, size_t think_len) {
    GenerationRecord r;
    r.sample_id = id;
    r.control = LengthControl::none_control();
    r.seed = fnv1a64(id);
    r.thinking_token_count = think_len;
    return r;
}

TEST_CASE("median partition splits strictly above and below") {
    std::vector<GenerationRecord> recs = {stub_record("a", 5), stub_record("b", 10),
                                          stub_record("c", 100), stub_record("d", 200)};
    TracePartition p = partition_traces(recs, PartitionRule::median);
    CHECK(p.long_keys == std::set<std::string>{recs[2].key(), recs[3].key()});
    CHECK(p.short_keys == std::set<std::string>{recs[0].key(), recs[1].key()});
    CHECK(p.long_stats.count == 2);
    CHECK(p.long_stats.mean_len == doctest::Approx(150.0));
    CHECK(p.short_stats.mean_len == doctest::Approx(7.5));

    // records at the median join neither side
    std::vector<GenerationRecord> tie = {stub_record("a", 1), stub_record("b", 4),
                                         stub_record("c", 4), stub_record("d", 4),
                                         stub_record("e", 9)};
    TracePartition q = partition_traces(tie, PartitionRule::median);
    CHECK(q.long_keys == std::set<std::string>{tie[4].key()});
    CHECK(q.short_keys == std::set<std::string>{tie[0].key()});

    std::vector<GenerationRecord> flat = {stub_record("a", 7), stub_record("b", 7),
                                          stub_record("c", 7), stub_record("d", 7)};
    CHECK_THROWS_AS(partition_traces(flat, PartitionRule::median), PartitionError);
    CHECK_THROWS_AS(partition_traces({stub_record("a", 1)}, PartitionRule::median),
                    PartitionError);
}

TEST_CASE("quartile partition takes floor(n/4) from each end deterministically") {
    std::vector<GenerationRecord> recs;
    for (int i = 0; i < 10; ++i) recs.push_back(stub_record("r" + std::to_string(i), 10 + i));
    TracePartition p = partition_traces(recs, PartitionRule::quartile);
    CHECK(p.short_keys == std::set<std::string>{recs[0].key(), recs[1].key()});
    CHECK(p.long_keys == std::set<std::string>{recs[8].key(), recs[9].key()});

    // equal lengths break ties by key, so the split is reproducible
    std::vector<GenerationRecord> tied;
    for (int i = 0; i < 8; ++i) tied.push_back(stub_record("t" + std::to_string(i), i < 4 ? 5 : 50));
    TracePartition q1 = partition_traces(tied, PartitionRule::quartile);
    TracePartition q2 = partition_traces(tied, PartitionRule::quartile);
    CHECK(q1.long_keys == q2.long_keys);
    CHECK(q1.short_keys == q2.short_keys);
    CHECK(q1.short_stats.max_len == 5);
    CHECK(q1.long_stats.min_len == 50);
}

TEST_CASE("direction extraction matches the double-loop oracle and negates on side swap") {
    const int layers = 2, dim = 3;
    std::mt19937_64 rng(404);

    std::vector<GenerationRecord> recs;
    std::map<std::string, SpanStates> states;
    for (int i = 0; i < 20; ++i) {
        GenerationRecord r = stub_record("syn" + std::to_string(i), 0);
        const size_t span = 1 + (size_t)sample_uniform_index(rng, 6);
        r.thinking_token_count = span;
        SpanStates st(layers);
        for (int l = 0; l < layers; ++l) {
            st[l].resize(span);
            for (auto& tok : st[l]) {
                tok.resize(dim);
                for (auto& v : tok) v = (float)normal_double(rng);
            }
        }
        states[r.key()] = std::move(st);
        recs.push_back(std::move(r));
    }
    TracePartition part;
    for (int i = 0; i < 20; ++i)
        (i % 2 == 0 ? part.long_keys : part.short_keys).insert(recs[(size_t)i].key());

    SteeringDirections dirs = extract_from_span_states(part, states, layers, dim);

    // oracle: mean over records of per-record token means, long minus short
    for (int l = 0; l < layers; ++l) {
        for (int d = 0; d < dim; ++d) {
            double side[2] = {0.0, 0.0};
            for (int which = 0; which < 2; ++which) {
                const auto& keys = which == 0 ? part.long_keys : part.short_keys;
                for (const auto& key : keys) {
                    const auto& toks = states.at(key)[(size_t)l];
                    double m = 0.0;
                    for (const auto& tok : toks) m += tok[(size_t)d];
                    side[which] += m / (double)toks.size();
                }
                side[which] /= (double)keys.size();
            }
            CHECK(dirs.direction[(size_t)l][(size_t)d] ==
                  doctest::Approx(side[0] - side[1]).epsilon(1e-9));
        }
    }

    TracePartition swapped = part;
    std::swap(swapped.long_keys, swapped.short_keys);
    SteeringDirections neg = extract_from_span_states(swapped, states, layers, dim);
    for (int l = 0; l < layers; ++l)
        for (int d = 0; d < dim; ++d)
            CHECK(neg.direction[(size_t)l][(size_t)d] == -dirs.direction[(size_t)l][(size_t)d]);

    TracePartition missing = part;
    missing.long_keys.insert("absent/none/0000000000000000");
    CHECK_THROWS(extract_from_span_states(missing, states, layers, dim));
}

TEST_CASE("make_interventions scales raw directions and enforces the alpha range") {
    SteeringDirections dirs;
    dirs.layer_count = 4;
    dirs.hidden_dim = 2;
    dirs.direction.assign(4, {2.0, -2.0});
    dirs.mean_long = dirs.mean_short = dirs.direction;

    auto specs = make_interventions(dirs, SteeringConfig{0.05, {}});
    REQUIRE(specs.size() == 4);
    for (int l = 0; l < 4; ++l) {
        CHECK(specs[(size_t)l].layer == l);
        CHECK(specs[(size_t)l].scale == 0.05);
        CHECK(specs[(size_t)l].direction == std::vector<double>{2.0, -2.0});
    }

    // additive application: state (1,1) moves to (1.1, 0.9)
    std::vector<double> state = {1.0, 1.0};
    for (size_t i = 0; i < state.size(); ++i)
        state[i] += specs[0].scale * specs[0].direction[i];
    CHECK(state[0] == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(state[1] == doctest::Approx(0.9).epsilon(1e-12));

    CHECK_THROWS_AS(make_interventions(dirs, SteeringConfig{0.2, {}}), std::invalid_argument);
    CHECK_THROWS_AS(make_interventions(dirs, SteeringConfig{0.05, {4}}), std::invalid_argument);

    auto subset = make_interventions(dirs, SteeringConfig{-0.1, {1, 3}});
    REQUIRE(subset.size() == 2);
    CHECK(subset[0].layer == 1);
    CHECK(subset[1].layer == 3);
}

TEST_CASE("directions extracted from toy records align with the planted unit") {
    auto backend = toy_decoder(1);
    const Corpus& corpus = mini_corpus();
    auto recs = natural_records(*backend, corpus, 6, 99);
    REQUIRE(recs.size() >= 50);

    TracePartition part = partition_traces(recs, PartitionRule::median);
    SteeringDirections dirs = extract_directions(part, recs, corpus, *backend);

    CHECK(dirs.layer_count == backend->describe().layer_count);
    CHECK(dirs.hidden_dim == backend->describe().hidden_dim);
    CHECK(dirs.corpus_fingerprint == corpus.fingerprint());
    CHECK(dirs.backend_fingerprint == backend->describe().fingerprint);
    for (int l = 0; l < dirs.layer_count; ++l)
        CHECK(dirs.cosine_to(l, backend->planted_direction()) > 0.9);

    temp_dir tmp("dirs");
    const std::string path = (tmp.path / "dirs.bin").string();
    save_directions(path, dirs);
    SteeringDirections back = load_directions(path);
    CHECK(back.direction == dirs.direction);
    CHECK(back.mean_long == dirs.mean_long);
    CHECK(back.mean_short == dirs.mean_short);
    CHECK(back.count_long == dirs.count_long);
    CHECK(back.rule == dirs.rule);
    CHECK(back.corpus_fingerprint == dirs.corpus_fingerprint);
    CHECK(back.backend_fingerprint == dirs.backend_fingerprint);

    // steering with the extracted directions moves mean length the right way
    const BenchSample& s = corpus.at("reas-001");
    double mean_pos = 0.0, mean_neg = 0.0;
    const int pairs = 10;
    for (int k = 0; k < pairs; ++k) {
        const uint64_t seed = mix_seed(515, (uint64_t)k);
        for (double alpha : {kAlphaMax, kAlphaMin}) {
            SteeringPolicy pol = steering_policy(dirs, alpha, 2048);
            backend->reseed(seed);
            GenerationResult r = backend->generate(s, pol.interventions, pol.stop, 4096);
            (alpha > 0 ? mean_pos : mean_neg) += (double)r.thinking_token_count / pairs;
        }
    }
    CHECK(mean_pos > mean_neg);
}

// ---------------------------------------------------------------- scoring

static std::vector<Option> abcd() {
    return {{'A', "first"}, {'B', "second"}, {'C', "third"}, {'D', "fourth"}};
}

TEST_CASE("choice extraction prefers explicit patterns and falls back to standalone labels") {
    CHECK(extract_choice("The answer is C.", abcd()) == 'C');
    CHECK(extract_choice("I pick (b), final.", abcd()) == 'B');
    CHECK(extract_choice("Surely D", abcd()) == 'D');
    CHECK(extract_choice("first A then the answer is B", abcd()) == 'B');
    CHECK(!extract_choice("too blurry to tell", abcd()).has_value());
    CHECK(!extract_choice("the answer is E", abcd()).has_value());
    CHECK_THROWS_AS(extract_choice("anything", {}), ScoringError);
}

TEST_CASE("choice extraction clears the hand-labeled fixture") {
    std::ifstream in(data_path("choice_extraction_cases.jsonl"));
    REQUIRE(in.good());
    std::string line;
    int total = 0, matched = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        std::vector<Option> opts;
        for (const auto& o : j["options"]) opts.push_back({o.get<std::string>()[0], ""});
        auto got = extract_choice(j["reply"].get<std::string>(), opts);
        const std::string want = j["expected"].get<std::string>();
        const std::string have = got ? std::string(1, *got) : "";
        ++total;
        if (have == want) ++matched;
    }
    CHECK(total == 200);
    CHECK(matched >= 195);
}

TEST_CASE("mock rubric scores by exactness, containment, then overlap") {
    CHECK(MockJudge::rubric_score("a red apple", "a red apple") == 6);
    CHECK(MockJudge::rubric_score("a red apple", "A red APPLE!") == 6);
    CHECK(MockJudge::rubric_score("a red apple", "I see a red apple here") == 5);
    CHECK(MockJudge::rubric_score("red apple on table", "table on red apple") == 4);
    CHECK(MockJudge::rubric_score("red apple basket", "red apple crate") == 3);
    CHECK(MockJudge::rubric_score("red apple", "red car") == 2);
    CHECK(MockJudge::rubric_score("one two three four", "four five six seven eight") == 1);
    CHECK(MockJudge::rubric_score("cat", "dog") == 0);
}

TEST_CASE("judge reply parsing takes the last verdict line and range-checks scores") {
    JudgeVerdict v = parse_judge_reply(VerdictMode::perception_scored, "Score: 4\nScore: 2");
    CHECK(v.score == 2);
    CHECK(v.hallucination);
    JudgeVerdict w = parse_judge_reply(VerdictMode::perception_scored, "noise Score: 3 trailing");
    CHECK(w.score == 3);
    CHECK(!w.hallucination);
    JudgeVerdict c = parse_judge_reply(VerdictMode::reasoning_match, "Consistent: no");
    CHECK(!c.consistent);
    CHECK_THROWS_AS(parse_judge_reply(VerdictMode::perception_scored, "Score: 9"), ScoringError);
    CHECK_THROWS_AS(parse_judge_reply(VerdictMode::perception_scored, "no verdict"), ScoringError);
    CHECK_THROWS_AS(parse_judge_reply(VerdictMode::reasoning_match, "Score: 4"), ScoringError);
}

static BenchSample open_sample(const std::string& id, Task task, const std::string& gt) {
    BenchSample s;
    s.id = id;
    s.task = task;
    s.format = Format::open_ended;
    s.question = "describe";
    s.ground_truth = gt;
    s.source_tag = "unit";
    return s;
}

static GenerationRecord answer_record(const std::string& id, const std::string& answer) {
    GenerationRecord r;
    r.sample_id = id;
    r.control = LengthControl::none_control();
    r.seed = 1;
    r.thinking_text = "looking";
    r.answer_text = answer;
    r.thinking_token_count = 1;
    r.answer_token_count = 1;
    r.backend_fingerprint = "toy-test";
    return r;
}

TEST_CASE("hallucination flag tracks the score threshold at the boundary") {
    MockJudge judge;
    // rubric 3 sits exactly at the threshold: not hallucinated
    BenchSample s3 = open_sample("p3", Task::perception, "red apple basket");
    JudgeVerdict v3 = judge_open_ended(s3, answer_record("p3", "red apple crate"), judge);
    CHECK(v3.state == VerdictState::scored);
    CHECK(v3.score == 3);
    CHECK(!v3.hallucination);
    CHECK(v3.score >= kHallucinationThreshold);

    // rubric 2 falls below it
    BenchSample s2 = open_sample("p2", Task::perception, "red apple");
    JudgeVerdict v2 = judge_open_ended(s2, answer_record("p2", "red car"), judge);
    CHECK(v2.score == 2);
    CHECK(v2.hallucination);
    CHECK_NOTHROW(v2.validate());

    // tampering with the pair breaks the invariant
    JudgeVerdict broken = v2;
    broken.hallucination = false;
    CHECK_THROWS(broken.validate());
}

TEST_CASE("reasoning items short-circuit on exact match and judge otherwise") {
    MockJudge judge;
    BenchSample s = open_sample("r1", Task::reasoning, "90");
    JudgeVerdict exact = judge_open_ended(s, answer_record("r1", "the answer is 90"), judge);
    CHECK(exact.state == VerdictState::scored);
    // normalized containment is not exact match, so this consults the judge
    CHECK(exact.judge_model == "mock");

    JudgeVerdict direct = judge_open_ended(s, answer_record("r1", "90"), judge);
    CHECK(direct.judge_model == "exact-match");
    CHECK(direct.consistent);

    JudgeVerdict wrong = judge_open_ended(s, answer_record("r1", "45"), judge);
    CHECK(wrong.state == VerdictState::scored);
    CHECK(!wrong.consistent);
}

struct down_judge final : JudgeClient {
    std::string name() const override { return "down"; }
    std::string complete(const std::string&) override {
        throw JudgeUnavailable("connection refused");
    }
};

TEST_CASE("judge outage yields pending verdicts, never coerced scores") {
    down_judge judge;
    BenchSample s = open_sample("p1", Task::perception, "a stop sign");
    JudgeVerdict v = judge_open_ended(s, answer_record("p1", "a yield sign"), judge);
    CHECK(v.state == VerdictState::pending);
    CHECK_NOTHROW(v.validate());

    std::vector<ScoredItem> items(4);
    for (auto& it : items) it.task = Task::perception;
    items[0].hallucination = false;
    items[1].hallucination = true;
    items[2].pending = true;
    items[3].pending = true;
    AccuracyResult acc = accuracy(items, Task::perception);
    CHECK(acc.scored == 2);
    CHECK(acc.pending == 2);
    CHECK(acc.value == doctest::Approx(0.5));

    std::vector<ScoredItem> all_pending(2);
    for (auto& it : all_pending) {
        it.task = Task::perception;
        it.pending = true;
    }
    CHECK_THROWS_AS(accuracy(all_pending, Task::perception), ScoringError);
}

TEST_CASE("verdicts replay from the stored reply and round-trip as JSONL") {
    MockJudge judge;
    BenchSample s = open_sample("p9", Task::perception, "three ducks near a pond");
    JudgeVerdict v = judge_open_ended(s, answer_record("p9", "two ducks near a pond"), judge);

    JudgeVerdict replayed = replay_verdict(v);
    CHECK(replayed.score == v.score);
    CHECK(replayed.hallucination == v.hallucination);
    CHECK(replayed.state == VerdictState::scored);

    temp_dir tmp("verdicts");
    const std::string path = (tmp.path / "v.jsonl").string();
    append_verdicts(path, {v});
    auto back = read_verdicts(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].score == v.score);
    CHECK(back[0].reply == v.reply);
    CHECK(back[0].judge_version == v.judge_version);
}

TEST_CASE("score_records handles MCQ directly and flags wrong perception picks") {
    const Corpus& corpus = mini_corpus();
    MockJudge judge;
    std::vector<GenerationRecord> recs;
    // reas-001 gt C, correct; perc-001 gt A, wrong pick = hallucinated percept
    recs.push_back(answer_record("reas-001", "the answer is C"));
    recs.push_back(answer_record("perc-001", "the answer is B"));
    recs.push_back(answer_record("reas-006", "90"));

    ScoreOutput out = score_records(corpus, recs, judge);
    REQUIRE(out.items.size() == 3);
    CHECK(out.items[0].correct);
    CHECK(!out.items[1].correct);
    CHECK(out.items[1].hallucination);
    CHECK(out.items[2].correct);
    CHECK(out.verdicts.size() == 1);  // only the open-ended record consults the judge
}

TEST_CASE("unreachable live judge degrades to pending") {
    HttpJudgeConfig cfg;
    cfg.endpoint = "http://127.0.0.1:9/score";
    cfg.max_attempts = 1;
    cfg.backoff_ms = 1;
    HttpJudge judge(cfg);
    BenchSample s = open_sample("p1", Task::perception, "a stop sign");
    JudgeVerdict v = judge_open_ended(s, answer_record("p1", "something else"), judge);
    CHECK(v.state == VerdictState::pending);
}

// ---------------------------------------------------------------- metric

static BalanceCurve curve_of(std::vector<std::array<double, 3>> trh) {
    BalanceCurve c;
    for (const auto& p : trh) {
        BalancePoint bp;
        bp.T = p[0];
        bp.R = p[1];
        bp.H = p[2];
        bp.n_reasoning = bp.n_perception = 10;
        c.points.push_back(bp);
    }
    return c;
}

TEST_CASE("normalization attains both axis extremes and names degenerate axes") {
    BalanceCurve raw = curve_of({{10, 10, 0.9}, {20, 20, 0.6}, {30, 30, 0.3}});
    BalanceCurve norm = normalize_curve(raw);
    CHECK(norm.normalized);
    double rmin = 1e9, rmax = -1e9, hmin = 1e9, hmax = -1e9;
    for (const auto& p : norm.points) {
        rmin = std::min(rmin, p.R);
        rmax = std::max(rmax, p.R);
        hmin = std::min(hmin, p.H);
        hmax = std::max(hmax, p.H);
    }
    CHECK(rmin == 0.0);
    CHECK(rmax == 1.0);
    CHECK(hmin == 0.0);
    CHECK(hmax == 1.0);
    CHECK(norm.r_min == 10.0);
    CHECK(norm.r_max == 30.0);

    try {
        normalize_curve(curve_of({{1, 5, 0.2}, {2, 5, 0.8}}));
        FAIL("expected degenerate R axis");
    } catch (const DegenerateCurveError& e) {
        CHECK(e.axis == "R");
    }
    try {
        normalize_curve(curve_of({{1, 1, 0.4}, {2, 5, 0.4}}));
        FAIL("expected degenerate H axis");
    } catch (const DegenerateCurveError& e) {
        CHECK(e.axis == "H");
    }
    CHECK_THROWS_AS(normalize_curve(curve_of({{1, 2, 3}})), MetricError);
}

TEST_CASE("area fixed points and the hand-computed three-point example") {
    BalanceCurve flat = curve_of({{0, 0, 1}, {1, 1, 1}});
    flat.normalized = true;
    CHECK(rh_auc(flat) == 1.0);

    BalanceCurve diag = curve_of({{0, 0, 0}, {1, 1, 1}});
    diag.normalized = true;
    CHECK(rh_auc(diag) == 0.5);

    // raw R 10/20/30 with H 0.9/0.6/0.3 normalizes onto the anti-diagonal
    BalanceCurve hand = curve_of({{5, 10, 0.9}, {15, 20, 0.6}, {40, 30, 0.3}});
    CHECK(rh_auc(normalize_curve(hand)) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(rh_auc(hand), MetricError);  // unnormalized input refused
}

TEST_CASE("area integration matches the piecewise-linear oracle on random curves") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 25; ++trial) {
        const size_t n = 3 + sample_uniform_index(rng, 18);
        BalanceCurve c;
        for (size_t i = 0; i < n; ++i) {
            BalancePoint p;
            p.T = (double)i;
            p.R = uniform_double(rng);
            p.H = uniform_double(rng);
            c.points.push_back(p);
        }
        c.normalized = true;

        auto sorted = c.points;
        std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
            if (a.R != b.R) return a.R < b.R;
            return a.T < b.T;
        });
        double oracle = 0.0;
        for (size_t i = 1; i < sorted.size(); ++i)
            oracle += (sorted[i].R - sorted[i - 1].R) * 0.5 * (sorted[i].H + sorted[i - 1].H);

        CHECK(rh_auc(c) == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("ties in R keep their T order under the stable sort") {
    BalanceCurve c = curve_of({{30, 0.5, 0.0}, {10, 0.5, 1.0}, {0, 0.0, 0.0}, {40, 1.0, 1.0}});
    c.normalized = true;
    // tie at R 0.5 orders by T: H runs 0 -> 1 -> 0 -> 1 across R 0, .5, .5, 1
    const double expect = 0.5 * 0.5 * (0.0 + 1.0) + 0.0 + 0.5 * 0.5 * (0.0 + 1.0);
    CHECK(rh_auc(c) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("summaries aggregate sample-weighted accuracies and the table renders fixtures") {
    BalanceCurve raw;
    BalancePoint a;
    a.T = 10;
    a.R = 0.5;
    a.H = 0.8;
    a.n_reasoning = 10;
    a.n_perception = 10;
    a.reasoning_mean_len = 100;
    a.perception_mean_len = 50;
    BalancePoint b = a;
    b.T = 20;
    b.R = 0.7;
    b.H = 0.6;
    b.n_reasoning = 30;
    b.n_perception = 10;
    b.reasoning_mean_len = 200;
    b.perception_mean_len = 70;
    raw.points = {a, b};

    ModelSummary sum = summarize("toy", "RL", raw);
    CHECK(sum.reasoning_acc_pct == doctest::Approx(65.0));   // (0.5*10 + 0.7*30) / 40
    CHECK(sum.perception_acc_pct == doctest::Approx(70.0));  // (0.8 + 0.6) / 2
    CHECK(sum.reasoning_mean_len == doctest::Approx(175.0));
    CHECK(sum.auc == doctest::Approx(0.5));  // two points normalize to the diagonal

    ModelSummary fixture;
    fixture.name = "Ocean-R1-7B";
    fixture.paradigm = "RL";
    fixture.perception_acc_pct = 62.3;
    fixture.perception_mean_len = 90.4;
    fixture.reasoning_acc_pct = 51.8;
    fixture.reasoning_mean_len = 262.2;
    fixture.auc = 0.63;
    const std::string table = balance_report({fixture});
    CHECK(table.find("model") != std::string::npos);
    CHECK(table.find("rh-auc") != std::string::npos);
    CHECK(table.find("Ocean-R1-7B") != std::string::npos);
    CHECK(table.find("62.3") != std::string::npos);
    CHECK(table.find("0.63") != std::string::npos);
}

TEST_CASE("curves round-trip through CSV") {
    BalanceCurve c = curve_of({{0, 0.2, 0.7}, {16, 0.8, 0.9}, {64, 0.7, 0.5}});
    c.points[0].control_tag = "budget:0";
    c.points[1].control_tag = "budget:16";
    c.points[2].control_tag = "budget:64";
    c.points[1].reasoning_mean_len = 15.5;
    c.points[1].perception_mean_len = 16.5;

    BalanceCurve back = curve_from_csv(curve_to_csv(c));
    REQUIRE(back.points.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(back.points[i].T == c.points[i].T);
        CHECK(back.points[i].R == c.points[i].R);
        CHECK(back.points[i].H == c.points[i].H);
        CHECK(back.points[i].control_tag == c.points[i].control_tag);
    }
    CHECK(back.points[1].reasoning_mean_len == 15.5);

    // bare T,R,H rows parse too
    BalanceCurve bare = curve_from_csv("0,0.1,0.9\n1,0.5,0.6\n");
    REQUIRE(bare.points.size() == 2);
    CHECK(bare.points[1].R == 0.5);
}

// ---------------------------------------------------------------- attention

static StepTrace crafted_query(size_t position, std::vector<float> row, size_t layers = 1) {
    StepTrace tr;
    tr.position = position;
    tr.hidden.assign(layers, {});
    tr.attention.assign(layers, row);
    return tr;
}

static SegmentMap crafted_map(size_t total, size_t response_end) {
    SegmentMap m;
    m.ranges[Segment::visual] = {0, 4};
    m.ranges[Segment::instruction] = {4, 7};
    m.ranges[Segment::system] = {7, 9};
    m.ranges[Segment::response] = {9, response_end};
    m.prompt_len = 9;
    m.total_len = total;
    return m;
}

TEST_CASE("uniform attention row yields exact shares") {
    // sixteenths at positions 0-9: visual 4, instruction 3, system 2, response 1
    std::vector<float> row(11, 0.0625f);
    row[10] = 0.0f;
    AttentionProfile prof = attention_shares({crafted_query(10, row)}, crafted_map(11, 11));
    prof.validate();
    CHECK(prof.shares[0].at(Segment::visual) == 0.4);
    CHECK(prof.shares[0].at(Segment::instruction) == 0.3);
    CHECK(prof.shares[0].at(Segment::system) == 0.2);
    CHECK(prof.shares[0].at(Segment::response) == 0.1);
    CHECK(prof.excluded_mass[0] == 0.0);
}

TEST_CASE("all mass on one visual token gives visual share 1") {
    std::vector<float> row(11, 0.0f);
    row[2] = 1.0f;
    AttentionProfile prof = attention_shares({crafted_query(10, row)}, crafted_map(11, 11));
    CHECK(prof.shares[0].at(Segment::visual) == 1.0);
    CHECK(prof.shares[0].at(Segment::instruction) == 0.0);
    CHECK(prof.shares[0].at(Segment::system) == 0.0);
    CHECK(prof.shares[0].at(Segment::response) == 0.0);
}

TEST_CASE("mass outside named segments is excluded and reported") {
    // the query position itself sits outside the response interval
    std::vector<float> row(12, 0.0f);
    for (size_t p = 0; p < 10; ++p) row[p] = 0.0625f;
    row[11] = 0.375f;
    AttentionProfile prof = attention_shares({crafted_query(11, row)}, crafted_map(12, 11));
    CHECK(prof.shares[0].at(Segment::visual) == 0.4);  // renormalized over named mass
    CHECK(prof.shares[0].at(Segment::response) == 0.1);
    CHECK(prof.excluded_mass[0] == 0.375);
}

TEST_CASE("attention shares pool across queries before renormalizing") {
    std::vector<float> all_visual(11, 0.0f);
    all_visual[1] = 1.0f;
    std::vector<float> all_system(11, 0.0f);
    all_system[7] = 1.0f;
    AttentionProfile prof = attention_shares(
        {crafted_query(10, all_visual), crafted_query(10, all_system)}, crafted_map(11, 11));
    CHECK(prof.shares[0].at(Segment::visual) == 0.5);
    CHECK(prof.shares[0].at(Segment::system) == 0.5);
}

TEST_CASE("attention share input validation") {
    std::vector<float> short_row(5, 0.2f);
    CHECK_THROWS_AS(attention_shares({crafted_query(10, short_row)}, crafted_map(11, 11)),
                    AttentionError);
    CHECK_THROWS_AS(attention_shares({}, crafted_map(11, 11)), AttentionError);

    AttentionProfile bad;
    bad.shares.assign(1, {{Segment::visual, 0.6},
                          {Segment::instruction, 0.2},
                          {Segment::system, 0.1},
                          {Segment::response, 0.2}});
    bad.excluded_mass.assign(1, 0.0);
    CHECK_THROWS_AS(bad.validate(), AttentionError);
}

TEST_CASE("profile deltas subtract per layer and average the visual column") {
    AttentionProfile a, b;
    a.shares.assign(2, {{Segment::visual, 0.4},
                        {Segment::instruction, 0.3},
                        {Segment::system, 0.2},
                        {Segment::response, 0.1}});
    b = a;
    b.shares[0][Segment::visual] = 0.3;
    b.shares[0][Segment::instruction] = 0.4;
    a.excluded_mass.assign(2, 0.0);
    b.excluded_mass.assign(2, 0.0);

    ProfileDelta d = compare_profiles(a, b);
    CHECK(d.delta[0][Segment::visual] == doctest::Approx(-0.1));
    CHECK(d.delta[0][Segment::instruction] == doctest::Approx(0.1));
    CHECK(d.delta[1][Segment::visual] == doctest::Approx(0.0));
    CHECK(d.mean_visual_delta == doctest::Approx(-0.05));
}

TEST_CASE("toy attention favors the visual segment and steering diverts it") {
    auto backend = toy_decoder(1);
    const Corpus& corpus = mini_corpus();

    // natural generations: visual share strictly highest at every layer
    std::vector<AttentionProfile> profiles;
    for (const auto& s : corpus.samples()) {
        backend->reseed(mix_seed(31, fnv1a64(s.id)));
        GenerationResult r = backend->generate(s, {}, natural_stop_policy(), 512);
        profiles.push_back(attention_shares(r.traces, r.segmap));
    }
    AttentionProfile mean = mean_profile(profiles);
    mean.validate();
    for (const auto& layer : mean.shares) {
        const double vis = layer.at(Segment::visual);
        CHECK(vis > layer.at(Segment::instruction));
        CHECK(vis > layer.at(Segment::system));
        CHECK(vis > layer.at(Segment::response));
    }

    // lengthening steering lowers the visual share on generation-time traces
    auto recs = natural_records(*backend, corpus, 6, 99);
    TracePartition part = partition_traces(recs, PartitionRule::median);
    SteeringDirections dirs = extract_directions(part, recs, corpus, *backend);
    auto profiles_at = [&](double alpha) {
        std::vector<AttentionProfile> out;
        std::vector<InterventionSpec> iv;
        if (alpha != 0.0) iv = make_interventions(dirs, SteeringConfig{alpha, {}});
        for (const auto& s : corpus.samples()) {
            for (int k = 0; k < 3; ++k) {
                backend->reseed(mix_seed(mix_seed(77, fnv1a64(s.id)), (uint64_t)k));
                GenerationResult r = backend->generate(s, iv, safety_cap_policy(2048), 4096);
                out.push_back(attention_shares(r.traces, r.segmap));
            }
        }
        return mean_profile(out);
    };
    ProfileDelta d = compare_profiles(profiles_at(0.0), profiles_at(kAlphaMax));
    CHECK(d.mean_visual_delta < 0.0);
}

// ---------------------------------------------------------------- harness

TEST_CASE("peak detection smooths interior points and flags monotone series") {
    PeakResult p = detect_peak({10, 20, 30}, {0.3, 0.6, 0.4});
    CHECK(p.index == 1);
    CHECK(p.t == 20);
    CHECK(p.t_low == 10);
    CHECK(p.t_high == 30);
    CHECK(!p.monotone);

    PeakResult m = detect_peak({1, 2, 3, 4}, {0.1, 0.2, 0.3, 0.4});
    CHECK(m.monotone);
    CHECK(m.t == 4);

    // unsorted input is sorted by T first
    PeakResult u = detect_peak({30, 10, 20}, {0.4, 0.3, 0.6});
    CHECK(u.t == 20);

    CHECK_THROWS_AS(detect_peak({1, 1, 2}, {0.1, 0.2, 0.3}), HarnessError);
    CHECK_THROWS_AS(detect_peak({1, 2}, {0.1, 0.2}), HarnessError);

    // noisy unimodal series: recovered peak stays within one grid step
    std::mt19937_64 rng(88);
    int hits = 0;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> t, acc;
        const double true_peak = 3 + (double)sample_uniform_index(rng, 4);
        for (int i = 0; i < 10; ++i) {
            t.push_back(i);
            const double q = std::exp(-0.5 * (i - true_peak) * (i - true_peak) / 4.0);
            acc.push_back(q + 0.04 * (uniform_double(rng) - 0.5));
        }
        PeakResult r = detect_peak(t, acc);
        if (std::fabs(r.t - true_peak) <= 1.0) ++hits;
    }
    CHECK(hits >= 9);
}

TEST_CASE("run config validation and JSON round-trip") {
    RunConfig cfg;
    cfg.corpus_path = data_path("mini_corpus.jsonl");
    cfg.out_dir = "/tmp/somewhere";
    cfg.grid = {LengthControl::budget_forcing(0), LengthControl::budget_forcing(16)};
    CHECK_NOTHROW(cfg.validate());

    RunConfig back = run_config_from_json(run_config_to_json(cfg));
    CHECK(back.corpus_path == cfg.corpus_path);
    REQUIRE(back.grid.size() == 2);
    CHECK(back.grid[1].tag() == "budget:16");
    CHECK(back.seed == cfg.seed);

    RunConfig steer = cfg;
    steer.grid = {LengthControl::latent_steering(0.1)};
    try {
        steer.validate();
        FAIL("expected steering grid to demand directions");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("steer extract") != std::string::npos);
    }

    RunConfig empty_grid = cfg;
    empty_grid.grid.clear();
    CHECK_THROWS(empty_grid.validate());

    CHECK_THROWS(make_backend("gpt", 1));
    CHECK_THROWS(make_judge("oracle"));
}

TEST_CASE("store cells are content-addressed and immutable") {
    temp_dir tmp("store");
    RunStore store(tmp.str());
    store.init("{\"config\":1}");
    CHECK(store.manifest() == "{\"config\":1}");

    // re-opening with the same manifest is fine, a different one refuses
    RunStore again(tmp.str());
    CHECK_NOTHROW(again.init("{\"config\":1}"));
    try {
        RunStore other(tmp.str());
        other.init("{\"config\":2}");
        FAIL("expected manifest mismatch");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("different config") != std::string::npos);
    }

    const std::string key = RunStore::cell_key("budget:16", "reas-001", 42);
    CHECK(key == RunStore::cell_key("budget:16", "reas-001", 42));
    CHECK(key != RunStore::cell_key("budget:16", "reas-001", 43));
    CHECK(key != RunStore::cell_key("budget:8", "reas-001", 42));

    CHECK(!store.has_record(key));
    GenerationRecord rec = answer_record("reas-001", "the answer is C");
    store.put_record(key, rec);
    CHECK(store.has_record(key));
    CHECK(store.get_record(key) == rec);

    // immutable: a second put with different content leaves the first intact
    GenerationRecord other_rec = rec;
    other_rec.answer_text = "the answer is D";
    store.put_record(key, other_rec);
    CHECK(store.get_record(key) == rec);

    CHECK(!store.get_curve().has_value());
    BalanceCurve c = curve_of({{0, 0.2, 0.7}, {16, 0.8, 0.9}});
    c.points[0].control_tag = "budget:0";
    c.points[1].control_tag = "budget:16";
    store.put_curve(c);
    REQUIRE(store.get_curve().has_value());
    CHECK(store.get_curve()->points.size() == 2);
}

static RunConfig smoke_config(const std::string& out_dir) {
    RunConfig cfg;
    cfg.corpus_path = data_path("mini_corpus.jsonl");
    cfg.backend = "toy";
    cfg.seed = 7;
    cfg.grid = {LengthControl::zerothink(), LengthControl::budget_forcing(16),
                LengthControl::budget_forcing(64)};
    cfg.judge = "mock";
    cfg.out_dir = out_dir;
    cfg.workers = 4;
    cfg.max_tokens = 512;
    return cfg;
}

TEST_CASE("sweeps complete, resume from partial stores, and rerun byte-identically") {
    temp_dir base("sweep");
    const fs::path run_a = base.path / "a";
    const fs::path run_b = base.path / "b";

    SweepResult first = run_sweep(smoke_config(run_a.string()));
    CHECK(!first.aborted);
    REQUIRE(first.outcomes.size() == 3);
    for (const auto& o : first.outcomes) {
        CHECK(o.complete);
        CHECK(!o.withheld);
        CHECK(o.error.empty());
    }
    REQUIRE(first.curve.points.size() == 3);
    CHECK(first.curve.points[0].T == 0.0);            // zerothink
    CHECK(first.curve.points[1].T <= 16.0);           // budget bound
    CHECK(first.curve.points[1].n_reasoning == 10);
    CHECK(first.curve.points[1].n_perception == 10);

    // independent rerun of the same config lands on identical bytes
    SweepResult second = run_sweep(smoke_config(run_b.string()));
    CHECK(dir_digest(run_a) == dir_digest(run_b));
    CHECK(second.curve.points[1].R == first.curve.points[1].R);

    // simulate an interruption: drop half the records, the curve, the profiles
    std::vector<fs::path> record_files;
    for (const auto& e : fs::directory_iterator(run_b / "records")) record_files.push_back(e.path());
    std::sort(record_files.begin(), record_files.end());
    for (size_t i = 0; i < record_files.size() / 2; ++i) fs::remove(record_files[i]);
    fs::remove_all(run_b / "curves");
    fs::remove_all(run_b / "profiles");

    SweepResult resumed = run_sweep(smoke_config(run_b.string()));
    CHECK(!resumed.aborted);
    CHECK(dir_digest(run_a) == dir_digest(run_b));

    // a stop flag aborts without writing the curve
    const fs::path run_c = base.path / "c";
    int polls = 0;
    SweepResult aborted = run_sweep(smoke_config(run_c.string()), [&polls] { return ++polls > 5; });
    CHECK(aborted.aborted);
    CHECK(!RunStore(run_c.string()).get_curve().has_value());

    // and resuming after the abort still converges to the same bytes
    SweepResult finished = run_sweep(smoke_config(run_c.string()));
    CHECK(!finished.aborted);
    CHECK(dir_digest(run_a) == dir_digest(run_c));

    // report bundle renders from the finished store
    RunStore store(run_a.string());
    ReportBundle bundle = emit_report(store);
    CHECK(bundle.files.size() >= 4);
    CHECK(bundle.summary_text.find("rh-auc") != std::string::npos);
    CHECK(bundle.summary_text.find("budget:16") != std::string::npos);
    bool has_svg = false, has_attn = false;
    for (const auto& f : bundle.files) {
        if (f.find(".svg") != std::string::npos) has_svg = true;
        if (f.find("attention.csv") != std::string::npos) has_attn = true;
    }
    CHECK(has_svg);
    CHECK(has_attn);

    // byte-identical stores render byte-identical bundles
    ReportBundle bundle_b = emit_report(RunStore(run_b.string()));
    CHECK(bundle_b.summary_text == bundle.summary_text);
}

TEST_CASE("sweeps with a dead judge withhold curve points instead of fabricating them") {
    temp_dir tmp("withheld");
    RunConfig cfg = smoke_config(tmp.str());
    cfg.grid = {LengthControl::budget_forcing(8)};
    cfg.judge = "live";  // JUDGE_ENDPOINT points nowhere in tests

    const char* saved = std::getenv("JUDGE_ENDPOINT");
    const std::string old = saved ? saved : "";
    setenv("JUDGE_ENDPOINT", "http://127.0.0.1:9/score", 1);
    SweepResult res = run_sweep(cfg);
    if (saved)
        setenv("JUDGE_ENDPOINT", old.c_str(), 1);
    else
        unsetenv("JUDGE_ENDPOINT");

    CHECK(res.outcomes.size() == 1);
    CHECK(res.outcomes[0].withheld);
    CHECK(!res.outcomes[0].complete);
    CHECK(res.curve.points.empty());
}
