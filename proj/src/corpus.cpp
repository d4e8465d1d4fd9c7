#include "rheval/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "rheval/common.hpp"

namespace rheval {

using nlohmann::json;

const char* to_string(Task t) {
    return t == Task::reasoning ? "reasoning" : "perception";
}

const char* to_string(Format f) {
    return f == Format::multiple_choice ? "multiple_choice" : "open_ended";
}

Task task_from_string(const std::string& s) {
    if (s == "reasoning") return Task::reasoning;
    if (s == "perception") return Task::perception;
    throw CorpusError("unknown task: '" + s + "'");
}

Format format_from_string(const std::string& s) {
    if (s == "multiple_choice") return Format::multiple_choice;
    if (s == "open_ended") return Format::open_ended;
    throw CorpusError("unknown format: '" + s + "'");
}

void validate_sample(const BenchSample& s) {
    if (s.id.empty()) throw CorpusError("sample with empty id");
    for (const auto& opt : s.options) {
        if (opt.label < 'A' || opt.label > 'Z') {
            throw CorpusError("sample '" + s.id + "': option label '" +
                              std::string(1, opt.label) + "' is not an uppercase letter A-Z");
        }
    }
    if (s.format == Format::multiple_choice) {
        if (s.options.empty()) {
            throw CorpusError("sample '" + s.id + "': multiple_choice requires options");
        }
        std::set<char> labels;
        for (const auto& opt : s.options) {
            if (!labels.insert(opt.label).second) {
                throw CorpusError("sample '" + s.id + "': duplicate option label '" +
                                  std::string(1, opt.label) + "'");
            }
        }
        if (s.ground_truth.size() != 1 || labels.count(s.ground_truth[0]) == 0) {
            throw CorpusError("sample '" + s.id + "': ground_truth '" + s.ground_truth +
                              "' is not among the option labels");
        }
    } else {
        if (!s.options.empty()) {
            throw CorpusError("sample '" + s.id + "': open_ended must not carry options");
        }
        if (s.ground_truth.empty()) {
            throw CorpusError("sample '" + s.id + "': open_ended requires a ground_truth");
        }
    }
}

Corpus::Corpus(std::vector<BenchSample> samples) : samples_(std::move(samples)) {
    std::set<std::string> ids;
    for (const auto& s : samples_) {
        validate_sample(s);
        if (!ids.insert(s.id).second) {
            throw CorpusError("duplicate sample id '" + s.id + "'");
        }
    }
}

size_t Corpus::count(Task t) const {
    size_t n = 0;
    for (const auto& s : samples_) n += (s.task == t);
    return n;
}

size_t Corpus::count(Task t, Format f) const {
    size_t n = 0;
    for (const auto& s : samples_) n += (s.task == t && s.format == f);
    return n;
}

const BenchSample* Corpus::find(const std::string& id) const {
    for (const auto& s : samples_) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

const BenchSample& Corpus::at(const std::string& id) const {
    const BenchSample* s = find(id);
    if (!s) throw CorpusError("unknown sample id '" + id + "'");
    return *s;
}

uint64_t Corpus::fingerprint() const {
    uint64_t h = fnv1a64("corpus-v1");
    for (const auto& s : samples_) {
        h = fnv1a64(s.id, h);
        h = fnv1a64(to_string(s.task), h);
        h = fnv1a64(to_string(s.format), h);
        h = fnv1a64(s.question, h);
        h = fnv1a64(s.ground_truth, h);
        if (s.image_ref) h = fnv1a64(*s.image_ref, h);
        for (const auto& o : s.options) {
            h = fnv1a64(std::string(1, o.label), h);
            h = fnv1a64(o.text, h);
        }
    }
    return h;
}

static BenchSample sample_from_json(const json& j) {
    BenchSample s;
    s.id = j.at("id").get<std::string>();
    s.task = task_from_string(j.at("task").get<std::string>());
    s.format = format_from_string(j.at("format").get<std::string>());
    if (j.contains("image_ref") && !j["image_ref"].is_null()) {
        s.image_ref = j["image_ref"].get<std::string>();
    }
    s.question = j.at("question").get<std::string>();
    if (j.contains("options")) {
        for (const auto& jo : j["options"]) {
            const auto label = jo.at("label").get<std::string>();
            if (label.size() != 1) {
                throw CorpusError("sample '" + s.id + "': option label '" + label +
                                  "' must be a single letter");
            }
            s.options.push_back({label[0], jo.at("text").get<std::string>()});
        }
    }
    s.ground_truth = j.at("ground_truth").get<std::string>();
    s.source_tag = j.value("source_tag", std::string{});
    return s;
}

static json sample_to_json(const BenchSample& s) {
    json j;
    j["id"] = s.id;
    j["task"] = to_string(s.task);
    j["format"] = to_string(s.format);
    if (s.image_ref) j["image_ref"] = *s.image_ref;
    j["question"] = s.question;
    if (!s.options.empty()) {
        json jopts = json::array();
        for (const auto& o : s.options) {
            jopts.push_back({{"label", std::string(1, o.label)}, {"text", o.text}});
        }
        j["options"] = jopts;
    }
    j["ground_truth"] = s.ground_truth;
    j["source_tag"] = s.source_tag;
    return j;
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot open corpus file: " + path.string());
    std::vector<BenchSample> samples;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            samples.push_back(sample_from_json(j));
        } catch (const json::exception& e) {
            throw CorpusError(path.string() + ":" + std::to_string(line_no) +
                              ": malformed record: " + e.what());
        }
    }
    try {
        return Corpus(std::move(samples));
    } catch (const CorpusError& e) {
        throw CorpusError(path.string() + ": " + e.what());
    }
}

void save_corpus(const Corpus& c, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw CorpusError("cannot write corpus file: " + path.string());
    for (const auto& s : c.samples()) {
        out << sample_to_json(s).dump() << '\n';
    }
}

std::pair<Corpus, Corpus> split_by_task(const Corpus& c) {
    std::vector<BenchSample> reasoning, perception;
    for (const auto& s : c.samples()) {
        (s.task == Task::reasoning ? reasoning : perception).push_back(s);
    }
    return {Corpus(std::move(reasoning)), Corpus(std::move(perception))};
}

}  // namespace rheval
