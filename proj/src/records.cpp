#include "rheval/records.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "rheval/common.hpp"

namespace rheval {

using nlohmann::json;

std::string GenerationRecord::key() const {
    return sample_id + "/" + control.tag() + "/" + hex64(seed);
}

bool GenerationRecord::operator==(const GenerationRecord& other) const {
    return sample_id == other.sample_id && control.tag() == other.control.tag() &&
           seed == other.seed && thinking_text == other.thinking_text &&
           answer_text == other.answer_text &&
           thinking_token_count == other.thinking_token_count &&
           answer_token_count == other.answer_token_count &&
           backend_fingerprint == other.backend_fingerprint;
}

std::string record_to_json(const GenerationRecord& rec) {
    json j;
    j["sample_id"] = rec.sample_id;
    j["control"] = rec.control.tag();
    j["seed"] = hex64(rec.seed);
    j["thinking_text"] = rec.thinking_text;
    j["answer_text"] = rec.answer_text;
    j["thinking_token_count"] = rec.thinking_token_count;
    j["answer_token_count"] = rec.answer_token_count;
    j["backend_fingerprint"] = rec.backend_fingerprint;
    return j.dump();
}

GenerationRecord record_from_json(const std::string& line) {
    json j = json::parse(line);
    GenerationRecord rec;
    rec.sample_id = j.at("sample_id").get<std::string>();
    rec.control = LengthControl::parse(j.at("control").get<std::string>());
    rec.seed = std::stoull(j.at("seed").get<std::string>(), nullptr, 16);
    rec.thinking_text = j.at("thinking_text").get<std::string>();
    rec.answer_text = j.at("answer_text").get<std::string>();
    rec.thinking_token_count = j.at("thinking_token_count").get<size_t>();
    rec.answer_token_count = j.at("answer_token_count").get<size_t>();
    rec.backend_fingerprint = j.at("backend_fingerprint").get<std::string>();
    return rec;
}

std::vector<GenerationRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open record file: " + path);
    std::vector<GenerationRecord> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed record: " + e.what());
        }
    }
    return out;
}

void write_records(const std::string& path, const std::vector<GenerationRecord>& recs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write record file: " + path);
    for (const auto& r : recs) out << record_to_json(r) << "\n";
}

}  // namespace rheval
