#pragma once

// Persisted generation records: one line of JSONL per decoded sample.

#include <string>
#include <vector>

#include "rheval/length_control.hpp"

namespace rheval {

struct GenerationRecord {
    std::string sample_id;
    LengthControl control;
    uint64_t seed = 0;
    std::string thinking_text;
    std::string answer_text;
    size_t thinking_token_count = 0;
    size_t answer_token_count = 0;
    std::string backend_fingerprint;

    // stable identity of one decoded stream within a run
    std::string key() const;

    bool operator==(const GenerationRecord& other) const;
};

std::string record_to_json(const GenerationRecord& rec);
GenerationRecord record_from_json(const std::string& line);

std::vector<GenerationRecord> read_records(const std::string& path);
void write_records(const std::string& path, const std::vector<GenerationRecord>& recs);

}  // namespace rheval
