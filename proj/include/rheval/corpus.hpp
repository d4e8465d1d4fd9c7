#pragma once

// Benchmark data model: line-delimited JSON records, one sample per line.
// Loading validates every structural invariant up front; a loaded Corpus is
// immutable and safe to share across worker threads.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rheval {

enum class Task { reasoning, perception };
enum class Format { multiple_choice, open_ended };

const char* to_string(Task t);
const char* to_string(Format f);
Task task_from_string(const std::string& s);
Format format_from_string(const std::string& s);

struct Option {
    char label = '?';  // single uppercase letter A-Z
    std::string text;

    bool operator==(const Option&) const = default;
};

struct BenchSample {
    std::string id;
    Task task = Task::reasoning;
    Format format = Format::multiple_choice;
    std::optional<std::string> image_ref;  // opaque; absent for text-only samples
    std::string question;
    std::vector<Option> options;  // empty for open_ended
    std::string ground_truth;
    std::string source_tag;

    bool operator==(const BenchSample&) const = default;
};

class CorpusError : public std::runtime_error {
public:
    explicit CorpusError(const std::string& what) : std::runtime_error(what) {}
};

class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<BenchSample> samples);  // validates

    const std::vector<BenchSample>& samples() const { return samples_; }
    size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    size_t count(Task t) const;
    size_t count(Task t, Format f) const;

    const BenchSample* find(const std::string& id) const;
    const BenchSample& at(const std::string& id) const;

    // Stable content fingerprint over ids and fields, independent of load path.
    uint64_t fingerprint() const;

private:
    std::vector<BenchSample> samples_;
};

// Throws CorpusError naming the offending sample id.
void validate_sample(const BenchSample& s);

Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& c, const std::filesystem::path& path);

std::pair<Corpus, Corpus> split_by_task(const Corpus& c);  // (reasoning, perception)

}  // namespace rheval
