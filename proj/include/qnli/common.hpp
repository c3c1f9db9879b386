#pragma once

#include <stdexcept>
#include <string>

namespace qnli {

// Error taxonomy maps onto CLI exit codes: malformed_input -> 2,
// insufficient_data -> 3, numeric_failure -> 4.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct malformed_input : error {
    using error::error;
};

struct insufficient_data : error {
    using error::error;
};

struct numeric_failure : error {
    using error::error;
};

// A sentence that cannot be typed or reduced. Ingest turns these into
// exclusion-report rows; probe marks the row ERR.
struct parse_failure : error {
    using error::error;
};

enum class Task { relatedness, inference };

enum class ModelKind { kl, xornet, cluster };

inline std::string to_string(Task t) {
    return t == Task::relatedness ? "relatedness" : "inference";
}

inline std::string to_string(ModelKind m) {
    switch (m) {
        case ModelKind::kl: return "kl";
        case ModelKind::xornet: return "xor";
        default: return "cluster";
    }
}

inline Task task_from_string(const std::string& s) {
    if (s == "relatedness") return Task::relatedness;
    if (s == "inference") return Task::inference;
    throw malformed_input("unknown task: " + s);
}

inline ModelKind model_from_string(const std::string& s) {
    if (s == "kl") return ModelKind::kl;
    if (s == "xor") return ModelKind::xornet;
    if (s == "cluster") return ModelKind::cluster;
    throw malformed_input("unknown model: " + s);
}

}  // namespace qnli
