#pragma once

#include <stdexcept>
#include <string>

namespace argus {

// Error taxonomy shared by every module. Callers that want to branch on the
// failure class catch Error and switch on kind(); everything else can treat
// it as a std::runtime_error.
enum class ErrorKind {
    invalid_input,      // malformed argument, bad span layout, bad config value
    unknown_node,       // reference to a node id that is not in the graph
    double_segmentation,// attach_spans called twice for the same node
    render_error,       // template placeholder without a binding
    schema_invalid,     // oracle reply failed JSON schema validation
    oracle_exhausted,   // provider failed for every attempt of a request
    registry_error,     // tool name not present in the tool registry
    scripted_gap,       // scripted agent or behavior table has no matching entry
    insufficient_data,  // metric computation over an empty transcript set
    io_error,           // file read/write failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::invalid_input: return "invalid_input";
        case ErrorKind::unknown_node: return "unknown_node";
        case ErrorKind::double_segmentation: return "double_segmentation";
        case ErrorKind::render_error: return "render_error";
        case ErrorKind::schema_invalid: return "schema_invalid";
        case ErrorKind::oracle_exhausted: return "oracle_exhausted";
        case ErrorKind::registry_error: return "registry_error";
        case ErrorKind::scripted_gap: return "scripted_gap";
        case ErrorKind::insufficient_data: return "insufficient_data";
        case ErrorKind::io_error: return "io_error";
    }
    return "unknown";
}

} // namespace argus
