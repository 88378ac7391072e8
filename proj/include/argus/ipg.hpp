#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "argus/errors.hpp"
#include "argus/utf8.hpp"

namespace argus {

using json = nlohmann::json;

// Where a context entry came from. Base trust is fixed per source type;
// everything downstream treats it as a prior, never as a decision threshold.
enum class SourceType { system, user, tool_doc, tool_return, rag, memory, skill, agent_msg };

inline const char* to_string(SourceType s) {
    switch (s) {
        case SourceType::system: return "system";
        case SourceType::user: return "user";
        case SourceType::tool_doc: return "tool_doc";
        case SourceType::tool_return: return "tool_return";
        case SourceType::rag: return "rag";
        case SourceType::memory: return "memory";
        case SourceType::skill: return "skill";
        case SourceType::agent_msg: return "agent_msg";
    }
    return "unknown";
}

inline std::optional<SourceType> source_from_string(const std::string& s) {
    if (s == "system") return SourceType::system;
    if (s == "user") return SourceType::user;
    if (s == "tool_doc") return SourceType::tool_doc;
    if (s == "tool_return") return SourceType::tool_return;
    if (s == "rag") return SourceType::rag;
    if (s == "memory") return SourceType::memory;
    if (s == "skill") return SourceType::skill;
    if (s == "agent_msg") return SourceType::agent_msg;
    return std::nullopt;
}

inline double base_trust(SourceType s) {
    switch (s) {
        case SourceType::system: return 1.0;
        case SourceType::user: return 1.0;
        case SourceType::skill: return 0.6;
        case SourceType::tool_doc: return 0.5;
        case SourceType::tool_return: return 0.5;
        case SourceType::rag: return 0.4;
        case SourceType::memory: return 0.4;
        case SourceType::agent_msg: return 0.3;
    }
    return 0.0;
}

enum class SpanLabel { benign, anomalous };

inline const char* to_string(SpanLabel l) {
    return l == SpanLabel::benign ? "benign" : "anomalous";
}

// Half-open [start, end) in Unicode scalar offsets of the owning node's content.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
    SpanLabel label = SpanLabel::benign;
    double confidence = 1.0;
    std::string reason;

    std::size_t chars() const { return end - start; }
};

struct ContextNode {
    int id = 0;
    SourceType source = SourceType::system;
    std::string content;
    std::size_t content_chars = 0;
    bool segmented = false;
    std::vector<Span> spans;
    std::vector<int> parents;
    std::string origin_tool; // empty unless the node is a tool return or docstring

    std::string span_text(const Span& sp) const {
        return utf8::slice(content, sp.start, sp.end);
    }
};

struct RiskFlags {
    bool s_ano = false;  // some segmented node carries an anomalous span
    bool s_risk = false; // some node has a high-risk source (skill, agent_msg)
};

// A span plus where it lives, used for evidence assembly and hints.
struct SpanRef {
    int node = 0;
    std::size_t index = 0;
    SourceType source = SourceType::system;
    Span span;
    std::string text;
};

// One (text, label) pair as replied by the segmenter, before offsets exist.
struct RawSpan {
    std::string text;
    SpanLabel label = SpanLabel::benign;
    double confidence = 1.0;
    std::string reason;
};

// Influence-provenance graph: append-only DAG over context entries. Node ids
// are creation-ordered; edges always point from an earlier node to a later
// one, so acyclicity holds by construction. Edges are recorded for the audit
// trail only and never feed a decision.
class Graph {
public:
    Graph() = default;

    static Graph init(const std::string& system_prompt, const std::string& user_query) {
        Graph g;
        g.add_root(SourceType::system, system_prompt);
        g.add_root(SourceType::user, user_query);
        return g;
    }

    int add_observation(const std::string& content, SourceType source,
                        const std::vector<int>& parents,
                        const std::string& origin_tool = "") {
        if (source == SourceType::system)
            throw Error(ErrorKind::invalid_input,
                        "system nodes exist only as the init-time root");
        for (int p : parents)
            if (!has_node(p))
                throw Error(ErrorKind::unknown_node,
                            "unknown parent node " + std::to_string(p));
        ContextNode n;
        n.id = next_id_++;
        n.source = source;
        n.content = content;
        n.content_chars = utf8::length(content);
        n.parents = parents;
        n.origin_tool = origin_tool;
        nodes_.push_back(std::move(n));
        return nodes_.back().id;
    }

    // Spans may be attached exactly once per node and must tile the content:
    // sorted, non-overlapping, gap-free, in-range.
    void attach_spans(int node_id, std::vector<Span> spans) {
        ContextNode& n = node_mut(node_id);
        if (n.segmented)
            throw Error(ErrorKind::double_segmentation,
                        "node " + std::to_string(node_id) + " is already segmented");
        validate_layout(n, spans);
        n.spans = std::move(spans);
        n.segmented = true;
    }

    // Dynamic trust: base trust scaled by the benign character fraction,
    // floored at eta so poisoned nodes keep a nonzero influence record.
    // Unsegmented nodes report their base trust unchanged.
    static constexpr double eta = 0.1;

    double dynamic_trust(int node_id) const {
        const ContextNode& n = node(node_id);
        double tau0 = base_trust(n.source);
        if (!n.segmented) return tau0;
        std::size_t total = 0, benign = 0;
        for (const Span& sp : n.spans) {
            total += sp.chars();
            if (sp.label == SpanLabel::benign) benign += sp.chars();
        }
        if (total == 0) return tau0;
        double frac = static_cast<double>(benign) / static_cast<double>(total);
        return tau0 * std::max(eta, frac);
    }

    RiskFlags risk_flags() const {
        RiskFlags f;
        for (const ContextNode& n : nodes_) {
            if (n.source == SourceType::skill || n.source == SourceType::agent_msg)
                f.s_risk = true;
            if (n.segmented)
                for (const Span& sp : n.spans)
                    if (sp.label == SpanLabel::anomalous) { f.s_ano = true; break; }
        }
        return f;
    }

    // All spans with the given label, node-creation order then span order.
    std::vector<SpanRef> spans_with_label(SpanLabel label) const {
        std::vector<SpanRef> out;
        for (const ContextNode& n : nodes_) {
            if (!n.segmented) continue;
            for (std::size_t i = 0; i < n.spans.size(); ++i) {
                if (n.spans[i].label != label) continue;
                out.push_back({n.id, i, n.source, n.spans[i], n.span_text(n.spans[i])});
            }
        }
        return out;
    }

    std::vector<SpanRef> benign_spans() const { return spans_with_label(SpanLabel::benign); }
    std::vector<SpanRef> anomalous_spans() const { return spans_with_label(SpanLabel::anomalous); }

    std::vector<int> unsegmented_nodes() const {
        std::vector<int> out;
        for (const ContextNode& n : nodes_)
            if (!n.segmented) out.push_back(n.id);
        return out;
    }

    bool has_node(int id) const { return id >= 0 && id < next_id_; }

    const ContextNode& node(int id) const {
        if (!has_node(id))
            throw Error(ErrorKind::unknown_node, "unknown node " + std::to_string(id));
        return nodes_[static_cast<std::size_t>(id)];
    }

    const std::vector<ContextNode>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }

    json to_json() const {
        json nodes = json::array();
        for (const ContextNode& n : nodes_) {
            json spans = json::array();
            if (n.segmented)
                for (const Span& sp : n.spans)
                    spans.push_back({{"start", sp.start},
                                     {"end", sp.end},
                                     {"label", to_string(sp.label)},
                                     {"confidence", sp.confidence},
                                     {"reason", sp.reason}});
            nodes.push_back({{"id", n.id},
                             {"source", to_string(n.source)},
                             {"base_trust", base_trust(n.source)},
                             {"dynamic_trust", dynamic_trust(n.id)},
                             {"content", n.content},
                             {"segmented", n.segmented},
                             {"spans", spans}});
        }
        json edges = json::array();
        for (const ContextNode& n : nodes_)
            for (int p : n.parents)
                edges.push_back(json::array({p, n.id}));
        return {{"nodes", nodes}, {"edges", edges}};
    }

private:
    void add_root(SourceType source, const std::string& content) {
        ContextNode n;
        n.id = next_id_++;
        n.source = source;
        n.content = content;
        n.content_chars = utf8::length(content);
        n.segmented = true;
        if (n.content_chars > 0)
            n.spans.push_back({0, n.content_chars, SpanLabel::benign, 1.0, "trusted root"});
        nodes_.push_back(std::move(n));
    }

    ContextNode& node_mut(int id) {
        if (!has_node(id))
            throw Error(ErrorKind::unknown_node, "unknown node " + std::to_string(id));
        return nodes_[static_cast<std::size_t>(id)];
    }

    static void validate_layout(const ContextNode& n, const std::vector<Span>& spans) {
        std::size_t cursor = 0;
        for (const Span& sp : spans) {
            if (sp.start >= sp.end)
                throw Error(ErrorKind::invalid_input, "empty or inverted span");
            if (sp.start != cursor)
                throw Error(ErrorKind::invalid_input,
                            sp.start > cursor ? "gap in span coverage"
                                              : "overlapping spans");
            cursor = sp.end;
        }
        if (cursor != n.content_chars)
            throw Error(ErrorKind::invalid_input, "spans do not cover the full content");
    }

    std::vector<ContextNode> nodes_;
    int next_id_ = 0;
};

// Turns segmenter (text, label) replies into a tiling span layout:
// each text is located left-to-right in the content, overlaps are truncated
// in favor of the earlier span, unlocatable texts are dropped, and uncovered
// gaps become benign spans. The result always satisfies attach_spans.
inline std::vector<Span> normalize_spans(const std::string& content,
                                         const std::vector<RawSpan>& raw) {
    struct Located { std::size_t b0, b1; RawSpan src; };
    std::vector<Located> located;
    std::size_t search_from = 0;
    for (const RawSpan& r : raw) {
        if (r.text.empty()) continue;
        std::size_t pos = content.find(r.text, search_from);
        if (pos == std::string::npos) pos = content.find(r.text, 0);
        if (pos == std::string::npos) continue;
        located.push_back({pos, pos + r.text.size(), r});
        search_from = pos + 1;
    }
    std::stable_sort(located.begin(), located.end(),
                     [](const Located& a, const Located& b) { return a.b0 < b.b0; });

    std::vector<Span> out;
    std::size_t total = utf8::length(content);
    std::size_t cursor = 0; // scalar offset
    auto push_gap = [&](std::size_t upto) {
        if (upto > cursor)
            out.push_back({cursor, upto, SpanLabel::benign, 1.0, "gap fill"});
        cursor = std::max(cursor, upto);
    };
    for (const Located& l : located) {
        std::size_t s = utf8::byte_to_scalar(content, l.b0);
        std::size_t e = utf8::byte_to_scalar(content, l.b1);
        if (e <= cursor) continue; // fully shadowed by an earlier span
        if (s < cursor) s = cursor; // truncate overlap, earlier span wins
        push_gap(s);
        out.push_back({s, e, l.src.label, l.src.confidence, l.src.reason});
        cursor = e;
    }
    push_gap(total);
    return out;
}

} // namespace argus
