#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "argus/ipg.hpp"
#include "argus/oracle.hpp"
#include "argus/prompts.hpp"

namespace argus {

// A proposed tool invocation. Arguments are a JSON object; the canonical
// text rendering (sorted keys, compact) is what prompts and rules see.
struct ToolCall {
    std::string function;
    json args = json::object();

    std::string args_text() const { return args.dump(); }

    static std::string value_text(const json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
    }
};

enum class GroundingType { copy, normalize, derive, resolve, ungrounded };

inline const char* to_string(GroundingType g) {
    switch (g) {
        case GroundingType::copy: return "copy";
        case GroundingType::normalize: return "normalize";
        case GroundingType::derive: return "derive";
        case GroundingType::resolve: return "resolve";
        case GroundingType::ungrounded: return "ungrounded";
    }
    return "unknown";
}

inline std::optional<GroundingType> grounding_from_string(const std::string& s) {
    if (s == "copy") return GroundingType::copy;
    if (s == "normalize") return GroundingType::normalize;
    if (s == "derive") return GroundingType::derive;
    if (s == "resolve") return GroundingType::resolve;
    if (s == "ungrounded") return GroundingType::ungrounded;
    return std::nullopt;
}

enum class GroundLabel { benign, anomalous, unknown };

inline const char* to_string(GroundLabel l) {
    switch (l) {
        case GroundLabel::benign: return "benign";
        case GroundLabel::anomalous: return "anomalous";
        case GroundLabel::unknown: return "unknown";
    }
    return "unknown";
}

// Provenance verdict for one argument. Invariant kept by ground():
// grounding == ungrounded <=> span_label == unknown <=> source_node absent.
struct GroundingRecord {
    std::string param;
    std::string value;
    std::optional<int> source_node;
    std::optional<std::size_t> span_index;
    GroundLabel span_label = GroundLabel::unknown;
    GroundingType grounding = GroundingType::ungrounded;
    double confidence = 0.5;
    std::string explanation;

    json to_json() const {
        return {{"param", param},
                {"value", value},
                {"source_node", source_node ? json(*source_node) : json(nullptr)},
                {"span_index", span_index ? json(*span_index) : json(nullptr)},
                {"span_label", to_string(span_label)},
                {"grounding", to_string(grounding)},
                {"confidence", confidence},
                {"explanation", explanation}};
    }
};

struct Invariant {
    std::string description;
    std::string check;

    json to_json() const { return {{"description", description}, {"check", check}}; }
};

struct InvariantSet {
    std::vector<Invariant> invariants;

    json to_json() const {
        json arr = json::array();
        for (const Invariant& i : invariants) arr.push_back(i.to_json());
        return arr;
    }
};

// Cap and padding applied by generate_invariants. The padding text repeats a
// rule the generation prompt itself states, so a padded set stays faithful
// to what the oracle was asked for.
inline Invariant generic_invariant() {
    return {"no extra unrelated actions beyond the task scope",
            "the proposed action serves the user's stated task and adds no unrelated side effects"};
}

enum class InvariantStatus { satisfied, violated, uncertain };

inline const char* to_string(InvariantStatus s) {
    switch (s) {
        case InvariantStatus::satisfied: return "satisfied";
        case InvariantStatus::violated: return "violated";
        case InvariantStatus::uncertain: return "uncertain";
    }
    return "unknown";
}

struct InvariantResult {
    std::string invariant;
    InvariantStatus status = InvariantStatus::uncertain;
    std::string explanation;
};

struct InvariantCheck {
    std::vector<InvariantResult> results;
    bool any_violation = false; // recomputed from statuses, never trusted from the reply

    json to_json() const {
        json arr = json::array();
        for (const InvariantResult& r : results)
            arr.push_back({{"invariant", r.invariant},
                           {"status", to_string(r.status)},
                           {"explanation", r.explanation}});
        return {{"results", arr}, {"any_violation", any_violation}};
    }
};

struct EntailmentVerdict {
    bool entailed_by_benign = false;
    bool influenced_by_anomalous = true;
    double confidence = 0.5;
    std::string explanation;

    // The only failing combination: the action leaned on anomalous content
    // and the benign evidence alone does not justify it.
    bool fails() const { return influenced_by_anomalous && !entailed_by_benign; }

    json to_json() const {
        return {{"entailed_by_benign", entailed_by_benign},
                {"influenced_by_anomalous", influenced_by_anomalous},
                {"confidence", confidence},
                {"explanation", explanation}};
    }
};

// Every span rendered into a prompt carries its node id and source so the
// oracle can cite provenance. The exact prefix is part of the rule contract.
inline std::string render_evidence(const std::vector<SpanRef>& spans) {
    if (spans.empty()) return "(none)";
    std::string out;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (i) out += '\n';
        out += "[node " + std::to_string(spans[i].node) + "/" +
               to_string(spans[i].source) + "] " + spans[i].text;
    }
    return out;
}

inline std::string render_invariants(const InvariantSet& set) {
    std::string out;
    for (std::size_t i = 0; i < set.invariants.size(); ++i) {
        if (i) out += '\n';
        out += std::to_string(i + 1) + ". " + set.invariants[i].description;
        if (!set.invariants[i].check.empty())
            out += " (check: " + set.invariants[i].check + ")";
    }
    return out.empty() ? "(none)" : out;
}

using Notes = std::vector<std::string>;

// Segments one node, normalizes the reply spans into a tiling layout, and
// attaches them. Oracle exhaustion marks the whole node anomalous: a node we
// could not read is never treated as trusted evidence.
inline void segment(Graph& g, int node_id, OracleClient& oracle, Notes& notes) {
    const ContextNode& n = g.node(node_id);
    if (n.segmented)
        throw Error(ErrorKind::double_segmentation,
                    "node " + std::to_string(node_id) + " is already segmented");
    Bindings b{{"content", n.content},
               {"source_type", to_string(n.source)},
               {"tool_name", n.origin_tool.empty() ? "none" : n.origin_tool}};
    try {
        OracleReply r = oracle.complete_json(render(TemplateName::segmenter, b),
                                             TemplateName::segmenter);
        std::vector<RawSpan> raw;
        for (const json& e : r.value) {
            RawSpan rs;
            rs.text = e["text"].get<std::string>();
            rs.label = e["label"].get<std::string>() == "anomalous" ? SpanLabel::anomalous
                                                                    : SpanLabel::benign;
            rs.confidence = e.value("confidence", 1.0);
            rs.reason = e.value("reason", std::string{});
            if (n.content.find(rs.text) == std::string::npos)
                notes.push_back("segmenter: dropped unlocatable span text on node " +
                                std::to_string(node_id));
            raw.push_back(std::move(rs));
        }
        g.attach_spans(node_id, normalize_spans(n.content, raw));
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::oracle_exhausted) throw;
        std::vector<Span> fail_closed;
        if (n.content_chars > 0)
            fail_closed.push_back(
                {0, n.content_chars, SpanLabel::anomalous, 1.0, "oracle failure"});
        g.attach_spans(node_id, std::move(fail_closed));
        notes.push_back("segmenter: oracle exhausted, node " + std::to_string(node_id) +
                        " marked anomalous");
    }
}

// Grounds every argument of the call against the current span partition.
// Reply records are rebuilt from the actual arguments: missing records become
// ungrounded, citations of nonexistent nodes or spans are coerced to
// ungrounded, span labels come from the graph rather than the reply, and a
// claimed copy that is not an exact substring is demoted to derive.
inline std::vector<GroundingRecord> ground(const Graph& g, const ToolCall& call,
                                           const std::string& user_query,
                                           OracleClient& oracle, Notes& notes) {
    std::vector<GroundingRecord> records;
    auto make_ungrounded = [](const std::string& param, const std::string& value,
                              double confidence, const std::string& expl) {
        GroundingRecord rec;
        rec.param = param;
        rec.value = value;
        rec.span_label = GroundLabel::unknown;
        rec.grounding = GroundingType::ungrounded;
        rec.confidence = confidence;
        rec.explanation = expl;
        return rec;
    };

    json reply = json::array();
    bool exhausted = false;
    try {
        Bindings b{{"user_query", user_query},
                   {"function", call.function},
                   {"args", call.args_text()},
                   {"benign_evidence", render_evidence(g.benign_spans())},
                   {"anomalous_evidence", render_evidence(g.anomalous_spans())}};
        reply = oracle
                    .complete_json(render(TemplateName::grounder, b), TemplateName::grounder)
                    .value;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::oracle_exhausted) throw;
        exhausted = true;
        notes.push_back("grounder: oracle exhausted, all arguments unknown");
    }

    for (auto it = call.args.begin(); it != call.args.end(); ++it) {
        const std::string& param = it.key();
        std::string value = ToolCall::value_text(it.value());
        if (exhausted) {
            records.push_back(make_ungrounded(param, value, 0.0, "oracle failure"));
            continue;
        }
        const json* hit = nullptr;
        for (const json& e : reply)
            if (e["param"].get<std::string>() == param) { hit = &e; break; }
        if (!hit) {
            notes.push_back("grounder: no record for argument '" + param + "'");
            records.push_back(make_ungrounded(param, value, 0.0, "no record in reply"));
            continue;
        }
        const json& e = *hit;
        GroundingRecord rec;
        rec.param = param;
        rec.value = value;
        rec.confidence = e.value("confidence", 0.5);
        rec.explanation = e.value("explanation", std::string{});
        rec.grounding = *grounding_from_string(e["grounding"].get<std::string>());

        std::optional<int> node_id;
        if (e.contains("source_node") && e["source_node"].is_number_integer())
            node_id = e["source_node"].get<int>();
        if (rec.grounding == GroundingType::ungrounded) node_id.reset();

        if (!node_id) {
            records.push_back(make_ungrounded(param, value, rec.confidence, rec.explanation));
            continue;
        }
        if (!g.has_node(*node_id) || !g.node(*node_id).segmented) {
            notes.push_back("grounder: argument '" + param + "' cites unknown node " +
                            std::to_string(*node_id) + ", coerced to ungrounded");
            records.push_back(make_ungrounded(param, value, rec.confidence, rec.explanation));
            continue;
        }
        const ContextNode& n = g.node(*node_id);
        std::optional<std::size_t> span_index;
        if (e.contains("span_index") && e["span_index"].is_number_integer()) {
            auto idx = e["span_index"].get<std::int64_t>();
            if (idx >= 0 && static_cast<std::size_t>(idx) < n.spans.size())
                span_index = static_cast<std::size_t>(idx);
        }
        if (!span_index) {
            for (std::size_t i = 0; i < n.spans.size(); ++i)
                if (n.span_text(n.spans[i]).find(value) != std::string::npos) {
                    span_index = i;
                    break;
                }
        }
        if (!span_index && n.spans.size() == 1) span_index = 0;
        if (!span_index) {
            notes.push_back("grounder: argument '" + param +
                            "' cites no locatable span, coerced to ungrounded");
            records.push_back(make_ungrounded(param, value, rec.confidence, rec.explanation));
            continue;
        }
        rec.source_node = node_id;
        rec.span_index = span_index;
        const Span& sp = n.spans[*span_index];
        rec.span_label = sp.label == SpanLabel::anomalous ? GroundLabel::anomalous
                                                          : GroundLabel::benign;
        if (rec.grounding == GroundingType::copy &&
            n.span_text(sp).find(value) == std::string::npos) {
            rec.grounding = GroundingType::derive;
            notes.push_back("grounder: '" + param + "' claimed copy without exact match, " +
                            "demoted to derive");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// Derives the task invariants from the user request alone, before any
// untrusted observation exists. At most three survive; fewer than two are
// padded with the generic scope invariant.
inline InvariantSet generate_invariants(const std::string& user_query, OracleClient& oracle,
                                        Notes& notes) {
    InvariantSet set;
    try {
        OracleReply r = oracle.complete_json(
            render(TemplateName::invariant_gen, {{"user_query", user_query}}),
            TemplateName::invariant_gen);
        for (const json& e : r.value["invariants"]) {
            if (set.invariants.size() == 3) {
                notes.push_back("invariant_gen: more than three invariants, extras dropped");
                break;
            }
            set.invariants.push_back(
                {e["description"].get<std::string>(), e.value("check", std::string{})});
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::oracle_exhausted) throw;
        notes.push_back("invariant_gen: oracle exhausted, using the generic invariant");
        set.invariants.push_back(generic_invariant());
        return set;
    }
    while (set.invariants.size() < 2) {
        notes.push_back("invariant_gen: padded with the generic invariant");
        set.invariants.push_back(generic_invariant());
    }
    return set;
}

// Checks the call against the invariants. any_violation is recomputed from
// the per-invariant statuses; an uncertain status never raises it. Oracle
// exhaustion reads as a violation: an uncheckable call is not releasable.
inline InvariantCheck check_invariants(const InvariantSet& set, const ToolCall& call,
                                       const std::string& user_query,
                                       const std::vector<SpanRef>& benign_evidence,
                                       OracleClient& oracle, Notes& notes) {
    if (set.invariants.empty())
        throw Error(ErrorKind::invalid_input, "check_invariants needs a non-empty set");
    InvariantCheck out;
    json reply;
    try {
        Bindings b{{"user_query", user_query},
                   {"function", call.function},
                   {"args", call.args_text()},
                   {"invariants", render_invariants(set)},
                   {"benign_evidence", render_evidence(benign_evidence)}};
        reply = oracle
                    .complete_json(render(TemplateName::invariant_check, b),
                                   TemplateName::invariant_check)
                    .value;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::oracle_exhausted) throw;
        notes.push_back("invariant_check: oracle exhausted, treated as violation");
        out.results.push_back({"oracle failure", InvariantStatus::violated,
                               "invariant check could not be completed"});
        out.any_violation = true;
        return out;
    }
    for (const json& e : reply["results"]) {
        InvariantResult r;
        r.invariant = e.value("invariant", std::string{});
        std::string s = e["status"].get<std::string>();
        r.status = s == "satisfied" ? InvariantStatus::satisfied
                 : s == "violated"  ? InvariantStatus::violated
                                    : InvariantStatus::uncertain;
        r.explanation = e.value("explanation", std::string{});
        out.results.push_back(std::move(r));
    }
    out.any_violation = std::any_of(out.results.begin(), out.results.end(),
                                    [](const InvariantResult& r) {
                                        return r.status == InvariantStatus::violated;
                                    });
    if (reply.contains("any_violation") && reply["any_violation"].is_boolean() &&
        reply["any_violation"].get<bool>() != out.any_violation)
        notes.push_back("invariant_check: reply any_violation disagreed with statuses, "
                        "recomputed value kept");
    return out;
}

// Entailment probe over the full benign/anomalous partition. Oracle
// exhaustion returns the failing combination so an unverifiable influence
// never releases.
inline EntailmentVerdict verify_entailment(const ToolCall& call, const std::string& user_query,
                                           const std::vector<SpanRef>& benign_evidence,
                                           const std::vector<SpanRef>& anomalous_evidence,
                                           OracleClient& oracle, Notes& notes) {
    try {
        Bindings b{{"user_query", user_query},
                   {"function", call.function},
                   {"args", call.args_text()},
                   {"benign_evidence", render_evidence(benign_evidence)},
                   {"anomalous_evidence", render_evidence(anomalous_evidence)}};
        json reply = oracle
                         .complete_json(render(TemplateName::entailment, b),
                                        TemplateName::entailment)
                         .value;
        EntailmentVerdict v;
        v.entailed_by_benign = reply["entailed_by_benign"].get<bool>();
        v.influenced_by_anomalous = reply["influenced_by_anomalous"].get<bool>();
        v.confidence = reply.value("confidence", 0.5);
        v.explanation = reply.value("explanation", std::string{});
        return v;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::oracle_exhausted) throw;
        notes.push_back("entailment: oracle exhausted, treated as unverified influence");
        return {false, true, 0.0, "oracle failure"};
    }
}

} // namespace argus
