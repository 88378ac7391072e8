#pragma once

#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "argus/errors.hpp"
#include "argus/ipg.hpp"
#include "argus/oracle.hpp"
#include "argus/security_tools.hpp"

namespace argus {

// Static view of one registered tool. read_only is a registry property, not
// an oracle judgement: read-only calls bypass the audit entirely. params maps
// each argument name to a semantic type used only for hint extraction.
struct ToolInfo {
    std::string name;
    bool read_only = false;
    std::map<std::string, std::string> params;
    std::string docstring;
};

using Registry = std::map<std::string, ToolInfo>;

struct RiskSignals {
    bool a_tainted = false; // some argument grounds in an anomalous span
    bool a_unknown = false; // some argument has no provenance
    bool s_ano = false;     // some node carries an anomalous span
    bool s_risk = false;    // some node has a high-risk source

    json to_json() const {
        return {{"a_tainted", a_tainted},
                {"a_unknown", a_unknown},
                {"s_ano", s_ano},
                {"s_risk", s_risk}};
    }
};

inline RiskSignals derive_signals(const std::vector<GroundingRecord>& records,
                                  const Graph& g) {
    RiskSignals s;
    for (const GroundingRecord& r : records) {
        if (r.span_label == GroundLabel::anomalous) s.a_tainted = true;
        if (r.span_label == GroundLabel::unknown) s.a_unknown = true;
    }
    RiskFlags f = g.risk_flags();
    s.s_ano = f.s_ano;
    s.s_risk = f.s_risk;
    return s;
}

enum class FailureReason { invariant_violation, entailment_failure };

inline const char* to_string(FailureReason f) {
    return f == FailureReason::invariant_violation ? "invariant_violation"
                                                   : "entailment_failure";
}

struct Hint {
    std::string param;
    std::string value;
    int node = 0;
    std::size_t span_index = 0;
};

struct ChecksRun {
    bool segment = false;
    bool ground = false;
    bool invariant = false;
    bool entailment = false;

    json to_json() const {
        json arr = json::array();
        if (segment) arr.push_back("segment");
        if (ground) arr.push_back("ground");
        if (invariant) arr.push_back("invariant");
        if (entailment) arr.push_back("entailment");
        return arr;
    }
};

struct AuditDecision {
    bool release = false;
    std::optional<FailureReason> failure;
    std::string message;
    std::vector<Hint> hints;
    RiskSignals signals;
    ChecksRun checks;
    std::vector<GroundingRecord> records;
    std::optional<InvariantCheck> invariant_check;
    std::optional<EntailmentVerdict> entailment;

    json to_json() const {
        json grounding = json::array();
        for (const GroundingRecord& r : records) grounding.push_back(r.to_json());
        json hint_arr = json::array();
        for (const Hint& h : hints)
            hint_arr.push_back({{"param", h.param},
                                {"value", h.value},
                                {"node", h.node},
                                {"span_index", h.span_index}});
        json out = {{"verdict", release ? "release" : "block"},
                    {"signals", signals.to_json()},
                    {"checks", checks.to_json()},
                    {"grounding", grounding},
                    {"message", message},
                    {"hints", hint_arr}};
        if (failure) out["failure"] = to_string(*failure);
        if (invariant_check) out["invariant_check"] = invariant_check->to_json();
        if (entailment) out["entailment"] = entailment->to_json();
        return out;
    }

    // The exact payload a blocked agent sees. Schema is a published contract:
    // {blocked, reason, message, hints:[{param, value}]}.
    json block_payload() const {
        json hint_arr = json::array();
        for (const Hint& h : hints)
            hint_arr.push_back({{"param", h.param}, {"value", h.value}});
        return {{"blocked", true},
                {"reason", failure ? to_string(*failure) : "unknown"},
                {"message", message},
                {"hints", hint_arr}};
    }
};

// Hint extraction patterns by semantic type. Free-text parameters carry no
// pattern on purpose: quoting whole spans back at the agent is noise, and
// hints must stay short substrings of benign spans.
inline const std::map<std::string, std::string>& hint_patterns() {
    static const std::map<std::string, std::string> patterns = {
        {"account", R"([A-Z]{2}[0-9][A-Za-z0-9-]{2,})"},
        {"email", R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})"},
        {"amount", R"([0-9]+\.[0-9]{2})"},
        {"date", R"([0-9]{4}-[0-9]{2}-[0-9]{2})"},
        {"channel", R"(#[A-Za-z0-9_-]+)"},
        {"url", R"(https?://[A-Za-z0-9./_%-]+)"},
        {"file", R"([A-Za-z0-9._-]+\.(?:txt|md|csv|pdf|docx?))"},
    };
    return patterns;
}

// Candidate values for the arguments that caused a block. Sources, in order:
// benign spans of nodes sharing the cited node's source type, then benign
// spans of all grounder-cited nodes, then nothing. Values are substrings of
// benign spans by construction; anomalous spans are never quoted.
inline std::vector<Hint> extract_hints(const Graph& g, const ToolCall& call,
                                       const std::vector<GroundingRecord>& records,
                                       const Registry& registry) {
    std::vector<Hint> hints;
    auto tool = registry.find(call.function);

    std::set<int> cited;
    for (const GroundingRecord& r : records)
        if (r.source_node) cited.insert(*r.source_node);

    std::vector<SpanRef> benign = g.benign_spans();
    for (const GroundingRecord& rec : records) {
        if (rec.span_label == GroundLabel::benign) continue;

        std::string semantic = "text";
        if (tool != registry.end()) {
            auto p = tool->second.params.find(rec.param);
            if (p != tool->second.params.end()) semantic = p->second;
        }
        auto pat = hint_patterns().find(semantic);
        if (pat == hint_patterns().end()) continue;
        std::regex re(pat->second);

        std::vector<const SpanRef*> candidates;
        if (rec.source_node) {
            SourceType role = g.node(*rec.source_node).source;
            for (const SpanRef& sp : benign)
                if (sp.source == role) candidates.push_back(&sp);
        }
        if (candidates.empty())
            for (const SpanRef& sp : benign)
                if (cited.count(sp.node)) candidates.push_back(&sp);

        std::set<std::string> seen;
        std::size_t added = 0;
        for (const SpanRef* sp : candidates) {
            if (added == 3) break;
            auto begin = std::sregex_iterator(sp->text.begin(), sp->text.end(), re);
            for (auto it = begin; it != std::sregex_iterator() && added < 3; ++it) {
                std::string value = it->str();
                if (!seen.insert(value).second) continue;
                hints.push_back({rec.param, value, sp->node, sp->index});
                ++added;
            }
        }
    }
    return hints;
}

// One agent session under audit: the graph, the frozen task invariants, the
// tool registry, and the defense-side oracle budget live here.
struct Session {
    Graph graph;
    std::string user_query;
    InvariantSet invariants;
    Registry registry;
    OracleClient oracle;
    Notes notes;
    int step = 0;
    int retry_budget = 2;
    std::map<std::string, int> retries_used;
    std::set<std::string> blocked_functions;

    // Invariants are derived from the user request before any observation
    // can be added, so no untrusted content can shape them.
    Session(const std::string& system_prompt, const std::string& query, Registry reg,
            const Provider& provider)
        : graph(Graph::init(system_prompt, query)),
          user_query(query),
          registry(std::move(reg)),
          oracle(provider, CallerTag::defense) {
        invariants = generate_invariants(user_query, oracle, notes);
    }
};

// Post-grounding decision of the audit: which global checks run, in which
// order, and what their outcomes mean. audit() routes through this join
// point; tests drive it directly to enumerate every signal combination.
struct GlobalCheckRunners {
    std::function<InvariantCheck()> invariant;
    std::function<EntailmentVerdict()> entailment;
};

struct GlobalOutcome {
    bool release = true;
    std::optional<FailureReason> failure;
    bool ran_invariant = false;
    bool ran_entailment = false;
    std::optional<InvariantCheck> invariant;
    std::optional<EntailmentVerdict> entailment;
};

inline GlobalOutcome decide_global(const RiskSignals& s, const GlobalCheckRunners& run) {
    GlobalOutcome o;
    if (s.a_tainted) {
        o.invariant = run.invariant();
        o.ran_invariant = true;
        if (o.invariant->any_violation) {
            o.release = false;
            o.failure = FailureReason::invariant_violation;
            return o;
        }
        o.entailment = run.entailment();
        o.ran_entailment = true;
        if (o.entailment->fails()) {
            o.release = false;
            o.failure = FailureReason::entailment_failure;
        }
        return o;
    }
    if (s.s_ano || s.s_risk) {
        o.entailment = run.entailment();
        o.ran_entailment = true;
        if (o.entailment->fails()) {
            o.release = false;
            o.failure = FailureReason::entailment_failure;
            return o;
        }
    }
    if (s.a_unknown || s.s_risk) {
        o.invariant = run.invariant();
        o.ran_invariant = true;
        if (o.invariant->any_violation) {
            o.release = false;
            o.failure = FailureReason::invariant_violation;
            return o;
        }
    }
    return o;
}

// Benign evidence scoped to the nodes the grounder cited; falls back to the
// whole benign partition when nothing was cited.
inline std::vector<SpanRef> scoped_benign_evidence(const Graph& g,
                                                   const std::vector<GroundingRecord>& records) {
    std::set<int> cited;
    for (const GroundingRecord& r : records)
        if (r.source_node) cited.insert(*r.source_node);
    std::vector<SpanRef> all = g.benign_spans();
    if (cited.empty()) return all;
    std::vector<SpanRef> out;
    for (const SpanRef& sp : all)
        if (cited.count(sp.node)) out.push_back(sp);
    return out;
}

inline AuditDecision audit(Session& session, const ToolCall& call) {
    auto it = session.registry.find(call.function);
    if (it == session.registry.end())
        throw Error(ErrorKind::registry_error, "unknown tool: " + call.function);

    AuditDecision d;
    if (it->second.read_only) {
        d.release = true;
        d.message = "read-only call released without checks";
        return d;
    }

    // A repeat proposal after a block consumes retry budget before any
    // oracle work happens; past the budget the call blocks unconditionally.
    if (session.blocked_functions.count(call.function)) {
        int used = ++session.retries_used[call.function];
        if (used > session.retry_budget) {
            session.notes.push_back("retry budget exhausted for " + call.function);
            d.release = false;
            d.failure = FailureReason::invariant_violation;
            d.message = "blocked: retry budget exhausted for " + call.function;
            return d;
        }
    }

    for (int id : session.graph.unsegmented_nodes()) {
        segment(session.graph, id, session.oracle, session.notes);
        d.checks.segment = true;
    }

    d.records = ground(session.graph, call, session.user_query, session.oracle, session.notes);
    d.checks.ground = true;
    d.signals = derive_signals(d.records, session.graph);

    GlobalCheckRunners runners;
    runners.invariant = [&] {
        return check_invariants(session.invariants, call, session.user_query,
                                scoped_benign_evidence(session.graph, d.records),
                                session.oracle, session.notes);
    };
    runners.entailment = [&] {
        return verify_entailment(call, session.user_query, session.graph.benign_spans(),
                                 session.graph.anomalous_spans(), session.oracle,
                                 session.notes);
    };
    GlobalOutcome g = decide_global(d.signals, runners);
    d.checks.invariant = g.ran_invariant;
    d.checks.entailment = g.ran_entailment;
    d.invariant_check = g.invariant;
    d.entailment = g.entailment;
    d.release = g.release;
    d.failure = g.failure;

    if (d.release) {
        d.message = "released";
        return d;
    }

    session.blocked_functions.insert(call.function);
    d.hints = extract_hints(session.graph, call, d.records, session.registry);
    if (*d.failure == FailureReason::invariant_violation) {
        d.message = "blocked: the call violates a task invariant";
        if (d.invariant_check)
            for (const InvariantResult& r : d.invariant_check->results)
                if (r.status == InvariantStatus::violated && !r.invariant.empty()) {
                    d.message += " (" + r.invariant + ")";
                    break;
                }
    } else {
        d.message = "blocked: the action is influenced by anomalous content and is not "
                    "entailed by trusted evidence";
    }
    if (!d.hints.empty())
        d.message += "; '" + d.hints.front().value +
                     "' appears in the original benign content; consider using this value "
                     "for '" + d.hints.front().param + "' instead";
    return d;
}

// Explicit retry entry: requires a prior block for the same function, then
// re-audits from scratch on the current graph.
inline AuditDecision handle_retry(Session& session, const ToolCall& retry) {
    if (!session.blocked_functions.count(retry.function))
        throw Error(ErrorKind::invalid_input,
                    "handle_retry without a prior block for " + retry.function);
    return audit(session, retry);
}

// Stores a released (or read-only) call's return as a new context node whose
// parents are the nodes the grounder cited for that call. The node stays
// unsegmented until the next state-changing audit.
inline int record_return(Session& session, const ToolCall& call,
                         const AuditDecision& decision, const std::string& content,
                         SourceType source) {
    if (!decision.release)
        throw Error(ErrorKind::invalid_input, "record_return on a blocked call");
    std::set<int> cited;
    for (const GroundingRecord& r : decision.records)
        if (r.source_node) cited.insert(*r.source_node);
    std::vector<int> parents(cited.begin(), cited.end());
    int id = session.graph.add_observation(content, source, parents, call.function);
    ++session.step;
    return id;
}

} // namespace argus
