#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "argus/digest.hpp"
#include "argus/errors.hpp"
#include "argus/prompts.hpp"
#include "argus/utf8.hpp"

namespace argus {

using json = nlohmann::json;

// One chat-style completion backend. Implementations must be safe for
// concurrent complete() calls; per-session state (usage logs) lives in
// OracleClient, not here.
struct ProviderReply {
    std::string text;
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual ProviderReply complete(const std::string& prompt, TemplateName tpl) const = 0;
    virtual std::string describe() const = 0;
};

// Deterministic test double: first rule whose template matches and whose
// match substring occurs in the rendered prompt wins. No match is a provider
// failure so the caller's fail-closed path engages instead of a silent pass.
class ScriptedProvider : public Provider {
public:
    struct Rule {
        std::string tpl;
        std::string match;
        std::string reply;
    };

    explicit ScriptedProvider(std::vector<Rule> rules) : rules_(std::move(rules)) {}

    static ScriptedProvider from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw Error(ErrorKind::io_error, "cannot read oracle rules file: " + path);
        json doc;
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw Error(ErrorKind::invalid_input,
                        "oracle rules file is not valid JSON: " + std::string(e.what()));
        }
        return ScriptedProvider(parse_rules(doc));
    }

    static std::vector<Rule> parse_rules(const json& doc) {
        if (!doc.is_array())
            throw Error(ErrorKind::invalid_input, "oracle rules: top level must be an array");
        std::vector<Rule> rules;
        for (std::size_t i = 0; i < doc.size(); ++i) {
            const json& r = doc[i];
            if (!r.is_object() || !r.contains("template") || !r.contains("match") ||
                !r.contains("reply"))
                throw Error(ErrorKind::invalid_input,
                            "oracle rules: entry " + std::to_string(i) +
                                " needs template, match, reply");
            Rule rule;
            rule.tpl = r["template"].get<std::string>();
            rule.match = r["match"].get<std::string>();
            rule.reply = r["reply"].is_string() ? r["reply"].get<std::string>()
                                                : r["reply"].dump();
            rules.push_back(std::move(rule));
        }
        return rules;
    }

    ProviderReply complete(const std::string& prompt, TemplateName tpl) const override {
        const char* name = to_string(tpl);
        for (const Rule& r : rules_) {
            if (r.tpl != name) continue;
            if (prompt.find(r.match) != std::string::npos) return {r.reply, {}, {}};
        }
        throw Error(ErrorKind::io_error,
                    std::string("no scripted rule matched template ") + name);
    }

    std::string describe() const override { return "scripted"; }

    std::size_t rule_count() const { return rules_.size(); }

private:
    std::vector<Rule> rules_;
};

// Live backend speaking the common chat-completion convention. Configured
// from ARGUS_ORACLE_URL / ARGUS_ORACLE_MODEL / ARGUS_ORACLE_KEY unless the
// fields are set explicitly. Declared here, defined in http_provider.hpp so
// the socket dependency stays out of pure-logic translation units.
struct HttpConfig {
    std::string url;
    std::string model;
    std::string key;

    static HttpConfig from_env() {
        HttpConfig c;
        if (const char* u = std::getenv("ARGUS_ORACLE_URL")) c.url = u;
        if (const char* m = std::getenv("ARGUS_ORACLE_MODEL")) c.model = m;
        if (const char* k = std::getenv("ARGUS_ORACLE_KEY")) c.key = k;
        return c;
    }
};

// Finds the first JSON value in a reply that may carry one fenced code block
// or leading/trailing prose. Throws schema_invalid when nothing parses.
inline json extract_json(const std::string& text) {
    auto try_parse = [](const std::string& s) -> std::optional<json> {
        json v = json::parse(s, nullptr, false);
        if (v.is_discarded()) return std::nullopt;
        return v;
    };
    if (auto v = try_parse(text)) return *v;

    std::string body = text;
    std::size_t fence = body.find("```");
    if (fence != std::string::npos) {
        std::size_t start = body.find('\n', fence);
        std::size_t close = start == std::string::npos
                                ? std::string::npos
                                : body.find("```", start);
        if (start != std::string::npos && close != std::string::npos)
            body = body.substr(start + 1, close - start - 1);
    }
    if (auto v = try_parse(body)) return *v;

    // Balanced scan from the first opening bracket, string-and-escape aware.
    std::size_t begin = body.find_first_of("{[");
    if (begin == std::string::npos)
        throw Error(ErrorKind::schema_invalid, "reply contains no JSON value");
    char open = body[begin];
    char shut = open == '{' ? '}' : ']';
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = begin; i < body.size(); ++i) {
        char c = body[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') { in_string = true; continue; }
        if (c == open) ++depth;
        else if (c == shut && --depth == 0) {
            if (auto v = try_parse(body.substr(begin, i - begin + 1))) return *v;
            break;
        }
    }
    throw Error(ErrorKind::schema_invalid, "reply contains no parseable JSON value");
}

namespace detail {

inline bool is_confidence(const json& v) {
    return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0;
}

inline void validate_segmenter(const json& v) {
    if (!v.is_array())
        throw Error(ErrorKind::schema_invalid, "segmenter reply must be a JSON array");
    for (const json& e : v) {
        if (!e.is_object() || !e.contains("text") || !e.contains("label"))
            throw Error(ErrorKind::schema_invalid, "segmenter span needs text and label");
        if (!e["text"].is_string() || e["text"].get<std::string>().empty())
            throw Error(ErrorKind::schema_invalid, "segmenter span text must be non-empty");
        std::string label = e["label"].is_string() ? e["label"].get<std::string>() : "";
        if (label != "benign" && label != "anomalous")
            throw Error(ErrorKind::schema_invalid, "segmenter label must be benign|anomalous");
        if (e.contains("confidence") && !is_confidence(e["confidence"]))
            throw Error(ErrorKind::schema_invalid, "segmenter confidence out of range");
    }
}

inline void validate_grounder(const json& v) {
    if (!v.is_array())
        throw Error(ErrorKind::schema_invalid, "grounder reply must be a JSON array");
    for (const json& e : v) {
        if (!e.is_object() || !e.contains("param") || !e.contains("grounding"))
            throw Error(ErrorKind::schema_invalid, "grounding record needs param and grounding");
        if (!e["param"].is_string())
            throw Error(ErrorKind::schema_invalid, "grounding param must be a string");
        std::string g = e["grounding"].is_string() ? e["grounding"].get<std::string>() : "";
        if (g != "copy" && g != "normalize" && g != "derive" && g != "resolve" &&
            g != "ungrounded")
            throw Error(ErrorKind::schema_invalid, "unknown grounding type: " + g);
        if (e.contains("source_node") && !e["source_node"].is_null() &&
            !e["source_node"].is_number_integer())
            throw Error(ErrorKind::schema_invalid, "source_node must be an integer or null");
        if (e.contains("span_index") && !e["span_index"].is_null() &&
            !e["span_index"].is_number_integer())
            throw Error(ErrorKind::schema_invalid, "span_index must be an integer or null");
        if (e.contains("confidence") && !is_confidence(e["confidence"]))
            throw Error(ErrorKind::schema_invalid, "grounding confidence out of range");
    }
}

inline void validate_invariant_gen(const json& v) {
    if (!v.is_object() || !v.contains("invariants") || !v["invariants"].is_array() ||
        v["invariants"].empty())
        throw Error(ErrorKind::schema_invalid,
                    "invariant_gen reply needs a non-empty invariants array");
    for (const json& e : v["invariants"]) {
        if (!e.is_object() || !e.contains("description") || !e["description"].is_string() ||
            e["description"].get<std::string>().empty())
            throw Error(ErrorKind::schema_invalid, "invariant needs a description");
    }
}

inline void validate_invariant_check(const json& v) {
    if (!v.is_object() || !v.contains("results") || !v["results"].is_array())
        throw Error(ErrorKind::schema_invalid, "invariant_check reply needs a results array");
    for (const json& e : v["results"]) {
        if (!e.is_object() || !e.contains("status") || !e["status"].is_string())
            throw Error(ErrorKind::schema_invalid, "invariant result needs a status");
        std::string s = e["status"].get<std::string>();
        if (s != "satisfied" && s != "violated" && s != "uncertain")
            throw Error(ErrorKind::schema_invalid, "unknown invariant status: " + s);
    }
}

inline void validate_entailment(const json& v) {
    if (!v.is_object() || !v.contains("entailed_by_benign") ||
        !v["entailed_by_benign"].is_boolean() || !v.contains("influenced_by_anomalous") ||
        !v["influenced_by_anomalous"].is_boolean())
        throw Error(ErrorKind::schema_invalid,
                    "entailment reply needs entailed_by_benign and influenced_by_anomalous");
    if (v.contains("confidence") && !is_confidence(v["confidence"]))
        throw Error(ErrorKind::schema_invalid, "entailment confidence out of range");
}

inline void validate_agent_step(const json& v) {
    if (!v.is_object())
        throw Error(ErrorKind::schema_invalid, "agent step reply must be a JSON object");
    if (v.contains("done")) {
        if (!v["done"].is_boolean() || !v["done"].get<bool>())
            throw Error(ErrorKind::schema_invalid, "agent done flag must be true");
        return;
    }
    if (!v.contains("function") || !v["function"].is_string() || !v.contains("args") ||
        !v["args"].is_object())
        throw Error(ErrorKind::schema_invalid,
                    "agent step needs function and an args object, or done:true");
}

} // namespace detail

inline void validate_schema(TemplateName tpl, const json& v) {
    switch (tpl) {
        case TemplateName::segmenter: detail::validate_segmenter(v); break;
        case TemplateName::grounder: detail::validate_grounder(v); break;
        case TemplateName::invariant_gen: detail::validate_invariant_gen(v); break;
        case TemplateName::invariant_check: detail::validate_invariant_check(v); break;
        case TemplateName::entailment: detail::validate_entailment(v); break;
        case TemplateName::agent_step: detail::validate_agent_step(v); break;
    }
}

enum class CallerTag { defense, agent };

struct UsageEntry {
    CallerTag tag = CallerTag::defense;
    TemplateName tpl = TemplateName::segmenter;
    std::size_t prompt_chars = 0;
    std::size_t reply_chars = 0;
    std::string prompt_fnv; // 64-bit FNV-1a hex of the rendered prompt
    std::string reply_fnv;  // same for the raw reply; empty when the request failed
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
    bool ok = false;
    std::string error;
};

struct OracleReply {
    json value;
    std::string raw;
    int attempts = 1;
};

// Per-session front door to a provider: renders are done by callers, this
// type owns retries, extraction, schema validation, and token accounting.
class OracleClient {
public:
    explicit OracleClient(const Provider& provider, CallerTag tag = CallerTag::defense)
        : provider_(&provider), tag_(tag) {}

    static constexpr int default_max_retries = 2;

    // max_retries counts additional attempts after the first, so the default
    // budget is three requests per call.
    OracleReply complete_json(const std::string& prompt, TemplateName tpl,
                              int max_retries = default_max_retries) {
        std::string last_error;
        int attempts = 0;
        for (int attempt = 0; attempt <= max_retries; ++attempt) {
            ++attempts;
            UsageEntry entry;
            entry.tag = tag_;
            entry.tpl = tpl;
            entry.prompt_chars = utf8::length(prompt);
            entry.prompt_fnv = fnv1a64_hex(prompt);
            try {
                ProviderReply r = provider_->complete(prompt, tpl);
                entry.reply_chars = utf8::length(r.text);
                entry.reply_fnv = fnv1a64_hex(r.text);
                entry.prompt_tokens = r.prompt_tokens;
                entry.completion_tokens = r.completion_tokens;
                json value = extract_json(r.text);
                validate_schema(tpl, value);
                entry.ok = true;
                log_.push_back(entry);
                return {std::move(value), r.text, attempts};
            } catch (const Error& e) {
                entry.error = e.what();
                log_.push_back(entry);
                last_error = e.what();
            }
        }
        throw Error(ErrorKind::oracle_exhausted,
                    std::string("oracle exhausted after ") + std::to_string(attempts) +
                        " attempts on " + to_string(tpl) + ": " + last_error);
    }

    const std::vector<UsageEntry>& log() const { return log_; }

    // Provider-reported token counts when present, otherwise one estimated
    // count of ceil(chars / 4) over each request plus its reply.
    static std::int64_t count_tokens(const std::vector<UsageEntry>& log) {
        std::int64_t total = 0;
        for (const UsageEntry& e : log) {
            if (e.prompt_tokens && e.completion_tokens)
                total += *e.prompt_tokens + *e.completion_tokens;
            else
                total += static_cast<std::int64_t>(
                    std::ceil(static_cast<double>(e.prompt_chars + e.reply_chars) / 4.0));
        }
        return total;
    }

    std::int64_t tokens_used() const { return count_tokens(log_); }

private:
    const Provider* provider_;
    CallerTag tag_;
    std::vector<UsageEntry> log_;
};

} // namespace argus
