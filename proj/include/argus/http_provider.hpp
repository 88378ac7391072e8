#pragma once

#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "argus/errors.hpp"
#include "argus/oracle.hpp"

namespace argus {

// Chat-completion backend over HTTP. Kept in its own header so translation
// units that never talk to the network do not pay for the socket stack.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpConfig config) : config_(std::move(config)) {
        if (config_.url.empty())
            throw Error(ErrorKind::invalid_input,
                        "http oracle needs a URL (ARGUS_ORACLE_URL)");
        if (config_.model.empty())
            throw Error(ErrorKind::invalid_input,
                        "http oracle needs a model name (ARGUS_ORACLE_MODEL)");
        split_url(config_.url, origin_, path_);
    }

    ProviderReply complete(const std::string& prompt, TemplateName) const override {
        json body = {
            {"model", config_.model},
            {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
            {"temperature", 0},
        };
        httplib::Headers headers;
        if (!config_.key.empty())
            headers.emplace("Authorization", "Bearer " + config_.key);

        httplib::Client client(origin_);
        client.set_read_timeout(120, 0);
        auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res)
            throw Error(ErrorKind::io_error,
                        "oracle request failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300)
            throw Error(ErrorKind::io_error,
                        "oracle returned HTTP " + std::to_string(res->status));

        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
            throw Error(ErrorKind::io_error, "oracle reply is not a chat completion");
        ProviderReply out;
        out.text = reply["choices"][0].value("message", json::object())
                       .value("content", std::string{});
        if (reply.contains("usage") && reply["usage"].is_object()) {
            const json& u = reply["usage"];
            if (u.contains("prompt_tokens") && u["prompt_tokens"].is_number_integer())
                out.prompt_tokens = u["prompt_tokens"].get<int>();
            if (u.contains("completion_tokens") && u["completion_tokens"].is_number_integer())
                out.completion_tokens = u["completion_tokens"].get<int>();
        }
        return out;
    }

    std::string describe() const override { return "http:" + config_.url; }

private:
    // httplib::Client accepts a scheme-qualified origin; the request path is
    // everything after host[:port]. TLS support follows the build (see the
    // CPPHTTPLIB_OPENSSL_SUPPORT definition in CMake).
    static void split_url(const std::string& url, std::string& origin, std::string& path) {
        std::size_t scheme = url.find("://");
        if (scheme == std::string::npos)
            throw Error(ErrorKind::invalid_input, "oracle URL needs a scheme: " + url);
        std::size_t slash = url.find('/', scheme + 3);
        if (slash == std::string::npos) {
            origin = url;
            path = "/";
        } else {
            origin = url.substr(0, slash);
            path = url.substr(slash);
        }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (origin.rfind("https://", 0) == 0)
            throw Error(ErrorKind::invalid_input,
                        "this build lacks TLS; use an http:// oracle URL");
#endif
    }

    HttpConfig config_;
    std::string origin_;
    std::string path_;
};

} // namespace argus
