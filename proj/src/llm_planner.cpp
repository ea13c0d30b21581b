#include "cadkit/llm.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <thread>

namespace cadkit::agent {

LlmConfig LlmConfig::from_env() {
    auto env = [](const char* name) {
        const char* v = std::getenv(name);
        return std::string(v ? v : "");
    };
    LlmConfig cfg;
    cfg.api_base = env("LLM_API_BASE");
    cfg.api_key = env("LLM_API_KEY");
    cfg.model = env("LLM_MODEL");
    if (cfg.api_base.empty() || cfg.model.empty()) {
        throw Error(ErrorCode::PlannerConfig, "LLM_API_BASE and LLM_MODEL must be set for the llm planner");
    }
    return cfg;
}

LlmPlanner::LlmPlanner(LlmConfig config) : config_(std::move(config)) {
    std::string base = config_.api_base;
    while (!base.empty() && base.back() == '/') {
        base.pop_back();
    }
    const auto scheme = base.find("://");
    if (scheme == std::string::npos || config_.model.empty()) {
        throw Error(ErrorCode::PlannerConfig, "api base must look like http(s)://host[:port][/path]");
    }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (base.rfind("https", 0) == 0) {
        throw Error(ErrorCode::PlannerConfig, "this build has no TLS support");
    }
#endif
    const auto slash = base.find('/', scheme + 3);
    origin_ = base.substr(0, slash);
    path_ = (slash == std::string::npos ? std::string() : base.substr(slash)) + "/chat/completions";
    if (config_.max_attempts < 1) {
        config_.max_attempts = 1;
    }
}

std::string png_data_url(const GrayImage& img) {
    const std::vector<std::uint8_t> png = encode_png(img);
    std::string out(4 * ((png.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), png.data(), static_cast<int>(png.size()));
    out.resize(static_cast<std::size_t>(n));
    return "data:image/png;base64," + out;
}

namespace {

Json user_message(const std::string& text, const std::vector<std::shared_ptr<const GrayImage>>& images,
                  bool multimodal) {
    if (!multimodal || images.empty()) {
        return Json{{"role", "user"}, {"content", text}};
    }
    Json parts = Json::array();
    parts.push_back(Json{{"type", "text"}, {"text", text}});
    for (const auto& img : images) {
        parts.push_back(Json{{"type", "image_url"}, {"image_url", {{"url", png_data_url(*img)}}}});
    }
    return Json{{"role", "user"}, {"content", std::move(parts)}};
}

std::string reply_content(const Json& body) {
    const Json& content = body.at("choices").at(0).at("message").at("content");
    if (content.is_string()) {
        return content.get<std::string>();
    }
    std::string text;
    for (const auto& part : content) {
        if (part.value("type", "") == "text") {
            text += part.at("text").get<std::string>();
        }
    }
    return text;
}

} // namespace

Json LlmPlanner::build_request(const PlannerRequest& request) const {
    const Prompt prompt = build_prompt(request.state, request.tools);
    Json messages = Json::array();
    messages.push_back(Json{{"role", "system"}, {"content", prompt.system}});
    messages.push_back(user_message(prompt.request, prompt.request_images, config_.multimodal));
    if (!prompt.context.empty()) {
        messages.push_back(user_message(prompt.context, prompt.context_images, config_.multimodal));
    }
    if (request.previous_reply) {
        messages.push_back(Json{{"role", "assistant"}, {"content", *request.previous_reply}});
        messages.push_back(Json{{"role", "user"},
                                {"content", "Your reply could not be parsed: " + request.parse_error.value_or("") +
                                                "\n" + std::string(reply_grammar())}});
    }
    return Json{{"model", config_.model}, {"messages", std::move(messages)}, {"temperature", 0}};
}

PlannerReply LlmPlanner::respond(const PlannerRequest& request) {
    const std::string body = build_request(request).dump();
    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    client.set_write_timeout(config_.timeout_s, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }

    PlannerReply reply;
    std::string last_error;
    int delay = config_.initial_backoff_ms;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            delay *= 2;
        }
        const auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
        } else if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            try {
                reply.text = reply_content(Json::parse(res->body));
                return reply;
            } catch (const Json::exception& e) {
                last_error = std::string("malformed completion: ") + e.what();
            }
        }
        reply.warnings.push_back("attempt " + std::to_string(attempt) + ": " + last_error);
    }
    throw Error(ErrorCode::TransportError, "planner endpoint failed after " + std::to_string(config_.max_attempts) +
                                               " attempts: " + last_error);
}

} // namespace cadkit::agent
