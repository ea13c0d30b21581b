#pragma once

#include "cadkit/agent.hpp"

#include <string>

namespace cadkit::agent {

struct LlmConfig {
    /// e.g. "https://api.example.com/v1"; requests go to <base>/chat/completions.
    std::string api_base;
    std::string api_key;
    std::string model;
    int max_attempts = 3;
    /// Delay before the second attempt; doubles after each failure.
    int initial_backoff_ms = 500;
    int timeout_s = 120;
    /// Send images as image_url parts; otherwise only the text outputs.
    bool multimodal = true;

    /// Reads LLM_API_BASE, LLM_API_KEY and LLM_MODEL. Throws PlannerConfig
    /// when the base or the model is missing.
    static LlmConfig from_env();
};

/// Planner backed by a chat-completion endpoint.
class LlmPlanner : public Planner {
public:
    explicit LlmPlanner(LlmConfig config);

    /// Throws TransportError once every attempt has failed.
    PlannerReply respond(const PlannerRequest& request) override;

    /// Request body for the endpoint.
    Json build_request(const PlannerRequest& request) const;

private:
    LlmConfig config_;
    std::string origin_;
    std::string path_;
};

/// PNG data URL for an image_url content part.
std::string png_data_url(const GrayImage& img);

} // namespace cadkit::agent
