#include "cadkit/service.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <fstream>

namespace cadkit::service {

namespace {

constexpr std::size_t kMaxPayloadBytes = 4 * kMaxAttachmentBytes;
constexpr auto kPollInterval = std::chrono::milliseconds(500);

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) { send_json(res, http_status(e.code()), error_body(e)); }

std::string decode_base64(const std::string& name, const std::string& text) {
    std::string clean;
    clean.reserve(text.size());
    for (const char c : text) {
        if (c != '\n' && c != '\r' && c != ' ' && c != '\t') {
            clean.push_back(c);
        }
    }
    if (clean.size() % 4 != 0) {
        throw Error(ErrorCode::InvalidAttachment, name + ": base64 length is not a multiple of 4");
    }
    std::string out(clean.size() / 4 * 3, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
    if (n < 0) {
        throw Error(ErrorCode::InvalidAttachment, name + ": invalid base64");
    }
    std::size_t pad = 0;
    for (auto it = clean.rbegin(); it != clean.rend() && *it == '=' && pad < 2; ++it) {
        ++pad;
    }
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::vector<UploadedFile> uploaded_files(const httplib::Request& req) {
    std::vector<UploadedFile> files;
    if (req.is_multipart_form_data()) {
        for (const auto& [field, file] : req.files) {
            files.push_back(UploadedFile{file.filename.empty() ? field : file.filename, file.content});
        }
        return files;
    }
    if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) {
        return files;
    }
    Json body;
    try {
        body = Json::parse(req.body);
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::SyntaxError, std::string("request body: ") + e.what());
    }
    for (const auto& a : body.value("attachments", Json::array())) {
        if (!a.is_object() || !a.contains("name") || !a.contains("content")) {
            throw Error(ErrorCode::InvalidAttachment, "attachments need a name and content");
        }
        const std::string name = a.at("name").get<std::string>();
        const std::string content = a.at("content").get<std::string>();
        const std::string encoding = a.value("encoding", "utf8");
        if (encoding == "base64") {
            files.push_back(UploadedFile{name, decode_base64(name, content)});
        } else if (encoding == "utf8") {
            files.push_back(UploadedFile{name, content});
        } else {
            throw Error(ErrorCode::InvalidAttachment, name + ": unknown encoding '" + encoding + "'");
        }
    }
    return files;
}

std::uint64_t last_event_id(const httplib::Request& req) {
    std::string raw = req.get_header_value("Last-Event-ID");
    if (raw.empty() && req.has_param("last_event_id")) {
        raw = req.get_param_value("last_event_id");
    }
    if (raw.empty()) {
        return 0;
    }
    try {
        return std::stoull(raw);
    } catch (const std::exception&) {
        throw Error(ErrorCode::SyntaxError, "Last-Event-ID must be a non-negative integer");
    }
}

std::string sse_frame(const Event& ev) {
    return "id: " + std::to_string(ev.id) + "\nevent: " + ev.type + "\ndata: " + ev.data.dump() + "\n\n";
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const Json::exception& e) {
            send_error(res, Error(ErrorCode::SyntaxError, e.what()));
        } catch (const std::exception& e) {
            send_json(res, 500, Json{{"code", "InternalError"}, {"message", e.what()}});
        }
    };
}

} // namespace

HttpServer::HttpServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
    auto& srv = *server_;
    srv.set_payload_max_length(kMaxPayloadBytes);
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) {
            return;
        }
        if (res.status == 413) {
            send_json(res, 413, Json{{"code", "AttachmentTooLarge"}, {"message", "request body is too large"}});
        } else if (res.status == 404) {
            send_json(res, 404, Json{{"code", "NotFound"}, {"message", "no such route"}});
        }
    });

    srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, Json{{"status", "ok"}});
    });

    srv.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
                Json out = Json::array();
                for (const auto& id : service_.session_ids()) {
                    out.push_back(Json{{"session_id", id}, {"status", agent::status_name(service_.status(id))}});
                }
                send_json(res, 200, Json{{"sessions", std::move(out)}});
            }));

    srv.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = service_.create_session(uploaded_files(req));
                 send_json(res, 201, Json{{"session_id", id}, {"status", agent::status_name(service_.status(id))}});
             }));

    srv.Post(R"(/sessions/([0-9a-f]+)/messages)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 Json body;
                 try {
                     body = Json::parse(req.body);
                 } catch (const Json::exception& e) {
                     throw Error(ErrorCode::SyntaxError, std::string("request body: ") + e.what());
                 }
                 const std::string text = body.value("text", "");
                 const std::string planner = body.value("planner", "llm");
                 service_.post_message(id, text, planner);
                 send_json(res, 202, Json{{"session_id", id}, {"status", "Running"}});
             }));

    srv.Get(R"(/sessions/([0-9a-f]+)/state)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, service_.state(req.matches[1]));
            }));

    srv.Get(R"(/sessions/([0-9a-f]+)/render\.svg)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                res.set_content(service_.render_svg(req.matches[1]), "image/svg+xml");
            }));

    srv.Get(R"(/sessions/([0-9a-f]+)/artifacts/([^/]+))",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                const auto path = service_.artifact_path(req.matches[1], req.matches[2]);
                std::ifstream in(path, std::ios::binary);
                const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                res.set_content(bytes, "image/png");
            }));

    srv.Get(R"(/sessions/([0-9a-f]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                std::uint64_t last = last_event_id(req);
                service_.status(id);
                res.set_header("Cache-Control", "no-cache");
                res.set_chunked_content_provider(
                    "text/event-stream", [this, id, last](std::size_t, httplib::DataSink& sink) mutable {
                        if (!sink.is_writable()) {
                            return false;
                        }
                        const EventBatch batch = service_.events_after(id, last, kPollInterval);
                        for (const auto& ev : batch.events) {
                            const std::string frame = sse_frame(ev);
                            if (!sink.write(frame.data(), frame.size())) {
                                return false;
                            }
                            last = ev.id;
                        }
                        if (batch.finished) {
                            sink.done();
                        } else if (batch.events.empty()) {
                            static constexpr char kKeepAlive[] = ": keep-alive\n\n";
                            return sink.write(kKeepAlive, sizeof kKeepAlive - 1);
                        }
                        return true;
                    });
            }));

    srv.Get(R"(/sessions/([^/]+)(/.*)?)", [](const httplib::Request& req, httplib::Response& res) {
        send_error(res, Error(ErrorCode::UnknownSession, "no session '" + std::string(req.matches[1]) + "'"));
    });
    srv.Post(R"(/sessions/([^/]+)(/.*)?)", [](const httplib::Request& req, httplib::Response& res) {
        send_error(res, Error(ErrorCode::UnknownSession, "no session '" + std::string(req.matches[1]) + "'"));
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = server_->bind_to_any_port(host);
        if (bound < 0) {
            throw Error(ErrorCode::Io, "cannot bind " + host);
        }
        return bound;
    }
    if (!server_->bind_to_port(host, port)) {
        throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

void HttpServer::stop() {
    if (server_ && server_->is_running()) {
        server_->stop();
    }
}

} // namespace cadkit::service
