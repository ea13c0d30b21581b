#include "cadkit/agent.hpp"

#include <cctype>

namespace cadkit::agent {

ScriptValue ScriptValue::of(Json value) {
    ScriptValue v;
    v.kind = Kind::Literal;
    v.literal = std::move(value);
    return v;
}

ScriptValue ScriptValue::var(std::string name) {
    ScriptValue v;
    v.kind = Kind::Variable;
    v.variable = std::move(name);
    return v;
}

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class ScriptParser {
public:
    explicit ScriptParser(std::string_view src) : src_(src) {}

    Action parse() {
        Action action;
        while (true) {
            skip_space(true);
            if (at_end()) {
                break;
            }
            if (peek() == ';') {
                ++pos_;
                continue;
            }
            action.calls.push_back(statement());
            skip_space(false);
            if (!at_end() && peek() != '\n' && peek() != ';') {
                fail("expected end of statement");
            }
        }
        return action;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
    int depth_ = 0;

    bool at_end() const { return pos_ >= src_.size(); }
    char peek() const { return at_end() ? '\0' : src_[pos_]; }

    [[noreturn]] void fail(const std::string& what) const {
        int line = 1;
        int col = 1;
        for (std::size_t i = 0; i < pos_ && i < src_.size(); ++i) {
            if (src_[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(ErrorCode::SyntaxError,
                    "action script line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + what);
    }

    // Newlines only separate statements at depth 0.
    void skip_space(bool newlines) {
        while (!at_end()) {
            const char c = peek();
            if (c == '#') {
                while (!at_end() && peek() != '\n') {
                    ++pos_;
                }
            } else if (c == '\n') {
                if (!newlines && depth_ == 0) {
                    return;
                }
                ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    void expect(char c) {
        skip_space(false);
        if (peek() != c) {
            fail(std::string("expected '") + c + "'");
        }
        ++pos_;
    }

    std::string identifier() {
        skip_space(false);
        if (!ident_start(peek())) {
            fail("expected an identifier");
        }
        const std::size_t start = pos_;
        while (!at_end() && ident_char(peek())) {
            ++pos_;
        }
        return std::string(src_.substr(start, pos_ - start));
    }

    ToolCall statement() {
        ToolCall call;
        if (peek() == '$') {
            ++pos_;
            call.bind = identifier();
            expect('=');
        }
        call.tool = identifier();
        expect('(');
        ++depth_;
        skip_space(false);
        if (peek() != ')') {
            while (true) {
                std::string key = identifier();
                for (const auto& [k, v] : call.args) {
                    if (k == key) {
                        fail("argument '" + key + "' given twice");
                    }
                }
                expect('=');
                call.args.emplace_back(std::move(key), value());
                skip_space(false);
                if (peek() == ',') {
                    ++pos_;
                    skip_space(false);
                    if (peek() == ')') {
                        break;
                    }
                    continue;
                }
                break;
            }
        }
        expect(')');
        --depth_;
        return call;
    }

    ScriptValue value() {
        skip_space(false);
        const char c = peek();
        if (c == '$') {
            ++pos_;
            return ScriptValue::var(identifier());
        }
        if (c == '[') {
            ++pos_;
            ++depth_;
            ScriptValue list;
            list.kind = ScriptValue::Kind::List;
            skip_space(false);
            if (peek() != ']') {
                while (true) {
                    list.items.push_back(value());
                    skip_space(false);
                    if (peek() != ',') {
                        break;
                    }
                    ++pos_;
                }
            }
            expect(']');
            --depth_;
            return list;
        }
        if (c == '{') {
            ++pos_;
            ++depth_;
            ScriptValue obj;
            obj.kind = ScriptValue::Kind::Object;
            skip_space(false);
            if (peek() != '}') {
                while (true) {
                    skip_space(false);
                    if (peek() != '"') {
                        fail("object keys must be strings");
                    }
                    std::string key = string_literal().get<std::string>();
                    expect(':');
                    obj.fields.emplace_back(std::move(key), value());
                    skip_space(false);
                    if (peek() != ',') {
                        break;
                    }
                    ++pos_;
                }
            }
            expect('}');
            --depth_;
            return obj;
        }
        if (c == '"') {
            return ScriptValue::of(string_literal());
        }
        if (c == '-' || c == '+' || c == '.' || std::isdigit(static_cast<unsigned char>(c))) {
            return ScriptValue::of(number_literal());
        }
        if (ident_start(c)) {
            const std::size_t start = pos_;
            const std::string word = identifier();
            if (word == "true" || word == "True") {
                return ScriptValue::of(true);
            }
            if (word == "false" || word == "False") {
                return ScriptValue::of(false);
            }
            if (word == "null" || word == "None") {
                return ScriptValue::of(nullptr);
            }
            pos_ = start;
            fail("unknown word '" + word + "' (variables start with '$', strings are quoted)");
        }
        fail("expected a value");
    }

    Json string_literal() {
        const std::size_t start = pos_;
        ++pos_;
        while (!at_end() && peek() != '"') {
            if (peek() == '\\') {
                ++pos_;
            }
            if (peek() == '\n') {
                fail("unterminated string");
            }
            ++pos_;
        }
        if (at_end()) {
            pos_ = start;
            fail("unterminated string");
        }
        ++pos_;
        try {
            return Json::parse(src_.substr(start, pos_ - start));
        } catch (const Json::exception&) {
            pos_ = start;
            fail("bad string escape");
        }
    }

    Json number_literal() {
        const std::size_t start = pos_;
        if (peek() == '+') {
            ++pos_;
        }
        const std::size_t body = pos_;
        while (!at_end()) {
            const char c = peek();
            const bool exp_sign = (c == '-' || c == '+') && pos_ > body && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E');
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' || c == 'E' || exp_sign ||
                (c == '-' && pos_ == body)) {
                ++pos_;
            } else {
                break;
            }
        }
        std::string text(src_.substr(body, pos_ - body));
        if (!text.empty() && text.front() == '.') {
            text.insert(0, "0");
        } else if (text.size() > 1 && text[0] == '-' && text[1] == '.') {
            text.insert(1, "0");
        }
        if (!text.empty() && text.back() == '.') {
            text += '0';
        }
        try {
            Json j = Json::parse(text);
            if (j.is_number()) {
                return j;
            }
        } catch (const Json::exception&) {
        }
        pos_ = start;
        fail("bad number");
    }
};

void write_value(std::string& out, const ScriptValue& v) {
    switch (v.kind) {
    case ScriptValue::Kind::Literal: out += v.literal.dump(); break;
    case ScriptValue::Kind::Variable:
        out += '$';
        out += v.variable;
        break;
    case ScriptValue::Kind::List:
        out += '[';
        for (std::size_t i = 0; i < v.items.size(); ++i) {
            if (i) {
                out += ", ";
            }
            write_value(out, v.items[i]);
        }
        out += ']';
        break;
    case ScriptValue::Kind::Object:
        out += '{';
        for (std::size_t i = 0; i < v.fields.size(); ++i) {
            if (i) {
                out += ", ";
            }
            out += Json(v.fields[i].first).dump();
            out += ": ";
            write_value(out, v.fields[i].second);
        }
        out += '}';
        break;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

std::string_view strip_plan_prefix(std::string_view s) {
    s = trim(s);
    if (s.size() >= 5) {
        std::string head(s.substr(0, 5));
        for (auto& ch : head) {
            ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
        if (head == "plan:") {
            s.remove_prefix(5);
        }
    }
    return trim(s);
}

[[noreturn]] void unparseable(const std::string& what) { throw Error(ErrorCode::PlannerUnparseable, what); }

} // namespace

Action parse_action(std::string_view script) { return ScriptParser(script).parse(); }

std::string to_script(const ToolCall& call) {
    std::string out;
    if (call.bind) {
        out += '$';
        out += *call.bind;
        out += " = ";
    }
    out += call.tool;
    out += '(';
    for (std::size_t i = 0; i < call.args.size(); ++i) {
        if (i) {
            out += ", ";
        }
        out += call.args[i].first;
        out += '=';
        write_value(out, call.args[i].second);
    }
    out += ')';
    return out;
}

std::string to_script(const Action& action) {
    std::string out;
    for (const auto& c : action.calls) {
        out += to_script(c);
        out += '\n';
    }
    return out;
}

void collect_variables(const ScriptValue& value, std::vector<std::string>& out) {
    switch (value.kind) {
    case ScriptValue::Kind::Literal: break;
    case ScriptValue::Kind::Variable: out.push_back(value.variable); break;
    case ScriptValue::Kind::List:
        for (const auto& item : value.items) {
            collect_variables(item, out);
        }
        break;
    case ScriptValue::Kind::Object:
        for (const auto& [k, v] : value.fields) {
            collect_variables(v, out);
        }
        break;
    }
}

std::string_view reply_grammar() {
    return "Reply with one plan line followed by one fenced action block:\n"
           "Plan: <what you will do next>\n"
           "```action\n"
           "$name = tool(arg=value, ...)\n"
           "```\n"
           "Values are JSON literals or $names bound by earlier calls. "
           "Reply with the single word TERMINATE when the request is complete.";
}

PlannerOutput parse_reply(std::string_view reply) {
    const std::string_view text = trim(reply);
    const auto fence = text.find("```");
    PlannerOutput out;
    if (fence == std::string_view::npos) {
        const std::string_view plan = strip_plan_prefix(text);
        if (plan == kTerminate) {
            out.plan.text = std::string(kTerminate);
            return out;
        }
        unparseable("reply has no ```action block");
    }
    const std::string_view plan = strip_plan_prefix(text.substr(0, fence));
    if (plan.empty()) {
        unparseable("reply has no plan before the action block");
    }
    if (plan == kTerminate) {
        unparseable("a TERMINATE plan carries no action");
    }
    std::string_view rest = text.substr(fence + 3);
    const auto eol = rest.find('\n');
    if (eol == std::string_view::npos) {
        unparseable("action block is not closed");
    }
    const std::string_view lang = trim(rest.substr(0, eol));
    if (!lang.empty() && lang != "action") {
        unparseable("fenced block must be tagged 'action', got '" + std::string(lang) + "'");
    }
    rest = rest.substr(eol + 1);
    const auto close = rest.find("```");
    if (close == std::string_view::npos) {
        unparseable("action block is not closed");
    }
    if (!trim(rest.substr(close + 3)).empty()) {
        unparseable("text after the action block");
    }
    try {
        out.action = parse_action(rest.substr(0, close));
    } catch (const Error& e) {
        unparseable(e.what());
    }
    if (out.action->calls.empty()) {
        unparseable("action block is empty");
    }
    out.plan.text = std::string(plan);
    return out;
}

} // namespace cadkit::agent
