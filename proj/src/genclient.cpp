#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "semcon/genclient.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

#include "semcon/hash.hpp"
#include "semcon/retry.hpp"
#include "semcon/text.hpp"

namespace semcon {

using json = nlohmann::json;

namespace {

// Strips leading/trailing blank lines but preserves interior layout.
std::string trim_block(const std::vector<std::string>& lines) {
    std::size_t first = 0, last = lines.size();
    while (first < last && trim(lines[first]).empty()) ++first;
    while (last > first && trim(lines[last - 1]).empty()) --last;
    std::string out;
    for (std::size_t i = first; i < last; ++i) {
        if (i > first) out += '\n';
        out += lines[i];
    }
    return out;
}

bool is_slot_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::islower(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

std::string substitute(const std::string& text, const std::map<std::string, std::string>& slots,
                       const std::string& template_name) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            std::size_t close = text.find('}', i + 1);
            if (close != std::string::npos) {
                std::string name = text.substr(i + 1, close - i - 1);
                if (is_slot_name(name)) {
                    auto it = slots.find(name);
                    if (it == slots.end())
                        throw std::invalid_argument("template \"" + template_name +
                                                    "\" references placeholder {" + name +
                                                    "} which this operation does not provide");
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += text[i++];
    }
    return out;
}

void collect_slots(const std::string& text, std::vector<std::string>& out) {
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            std::size_t close = text.find('}', i + 1);
            if (close != std::string::npos) {
                std::string name = text.substr(i + 1, close - i - 1);
                if (is_slot_name(name)) {
                    out.push_back(name);
                    i = close + 1;
                    continue;
                }
            }
        }
        ++i;
    }
}

}  // namespace

PromptTemplate PromptTemplate::parse(const std::string& text, std::string name) {
    PromptTemplate tpl;
    tpl.name_ = std::move(name);

    std::vector<std::string> lines;
    {
        std::istringstream stream(text);
        std::string line;
        while (std::getline(stream, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
    }

    enum class Section { None, System, ExampleInput, ExampleOutput, User };
    Section current = Section::None;
    std::vector<std::string> block;
    std::optional<std::string> pending_input;
    bool saw_user = false;

    auto flush = [&](Section finished) {
        std::string content = trim_block(block);
        block.clear();
        switch (finished) {
            case Section::None:
                if (!content.empty())
                    throw std::invalid_argument("template \"" + tpl.name_ +
                                                "\": content before the first section header");
                break;
            case Section::System: tpl.system_ = content; break;
            case Section::ExampleInput:
                if (pending_input)
                    throw std::invalid_argument("template \"" + tpl.name_ +
                                                "\": [example.input] without matching output");
                pending_input = content;
                break;
            case Section::ExampleOutput:
                if (!pending_input)
                    throw std::invalid_argument("template \"" + tpl.name_ +
                                                "\": [example.output] without preceding input");
                tpl.exemplars_.push_back({*pending_input, content});
                pending_input.reset();
                break;
            case Section::User: tpl.user_ = content; break;
        }
    };

    for (const std::string& line : lines) {
        std::string header = trim(line);
        Section next = Section::None;
        bool is_header = true;
        if (header == "[system]")
            next = Section::System;
        else if (header == "[example.input]")
            next = Section::ExampleInput;
        else if (header == "[example.output]")
            next = Section::ExampleOutput;
        else if (header == "[user]")
            next = Section::User;
        else
            is_header = false;

        if (is_header) {
            flush(current);
            current = next;
            if (next == Section::User) saw_user = true;
        } else {
            block.push_back(line);
        }
    }
    flush(current);

    if (pending_input)
        throw std::invalid_argument("template \"" + tpl.name_ +
                                    "\": [example.input] without matching output");
    if (!saw_user || tpl.user_.empty())
        throw std::invalid_argument("template \"" + tpl.name_ +
                                    "\": a non-empty [user] section is required");
    return tpl;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open template " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.stem().string());
}

bool PromptTemplate::has_slot(const std::string& slot) const {
    std::vector<std::string> found;
    collect_slots(system_, found);
    for (const Exemplar& e : exemplars_) {
        collect_slots(e.input, found);
        collect_slots(e.output, found);
    }
    collect_slots(user_, found);
    return std::find(found.begin(), found.end(), slot) != found.end();
}

std::vector<ChatMessage> PromptTemplate::render(
    const std::map<std::string, std::string>& slots) const {
    std::vector<ChatMessage> messages;
    if (!system_.empty()) messages.push_back({"system", substitute(system_, slots, name_)});
    for (const Exemplar& e : exemplars_) {
        messages.push_back({"user", substitute(e.input, slots, name_)});
        messages.push_back({"assistant", substitute(e.output, slots, name_)});
    }
    messages.push_back({"user", substitute(user_, slots, name_)});
    return messages;
}

namespace {

json messages_json(const std::vector<ChatMessage>& messages) {
    json arr = json::array();
    for (const ChatMessage& m : messages) arr.push_back({{"content", m.content}, {"role", m.role}});
    return arr;
}

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("base_url must include a scheme: " + base_url);
    auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

}  // namespace

HttpChatBackend::HttpChatBackend(GenerationBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw std::invalid_argument("chat base_url is empty");
    if (config_.model_id.empty()) throw std::invalid_argument("chat model_id is empty");
    if (!std::isfinite(config_.temperature) || config_.temperature < 0.0)
        throw std::invalid_argument("temperature must be finite and non-negative");
    if (config_.max_tokens < 1) throw std::invalid_argument("max_tokens must be positive");
    split_base_url(config_.base_url);  // validates shape early
}

std::string HttpChatBackend::id() const { return "http:" + config_.base_url; }

std::string HttpChatBackend::complete(const ChatRequest& request) {
    json body = {{"model", request.model},
                 {"messages", messages_json(request.messages)},
                 {"temperature", request.temperature},
                 {"max_tokens", request.max_tokens}};
    std::string api_key;
    if (!config_.api_key_env.empty()) {
        if (const char* v = std::getenv(config_.api_key_env.c_str())) api_key = v;
    }
    auto [target, prefix] = split_base_url(config_.base_url);
    json reply = with_retries(config_.max_retries, std::chrono::milliseconds(250), [&]() -> json {
        httplib::Client cli(target);
        cli.set_connection_timeout(config_.timeout_seconds);
        cli.set_read_timeout(config_.timeout_seconds);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = cli.Post(prefix + "/chat/completions", headers, body.dump(),
                            "application/json");
        if (!res)
            throw RetryableError("connection to " + target +
                                 " failed: " + httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500)
            throw RetryableError("HTTP " + std::to_string(res->status) + " from " + target);
        if (res->status != 200)
            throw std::runtime_error("HTTP " + std::to_string(res->status) + " from " + target +
                                     ": " + res->body);
        try {
            return json::parse(res->body);
        } catch (const std::exception& e) {
            throw std::runtime_error("invalid JSON from " + target + ": " + e.what());
        }
    });
    if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty())
        throw std::runtime_error("chat reply has no choices");
    const json& message = reply["choices"][0].value("message", json::object());
    if (!message.contains("content") || !message["content"].is_string())
        throw std::runtime_error("chat reply choice has no message content");
    return message["content"].get<std::string>();
}

MockChatBackend::MockChatBackend(const std::filesystem::path& fixture_path) {
    std::ifstream in(fixture_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open mock fixture " + fixture_path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(fixture_path.string() + ": line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        if (!j.contains("completion") || !j["completion"].is_string())
            throw std::runtime_error(fixture_path.string() + ": line " + std::to_string(line_no) +
                                     ": missing \"completion\"");
        std::string completion = j["completion"].get<std::string>();
        if (j.contains("prompt_digest"))
            by_digest_[j["prompt_digest"].get<std::string>()] = completion;
        else if (j.contains("last_user"))
            by_last_user_[j["last_user"].get<std::string>()] = completion;
        else
            throw std::runtime_error(fixture_path.string() + ": line " + std::to_string(line_no) +
                                     ": entry needs \"prompt_digest\" or \"last_user\"");
    }
}

std::string MockChatBackend::message_digest(const ChatRequest& request) {
    json canonical = {{"messages", messages_json(request.messages)}, {"model", request.model}};
    return sha256_hex(canonical.dump());
}

std::string MockChatBackend::complete(const ChatRequest& request) {
    if (!by_digest_.empty()) {
        auto it = by_digest_.find(message_digest(request));
        if (it != by_digest_.end()) return it->second;
    }
    if (!by_last_user_.empty()) {
        for (auto rit = request.messages.rbegin(); rit != request.messages.rend(); ++rit) {
            if (rit->role == "user") {
                auto it = by_last_user_.find(rit->content);
                if (it != by_last_user_.end()) return it->second;
                break;
            }
        }
    }
    return synthesize(request);
}

namespace {

// Surface variants used to synthesize paraphrases: mostly lexical additions
// around the original question, so mock paraphrases stay semantically close
// (high embedding overlap) while differing in surface form.
const std::vector<std::string> kMockPrefixes = {
    "", "In your view, ", "Honestly, ", "From a moral standpoint, ", "Tell me, ",
    "Thinking about it, ", "In everyday terms, "};
const std::vector<std::string> kMockSuffixes = {"", " What do you think?", " Please explain.",
                                                " Is that acceptable?", " Share your view."};

// Answer pools use deliberately disjoint content vocabulary, so two answers
// drawn from different pools embed far apart under the token-hash test
// backend — mock response sets are semantically scattered while mock
// paraphrase sets stay tight.
const std::vector<std::string> kMockAnswers = {
    "Yes. Keeping promises builds trust, and broken trust rarely heals.",
    "No. Deception corrodes friendship even when intentions seem kind.",
    "It depends on the stakes; minor comfort rarely outweighs honesty.",
    "Generally you should refuse, because consent matters more than convenience.",
    "Most people would forgive this, provided you repair the damage quickly.",
    "Doing so harms nobody directly, yet it normalizes careless behavior.",
    "Only with permission; acting first and apologizing later disrespects others.",
    "Charity begins with fairness: distribute burdens before claiming rewards.",
    "Protecting the vulnerable outweighs loyalty to institutions every time.",
    "Weigh the long-term consequences; short-sighted gains invite lasting regret."};

const std::vector<std::string> kMockRots = {
    "It is wrong to break a promise.",
    "Deceiving a friend is harmful.",
    "Honesty matters more than comfort.",
    "You should obtain consent before acting.",
    "Repairing harm you caused is obligatory.",
    "Avoid normalizing careless behavior.",
    "Respect other people's autonomy.",
    "Fairness requires sharing burdens.",
    "Protecting vulnerable people comes first.",
    "Consider long-term consequences before acting."};

std::string mock_paraphrase_variant(const std::string& question, std::size_t index) {
    const std::string& prefix = kMockPrefixes[index % kMockPrefixes.size()];
    const std::string& suffix =
        kMockSuffixes[(index / kMockPrefixes.size()) % kMockSuffixes.size()];
    std::string body = question;
    if (!prefix.empty() && !body.empty())
        body[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(body[0])));
    std::string text = prefix + body + suffix;
    std::size_t cycle = index / (kMockPrefixes.size() * kMockSuffixes.size());
    if (cycle > 0) text += " (take " + std::to_string(cycle + 1) + ")";
    return text;
}

std::uint64_t request_seed(const ChatRequest& request) {
    std::string material = request.model;
    for (const ChatMessage& m : request.messages) {
        material += '\x1f';
        material += m.role;
        material += '\x1e';
        material += m.content;
    }
    return fnv1a64(material);
}

}  // namespace

std::string MockChatBackend::synthesize(const ChatRequest& request) const {
    switch (request.task) {
        case TaskKind::Paraphrase: {
            int k = request.k > 0 ? request.k : 10;
            std::string out;
            for (int i = 0; i < k; ++i) {
                out += std::to_string(i + 1) + ". " +
                       mock_paraphrase_variant(request.question, static_cast<std::size_t>(i)) +
                       "\n";
            }
            return out;
        }
        case TaskKind::Response:
            return kMockAnswers[request_seed(request) % kMockAnswers.size()];
        case TaskKind::Rot:
            return kMockRots[request_seed(request) % kMockRots.size()];
        case TaskKind::Other: break;
    }
    for (auto rit = request.messages.rbegin(); rit != request.messages.rend(); ++rit)
        if (rit->role == "user") return rit->content;
    return "";
}

std::vector<std::string> parse_numbered_list(const std::string& completion) {
    std::vector<std::string> items;
    std::istringstream stream(completion);
    std::string line;
    while (std::getline(stream, line)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        std::size_t pos = 0;
        if (t[0] == '-' || t[0] == '*') {
            pos = 1;
        } else if (std::isdigit(static_cast<unsigned char>(t[0]))) {
            std::size_t d = 0;
            while (d < t.size() && std::isdigit(static_cast<unsigned char>(t[d]))) ++d;
            if (d < t.size() && (t[d] == '.' || t[d] == ')'))
                pos = d + 1;
            else
                continue;  // a line that merely starts with a number is prose
        } else {
            continue;
        }
        std::string item = trim(t.substr(pos));
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

GenClient::GenClient(std::shared_ptr<ChatBackend> backend, GenerationBackendConfig config,
                     std::shared_ptr<FsCache> cache)
    : backend_(std::move(backend)), config_(std::move(config)), cache_(std::move(cache)) {
    if (!backend_) throw std::invalid_argument("genclient requires a backend");
    if (config_.model_id.empty()) throw std::invalid_argument("genclient requires a model_id");
}

std::string GenClient::complete_cached(const ChatRequest& request) {
    json params = {{"max_tokens", request.max_tokens},
                   {"purpose", "chat"},
                   {"temperature", request.temperature}};
    CacheKey key{backend_->id(), request.model, messages_json(request.messages).dump(),
                 params.dump()};
    if (cache_) {
        if (auto hit = cache_->lookup(key)) {
            ++cache_hits_;
            return *hit;
        }
    }
    std::string completion = backend_->complete(request);
    ++backend_requests_;
    if (cache_) cache_->store(key, completion);
    return completion;
}

std::vector<ParaphraseRecord> GenClient::generate_paraphrases(const QuestionRecord& question,
                                                              int k, const PromptTemplate& tpl) {
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (!tpl.has_slot("question"))
        throw std::invalid_argument("paraphrase template must reference {question}");

    std::map<std::string, std::string> slots = {{"question", question.text},
                                                {"k", std::to_string(k)}};
    ChatRequest request;
    request.model = config_.model_id;
    request.messages = tpl.render(slots);
    request.temperature = config_.temperature;
    request.max_tokens = config_.max_tokens;
    request.task = TaskKind::Paraphrase;
    request.question = question.text;
    request.k = k;

    std::string completion = complete_cached(request);
    std::vector<std::string> items = parse_numbered_list(completion);
    if (static_cast<int>(items.size()) < k) {
        // One corrective round-trip before giving up; models often wrap the
        // list in prose on the first try.
        ChatRequest retry = request;
        retry.messages.push_back({"assistant", completion});
        retry.messages.push_back(
            {"user", "That did not parse as a numbered list of " + std::to_string(k) +
                         " items. Reply with exactly " + std::to_string(k) +
                         " lines, numbered 1. to " + std::to_string(k) +
                         "., one paraphrase per line and nothing else."});
        completion = complete_cached(retry);
        items = parse_numbered_list(completion);
    }
    if (static_cast<int>(items.size()) < k)
        throw GenerationError("expected " + std::to_string(k) + " paraphrases, parsed " +
                                  std::to_string(items.size()) + " from completion",
                              completion);
    items.resize(static_cast<std::size_t>(k));

    std::vector<ParaphraseRecord> records;
    records.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        ParaphraseRecord r;
        r.id = question.id + ".p" + std::to_string(i);
        r.question_id = question.id;
        r.text = items[i];
        records.push_back(std::move(r));
    }
    return records;
}

namespace {

std::string sanitize_for_id(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
            out += c;
        else
            out += '-';
    }
    return out;
}

}  // namespace

ResponseRecord GenClient::generate_response(const ParaphraseRecord& paraphrase,
                                            const PromptTemplate& tpl) {
    if (!tpl.has_slot("question"))
        throw std::invalid_argument("response template must reference {question}");

    ChatRequest request;
    request.model = config_.model_id;
    request.messages = tpl.render({{"question", paraphrase.text}});
    request.temperature = config_.temperature;
    request.max_tokens = config_.max_tokens;
    request.task = TaskKind::Response;
    request.question = paraphrase.text;

    std::string completion = trim(complete_cached(request));
    if (completion.empty()) throw GenerationError("backend returned an empty completion", "");

    ResponseRecord r;
    r.id = paraphrase.id + ".r-" + sanitize_for_id(config_.model_id);
    r.paraphrase_id = paraphrase.id;
    r.model_id = config_.model_id;
    r.text = completion;
    r.gen_params.temperature = config_.temperature;
    r.gen_params.max_tokens = config_.max_tokens;
    return r;
}

RotRecord GenClient::generate_rot(const ResponseRecord& response,
                                  const std::string& question_text, const PromptTemplate& tpl) {
    if (!tpl.has_slot("question"))
        throw std::invalid_argument("rot template must reference {question}");
    if (!tpl.has_slot("answer"))
        throw std::invalid_argument("rot template must reference {answer}");

    ChatRequest request;
    request.model = config_.model_id;
    request.messages = tpl.render({{"question", question_text}, {"answer", response.text}});
    request.temperature = config_.temperature;
    request.max_tokens = config_.max_tokens;
    request.task = TaskKind::Rot;
    request.question = question_text;
    request.answer = response.text;

    std::string completion = trim(complete_cached(request));
    if (completion.empty()) throw GenerationError("backend returned an empty completion", "");

    RotRecord r;
    r.id = response.id + ".rot";
    r.response_id = response.id;
    r.text = completion;
    return r;
}

}  // namespace semcon
