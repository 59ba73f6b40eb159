#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "semcon/cache.hpp"
#include "semcon/records.hpp"

namespace semcon {

struct GenerationBackendConfig {
    std::string base_url;
    std::string model_id;
    std::string api_key_env = "SEMCON_API_KEY";  // env var holding the bearer token
    double temperature = 0.0;
    int max_tokens = 256;
    int timeout_seconds = 120;
    int max_retries = 3;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

enum class TaskKind { Other, Paraphrase, Response, Rot };

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 256;

    // Hints for offline synthesis by the mock backend. HTTP backends ignore
    // them and they stay out of the cache key — the messages already
    // determine the completion.
    TaskKind task = TaskKind::Other;
    std::string question;
    std::string answer;
    int k = 0;
};

// Sectioned few-shot template:
//   [system]          system preamble (optional)
//   [example.input]   \ repeated pairs forming the few-shot
//   [example.output]  / exemplar list (optional)
//   [user]            final user turn (required)
// Placeholders {question}, {answer}, {k} are substituted at render time; a
// placeholder the caller does not supply is an error, as is a required slot
// the template never mentions.
class PromptTemplate {
  public:
    struct Exemplar {
        std::string input;
        std::string output;
    };

    static PromptTemplate parse(const std::string& text, std::string name);
    static PromptTemplate load(const std::filesystem::path& path);

    const std::string& name() const { return name_; }
    const std::string& system() const { return system_; }
    const std::vector<Exemplar>& exemplars() const { return exemplars_; }
    const std::string& user() const { return user_; }

    // True when any section references {slot}.
    bool has_slot(const std::string& slot) const;

    std::vector<ChatMessage> render(const std::map<std::string, std::string>& slots) const;

  private:
    std::string name_;
    std::string system_;
    std::vector<Exemplar> exemplars_;
    std::string user_;
};

class ChatBackend {
  public:
    virtual ~ChatBackend() = default;
    virtual std::string id() const = 0;
    // Returns the assistant message content.
    virtual std::string complete(const ChatRequest& request) = 0;
};

// POST {base_url}/chat/completions with the standard JSON shape; bearer token
// read from the configured environment variable at request time.
class HttpChatBackend : public ChatBackend {
  public:
    explicit HttpChatBackend(GenerationBackendConfig config);

    std::string id() const override;
    std::string complete(const ChatRequest& request) override;

  private:
    GenerationBackendConfig config_;
};

// Offline stand-in for a chat endpoint. Resolution order per request:
//   1. fixture entry whose "prompt_digest" equals the request's message
//      digest;
//   2. fixture entry whose "last_user" equals the final user message;
//   3. deterministic synthesis from the request hints (lexical paraphrase
//      variants; answers and rules drawn from fixed disjoint-vocabulary pools
//      keyed by a hash of model + messages).
// Everything is a pure function of the request, so mock runs are replayable.
class MockChatBackend : public ChatBackend {
  public:
    MockChatBackend() = default;
    explicit MockChatBackend(const std::filesystem::path& fixture_path);

    std::string id() const override { return "mock"; }
    std::string complete(const ChatRequest& request) override;

    static std::string message_digest(const ChatRequest& request);

  private:
    std::string synthesize(const ChatRequest& request) const;

    std::map<std::string, std::string> by_digest_;
    std::map<std::string, std::string> by_last_user_;
};

// Thrown when a completion cannot be used (unparseable list, empty text);
// carries the raw model output for diagnosis.
struct GenerationError : std::runtime_error {
    GenerationError(const std::string& message, std::string raw)
        : std::runtime_error(message), raw_completion(std::move(raw)) {}
    std::string raw_completion;
};

// Splits a completion into list items: lines prefixed "1." / "1)" / "-" / "*"
// count, other lines are ignored as prose.
std::vector<std::string> parse_numbered_list(const std::string& completion);

// Generation front-end: renders templates, talks to one backend through the
// cache, and shapes completions into corpus records.
class GenClient {
  public:
    GenClient(std::shared_ptr<ChatBackend> backend, GenerationBackendConfig config,
              std::shared_ptr<FsCache> cache);

    // k candidates parsed from a numbered list; ids <question_id>.p<ordinal>.
    // One automatic re-prompt when the first completion yields fewer than k
    // items; still short after that → GenerationError with the raw output.
    std::vector<ParaphraseRecord> generate_paraphrases(const QuestionRecord& question, int k,
                                                       const PromptTemplate& tpl);

    ResponseRecord generate_response(const ParaphraseRecord& paraphrase,
                                     const PromptTemplate& tpl);

    RotRecord generate_rot(const ResponseRecord& response, const std::string& question_text,
                           const PromptTemplate& tpl);

    const GenerationBackendConfig& config() const { return config_; }
    std::size_t backend_requests() const { return backend_requests_.load(); }
    std::size_t cache_hits() const { return cache_hits_.load(); }

  private:
    std::string complete_cached(const ChatRequest& request);

    std::shared_ptr<ChatBackend> backend_;
    GenerationBackendConfig config_;
    std::shared_ptr<FsCache> cache_;
    std::atomic<std::size_t> backend_requests_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

struct BatchFailure {
    std::size_t index = 0;
    std::string error;
};

template <typename R>
struct BatchOutcome {
    std::vector<std::optional<R>> results;  // index-aligned with the input
    std::vector<BatchFailure> failures;     // sorted by index

    bool complete() const { return failures.empty(); }
};

// Runs fn over items with at most `parallelism` calls in flight; results keep
// input order. Per-item failures are collected rather than fatal — unless
// every item fails, which raises the first error.
template <typename T, typename Fn>
auto run_batch(const std::vector<T>& items, Fn&& fn, int parallelism)
    -> BatchOutcome<std::invoke_result_t<Fn&, const T&>> {
    using R = std::invoke_result_t<Fn&, const T&>;
    if (parallelism < 1) throw std::invalid_argument("parallelism must be at least 1");

    BatchOutcome<R> outcome;
    outcome.results.resize(items.size());
    if (items.empty()) return outcome;

    std::atomic<std::size_t> next{0};
    std::mutex failures_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            try {
                outcome.results[i] = fn(items[i]);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failures_mutex);
                outcome.failures.push_back({i, e.what()});
            }
        }
    };

    std::size_t thread_count = std::min<std::size_t>(static_cast<std::size_t>(parallelism),
                                                     items.size());
    if (thread_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(thread_count);
        for (std::size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    std::sort(outcome.failures.begin(), outcome.failures.end(),
              [](const BatchFailure& a, const BatchFailure& b) { return a.index < b.index; });
    if (outcome.failures.size() == items.size())
        throw std::runtime_error("every batch item failed; first error: " +
                                 outcome.failures.front().error);
    return outcome;
}

}  // namespace semcon
