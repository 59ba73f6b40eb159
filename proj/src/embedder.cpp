#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "semcon/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "httplib.h"
#include "json.hpp"

#include "semcon/hash.hpp"
#include "semcon/retry.hpp"
#include "semcon/text.hpp"

namespace semcon {

using json = nlohmann::json;

EmbeddingVector make_embedding(std::vector<double> values, std::string backend_id,
                               std::string model_id, std::string text_digest) {
    if (values.empty()) throw std::invalid_argument("embedding has zero dimension");
    bool all_zero = true;
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("embedding contains non-finite value");
        if (v != 0.0) all_zero = false;
    }
    if (all_zero) throw std::invalid_argument("embedding is the zero vector");
    return EmbeddingVector{std::move(values), std::move(backend_id), std::move(model_id),
                           std::move(text_digest)};
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch (" +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                    ")");
    if (a.empty()) throw std::invalid_argument("cosine_similarity: empty vectors");
    if (a == b) {
        // Equal sequences mean cosine 1 by definition; skipping the arithmetic
        // keeps self-similarity exact. Still reject the zero vector.
        bool all_zero = std::all_of(a.begin(), a.end(), [](double v) { return v == 0.0; });
        if (all_zero) throw std::invalid_argument("cosine_similarity: zero vector");
        return 1.0;
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero vector");
    double cos = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(cos, -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_similarity(a.values, b.values);
}

TestEmbeddingBackend::TestEmbeddingBackend(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw std::invalid_argument("test embedder dimension must be positive");
    model_id_ = "token-hash-" + std::to_string(dim_);
}

std::vector<double> TestEmbeddingBackend::token_pattern(const std::string& token) const {
    std::mt19937_64 gen(fnv1a64(token));
    std::vector<double> pattern(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
        // Map raw engine output to [-1, 1) by hand; uniform_real_distribution
        // is not pinned down by the standard and would break cross-platform
        // reproducibility of cached vectors.
        std::uint64_t u = gen();
        pattern[i] = static_cast<double>(u >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
    return pattern;
}

std::vector<double> TestEmbeddingBackend::embed_one(const std::string& text) const {
    std::vector<std::string> tokens = word_tokens(text);
    if (tokens.empty()) throw std::invalid_argument("cannot embed empty text");
    std::vector<double> acc(dim_, 0.0);
    for (const std::string& tok : tokens) {
        std::vector<double> pat = token_pattern(tok);
        for (std::size_t i = 0; i < dim_; ++i) acc[i] += pat[i];
    }
    for (double& v : acc) v /= static_cast<double>(tokens.size());
    return acc;
}

std::vector<std::vector<double>> TestEmbeddingBackend::embed_batch(
    const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(embed_one(t));
    return out;
}

namespace {

// Splits "http://host:port/prefix" into client target and path prefix.
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

json post_json(const std::string& base_url, const std::string& path, const json& body,
               const std::string& api_key, int timeout_seconds, int max_retries) {
    auto [target, prefix] = split_base_url(base_url);
    return with_retries(max_retries, std::chrono::milliseconds(250), [&]() -> json {
        httplib::Client cli(target);
        cli.set_connection_timeout(timeout_seconds);
        cli.set_read_timeout(timeout_seconds);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = cli.Post(prefix + path, headers, body.dump(), "application/json");
        if (!res)
            throw RetryableError("connection to " + target + " failed: " +
                                 httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500)
            throw RetryableError("HTTP " + std::to_string(res->status) + " from " + target +
                                 path);
        if (res->status != 200)
            throw std::runtime_error("HTTP " + std::to_string(res->status) + " from " + target +
                                     path + ": " + res->body);
        try {
            return json::parse(res->body);
        } catch (const std::exception& e) {
            throw std::runtime_error("invalid JSON from " + target + path + ": " + e.what());
        }
    });
}

}  // namespace

HttpEmbeddingBackend::HttpEmbeddingBackend(HttpEmbedderConfig config)
    : config_(std::move(config)) {
    if (config_.base_url.empty()) throw std::invalid_argument("embedding base_url is empty");
    if (config_.model.empty()) throw std::invalid_argument("embedding model is empty");
}

std::string HttpEmbeddingBackend::id() const { return "http:" + config_.base_url; }

std::vector<std::vector<double>> HttpEmbeddingBackend::embed_batch(
    const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    json body = {{"model", config_.model}, {"input", texts}};
    json reply = post_json(config_.base_url, "/embeddings", body, config_.api_key,
                           config_.timeout_seconds, config_.max_retries);
    if (!reply.contains("data") || !reply["data"].is_array() || reply["data"].size() != texts.size())
        throw std::runtime_error("embeddings reply has wrong shape (expected " +
                                 std::to_string(texts.size()) + " rows)");
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& row : reply["data"]) {
        if (!row.contains("embedding") || !row["embedding"].is_array())
            throw std::runtime_error("embeddings reply row missing \"embedding\"");
        out.push_back(row["embedding"].get<std::vector<double>>());
    }
    return out;
}

Embedder::Embedder(std::shared_ptr<EmbeddingBackend> backend, std::shared_ptr<FsCache> cache)
    : backend_(std::move(backend)), cache_(std::move(cache)) {
    if (!backend_) throw std::invalid_argument("embedder requires a backend");
}

CacheKey Embedder::key_for(const std::string& text) const {
    return CacheKey{backend_->id(), backend_->model_id(), text, "embeddings"};
}

EmbeddingVector Embedder::embed(const std::string& text) {
    return embed_batch({text}).front();
}

std::vector<EmbeddingVector> Embedder::embed_batch(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> values(texts.size());
    std::vector<std::size_t> miss_index;
    std::vector<std::string> miss_texts;

    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (trim(texts[i]).empty())
            throw std::invalid_argument("cannot embed empty text (batch position " +
                                        std::to_string(i) + ")");
        if (cache_) {
            if (auto hit = cache_->lookup(key_for(texts[i]))) {
                values[i] = json::parse(*hit).get<std::vector<double>>();
                ++cache_hits_;
                continue;
            }
        }
        miss_index.push_back(i);
        miss_texts.push_back(texts[i]);
    }

    if (!miss_texts.empty()) {
        std::vector<std::vector<double>> fresh = backend_->embed_batch(miss_texts);
        ++backend_requests_;
        if (fresh.size() != miss_texts.size())
            throw std::runtime_error("backend returned " + std::to_string(fresh.size()) +
                                     " vectors for " + std::to_string(miss_texts.size()) +
                                     " texts");
        for (std::size_t k = 0; k < miss_index.size(); ++k) {
            values[miss_index[k]] = std::move(fresh[k]);
            if (cache_) cache_->store(key_for(miss_texts[k]), json(values[miss_index[k]]).dump());
        }
    }

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        EmbeddingVector v = make_embedding(std::move(values[i]), backend_->id(),
                                           backend_->model_id(), sha256_hex(texts[i]));
        check_dim(v.dim());
        out.push_back(std::move(v));
    }
    return out;
}

std::size_t Embedder::dim() {
    std::lock_guard<std::mutex> lock(dim_mutex_);
    return locked_dim_;
}

void Embedder::check_dim(std::size_t dim) {
    std::lock_guard<std::mutex> lock(dim_mutex_);
    if (locked_dim_ == 0) locked_dim_ = dim;
    if (dim != locked_dim_)
        throw std::runtime_error("embedding dimension changed mid-run: expected " +
                                 std::to_string(locked_dim_) + ", got " + std::to_string(dim));
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("truncated embedding file");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("truncated embedding file");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

double read_f64(std::istream& in) {
    std::uint64_t bits = read_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string read_str(std::istream& in) {
    std::uint32_t n = read_u32(in);
    if (n > (1u << 20)) throw std::runtime_error("implausible string length in embedding file");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw std::runtime_error("truncated embedding file");
    return s;
}

}  // namespace

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
    if (matrix.dim == 0) throw std::invalid_argument("embedding matrix has zero dimension");
    for (const auto& row : matrix.rows)
        if (row.size() != matrix.dim)
            throw std::invalid_argument("embedding matrix row size does not match dim");

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write("SEMB", 4);
        write_u32(out, 1);  // format version
        write_u32(out, matrix.dim);
        write_u64(out, matrix.rows.size());
        write_str(out, matrix.backend_id);
        write_str(out, matrix.model_id);
        for (const auto& row : matrix.rows)
            for (double v : row) write_f64(out, v);
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SEMB", 4) != 0)
        throw std::runtime_error(path.string() + " is not an embedding file (bad magic)");
    std::uint32_t version = read_u32(in);
    if (version != 1)
        throw std::runtime_error("unsupported embedding file version " + std::to_string(version));
    EmbeddingMatrix m;
    m.dim = read_u32(in);
    std::uint64_t count = read_u64(in);
    m.backend_id = read_str(in);
    m.model_id = read_str(in);
    if (m.dim == 0) throw std::runtime_error("embedding file declares zero dimension");
    m.rows.resize(count);
    for (auto& row : m.rows) {
        row.resize(m.dim);
        for (double& v : row) v = read_f64(in);
    }
    return m;
}

}  // namespace semcon
