#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "semcon/cache.hpp"

namespace semcon {

struct EmbeddingVector {
    std::vector<double> values;
    std::string backend_id;
    std::string model_id;
    std::string text_digest;

    std::size_t dim() const { return values.size(); }
};

// Validates the invariants (non-empty, all finite, not all-zero) and throws on
// violation; the only way EmbeddingVectors enter the system.
EmbeddingVector make_embedding(std::vector<double> values, std::string backend_id,
                               std::string model_id, std::string text_digest);

// dot(a,b)/(|a||b|), clamped to [-1,1]. Identical value sequences short-circuit
// to exactly 1.0 so self-similarity is never subject to rounding.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingBackend {
  public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string id() const = 0;
    virtual std::string model_id() const = 0;
    // Returns one vector per input text, in input order.
    virtual std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) = 0;
};

// Deterministic offline backend: each case-folded word token hashes (fnv1a64)
// to a seed driving a fixed coordinate pattern; the text vector is the mean of
// its token patterns. Pattern values are derived from raw mt19937_64 output
// ((u >> 11) * 2^-53 * 2 - 1) rather than a distribution object, so results
// are identical across standard-library implementations.
class TestEmbeddingBackend : public EmbeddingBackend {
  public:
    explicit TestEmbeddingBackend(std::size_t dim = 64);

    std::string id() const override { return "test"; }
    std::string model_id() const override { return model_id_; }
    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override;

    // Exposed so tests can recompute vectors independently of embed_batch.
    std::vector<double> token_pattern(const std::string& token) const;
    std::vector<double> embed_one(const std::string& text) const;

  private:
    std::size_t dim_;
    std::string model_id_;
};

struct HttpEmbedderConfig {
    std::string base_url;  // e.g. http://localhost:8080/v1
    std::string model;
    std::string api_key;   // optional; sent as a bearer token when non-empty
    int timeout_seconds = 60;
    int max_retries = 3;
};

// POST {base_url}/embeddings with {"model","input":[...]}; expects
// {"data":[{"embedding":[...]},...]} in input order.
class HttpEmbeddingBackend : public EmbeddingBackend {
  public:
    explicit HttpEmbeddingBackend(HttpEmbedderConfig config);

    std::string id() const override;
    std::string model_id() const override { return config_.model; }
    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override;

  private:
    HttpEmbedderConfig config_;
};

// Caching front of a backend. Locks the vector dimension at the first
// embedding it sees and rejects any later mismatch; counts backend requests
// and cache hits for pipeline bookkeeping.
class Embedder {
  public:
    Embedder(std::shared_ptr<EmbeddingBackend> backend, std::shared_ptr<FsCache> cache);

    EmbeddingVector embed(const std::string& text);
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts);

    std::string backend_id() const { return backend_->id(); }
    std::string model_id() const { return backend_->model_id(); }
    std::size_t dim();  // 0 until the first vector has been produced
    std::size_t backend_requests() const { return backend_requests_.load(); }
    std::size_t cache_hits() const { return cache_hits_.load(); }

  private:
    CacheKey key_for(const std::string& text) const;
    void check_dim(std::size_t dim);

    std::shared_ptr<EmbeddingBackend> backend_;
    std::shared_ptr<FsCache> cache_;
    std::mutex dim_mutex_;
    std::size_t locked_dim_ = 0;  // 0 until the first vector arrives
    std::atomic<std::size_t> backend_requests_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

// Row-major binary embedding store (layout documented in the README):
//   "SEMB" | u32 version=1 | u32 dim | u64 count
//   u32 backend_id length | backend_id bytes
//   u32 model_id length   | model_id bytes
//   count × dim float64 values
// All integers and floats little-endian. Row i corresponds to line i of the
// JSONL file the embeddings were computed from.
struct EmbeddingMatrix {
    std::uint32_t dim = 0;
    std::string backend_id;
    std::string model_id;
    std::vector<std::vector<double>> rows;
};

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

}  // namespace semcon
