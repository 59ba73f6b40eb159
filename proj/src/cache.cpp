#include "semcon/cache.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "semcon/hash.hpp"

namespace semcon {

namespace {

void append_field(std::string& buf, const std::string& field) {
    buf += std::to_string(field.size());
    buf += ':';
    buf += field;
}

}  // namespace

std::string CacheKey::digest() const {
    std::string buf;
    buf.reserve(backend_id.size() + model_id.size() + prompt.size() + params.size() + 32);
    append_field(buf, backend_id);
    append_field(buf, model_id);
    append_field(buf, prompt);
    append_field(buf, params);
    return sha256_hex(buf);
}

FsCache::FsCache(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
}

std::filesystem::path FsCache::path_for(const std::string& digest) const {
    return root_ / (digest + ".json");
}

std::optional<std::string> FsCache::lookup(const CacheKey& key) const {
    std::ifstream in(path_for(key.digest()), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void FsCache::store(const CacheKey& key, const std::string& value) {
    std::filesystem::path target = path_for(key.digest());
    // Stage under a name unique to this process and call: identical requests
    // running in parallel would otherwise share a staging file, and the loser
    // of the rename race would fail spuriously.
    static std::atomic<unsigned long long> store_seq{0};
    std::filesystem::path tmp = target;
    tmp += ".tmp-" + std::to_string(static_cast<unsigned long>(getpid())) + "-" +
           std::to_string(store_seq.fetch_add(1, std::memory_order_relaxed));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write cache entry " + tmp.string());
        out << value;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write failed for cache entry " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, target);
}

}  // namespace semcon
