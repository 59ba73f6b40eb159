#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace semcon {

// Identifies one backend invocation. Two keys collide iff every field matches,
// so the digest is computed over length-prefixed fields rather than a naive
// concatenation (("ab","c") must not alias ("a","bc")).
struct CacheKey {
    std::string backend_id;
    std::string model_id;
    std::string prompt;       // canonical serialization of the full request
    std::string params;       // canonical serialization of generation params

    std::string digest() const;  // sha256 hex, 64 chars
};

// One file per digest under root/. Writes go through a temp file + rename so a
// crashed process never leaves a truncated entry; concurrent writers race
// benignly (last rename wins, both wrote the same deterministic payload).
class FsCache {
  public:
    explicit FsCache(std::filesystem::path root);

    std::optional<std::string> lookup(const CacheKey& key) const;
    void store(const CacheKey& key, const std::string& value);

    const std::filesystem::path& root() const { return root_; }

  private:
    std::filesystem::path path_for(const std::string& digest) const;

    std::filesystem::path root_;
};

}  // namespace semcon
