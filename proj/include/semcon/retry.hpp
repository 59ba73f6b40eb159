#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <thread>

namespace semcon {

// Transient failure (connection error, 429, 5xx): eligible for retry.
// Anything else a backend throws is treated as permanent.
struct RetryableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runs f, retrying up to max_retries additional times on RetryableError with
// exponential backoff (base_delay, 2x per attempt). Permanent errors and the
// final retryable failure propagate to the caller.
template <typename F>
auto with_retries(int max_retries, std::chrono::milliseconds base_delay, F&& f)
    -> decltype(f()) {
    for (int attempt = 0;; ++attempt) {
        try {
            return f();
        } catch (const RetryableError&) {
            if (attempt >= max_retries) throw;
            std::this_thread::sleep_for(base_delay * (1 << attempt));
        }
    }
}

}  // namespace semcon
