#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pkg/digest.hpp"
#include "pkg/errors.hpp"

namespace pkg::backend {

using Duration = std::chrono::milliseconds;

enum class Role { PkgModule, BlackBoxLlm };

const char* to_string(Role role);
Role role_from_string(const std::string& s);

struct BackendDescriptor {
    Role role = Role::BlackBoxLlm;
    std::string endpoint_url;
    std::string model_name;
    Duration timeout = Duration(30000);
    int max_retries = 3;
    double rate_limit = 10.0; // requests per second

    void validate() const;
};

struct GenerationRequest {
    std::string prompt;
    int max_tokens = 256;
    double temperature = 0.0;
    std::vector<std::string> stop;
};

struct GenerationResponse {
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    Duration latency = Duration(0);
    bool cached = false;
};

// Value-type mirror of BackendError, for per-slot batch results.
struct BackendFailure {
    FailureKind kind = FailureKind::TransportFailure;
    std::string message;
    int attempts = 0;
};

using GenerationResult = std::variant<GenerationResponse, BackendFailure>;

// Deterministic cache key over (model, prompt, max_tokens, temperature,
// stop); every field is length-prefixed before hashing.
digest::Sha256 cache_key(const std::string& model_name, const GenerationRequest& request);

// Injectable time source so rate limiting and backoff are testable without
// real waiting.
class Clock {
public:
    using TimePoint = std::chrono::steady_clock::time_point;

    virtual ~Clock() = default;
    virtual TimePoint now() const = 0;
    virtual void sleep_until(TimePoint t) = 0;
    void sleep_for(Duration d) { sleep_until(now() + d); }
};

class RealClock : public Clock {
public:
    TimePoint now() const override;
    void sleep_until(TimePoint t) override;
};

// Virtual time: sleeping advances the clock instantly. Absolute deadlines
// keep concurrent sleepers from double-counting.
class FakeClock : public Clock {
public:
    TimePoint now() const override;
    void sleep_until(TimePoint t) override;
    Duration elapsed() const;

private:
    mutable std::mutex mu_;
    std::chrono::steady_clock::duration offset_{0};
};

std::shared_ptr<Clock> real_clock();

// Paces dispatches to at most `rate` per second (one token of burst).
class TokenBucket {
public:
    TokenBucket(double rate, std::shared_ptr<Clock> clock);
    void acquire();

private:
    std::chrono::steady_clock::duration interval_;
    std::shared_ptr<Clock> clock_;
    std::mutex mu_;
    std::optional<Clock::TimePoint> next_free_;
};

// Append-only file cache: 64 hex digest bytes, u64 little-endian length,
// JSON response. Replays of identical requests never reach the network.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path path);

    std::optional<GenerationResponse> lookup(const digest::Sha256& key) const;
    void store(const digest::Sha256& key, const GenerationResponse& response);

    // Rewrites the file keeping only the last write per key.
    void compact();

    std::size_t size() const;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::map<std::string, GenerationResponse> entries_;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual const BackendDescriptor& descriptor() const = 0;
    virtual GenerationResponse generate(const GenerationRequest& request) = 0;
};

// Scripted offline backend. Responses are keyed by the digest of the exact
// prompt; unmatched prompts get the default text.
class StubBackend : public Backend {
public:
    explicit StubBackend(Role role, std::string default_text = "");

    void script(const std::string& prompt, const std::string& response_text);
    void script_digest(const digest::Sha256& prompt_digest, const std::string& response_text);
    void fail_prompt(const std::string& prompt, FailureKind kind); // scripted failure

    const BackendDescriptor& descriptor() const override;
    GenerationResponse generate(const GenerationRequest& request) override;

    std::size_t calls() const;
    std::vector<std::string> prompts() const;

private:
    BackendDescriptor descriptor_;
    std::string default_text_;
    std::map<std::string, std::string> scripted_;
    std::map<std::string, FailureKind> failures_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
    std::vector<std::string> prompts_;
};

// POST {endpoint_url} with the JSON protocol body; retries timeouts, 429
// and 5xx with exponential backoff. Sends Authorization: Bearer $PKG_API_KEY
// when the variable is set.
class HttpBackend : public Backend {
public:
    HttpBackend(BackendDescriptor descriptor, std::shared_ptr<Clock> clock = real_clock());

    const BackendDescriptor& descriptor() const override;
    GenerationResponse generate(const GenerationRequest& request) override;

    std::size_t network_calls() const;

private:
    BackendDescriptor descriptor_;
    std::shared_ptr<Clock> clock_;
    TokenBucket bucket_;
    mutable std::mutex mu_;
    std::size_t network_calls_ = 0;
};

// Cache in front of any backend; hits return cached=true without touching
// the inner backend.
class CachedBackend : public Backend {
public:
    CachedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<ResponseCache> cache);

    const BackendDescriptor& descriptor() const override;
    GenerationResponse generate(const GenerationRequest& request) override;

    std::size_t cache_hits() const;

private:
    std::shared_ptr<Backend> inner_;
    std::shared_ptr<ResponseCache> cache_;
    mutable std::mutex mu_;
    std::size_t cache_hits_ = 0;
};

// Runs requests through `backend` with at most max_in_flight outstanding;
// results come back in input order and failures stay per-slot.
std::vector<GenerationResult> generate_batch(Backend& backend,
                                             const std::vector<GenerationRequest>& requests,
                                             std::size_t max_in_flight);

} // namespace pkg::backend
