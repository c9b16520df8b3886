#include "pkg/backend.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace pkg::backend {

using nlohmann::json;

const char* to_string(Role role) {
    return role == Role::PkgModule ? "pkg" : "llm";
}

Role role_from_string(const std::string& s) {
    if (s == "pkg") return Role::PkgModule;
    if (s == "llm") return Role::BlackBoxLlm;
    throw Error("unknown backend role: " + s);
}

void BackendDescriptor::validate() const {
    if (endpoint_url.empty()) throw Error("backend endpoint_url must be non-empty");
    if (model_name.empty()) throw Error("backend model_name must be non-empty");
    if (timeout <= Duration(0)) throw Error("backend timeout must be positive");
    if (max_retries < 0) throw Error("backend max_retries must be >= 0");
    if (rate_limit <= 0.0) throw Error("backend rate_limit must be positive");
}

digest::Sha256 cache_key(const std::string& model_name, const GenerationRequest& request) {
    digest::FieldHasher h;
    h.add(model_name);
    h.add(request.prompt);
    h.add_u64(static_cast<std::uint64_t>(request.max_tokens));
    h.add_f64(request.temperature);
    h.add_u64(request.stop.size());
    for (const auto& s : request.stop) h.add(s);
    return h.finish();
}

// --- clocks --------------------------------------------------------------

Clock::TimePoint RealClock::now() const {
    return std::chrono::steady_clock::now();
}

void RealClock::sleep_until(TimePoint t) {
    std::this_thread::sleep_until(t);
}

Clock::TimePoint FakeClock::now() const {
    std::lock_guard lock(mu_);
    return TimePoint(offset_);
}

void FakeClock::sleep_until(TimePoint t) {
    std::lock_guard lock(mu_);
    offset_ = std::max(offset_, t.time_since_epoch());
}

Duration FakeClock::elapsed() const {
    std::lock_guard lock(mu_);
    return std::chrono::duration_cast<Duration>(offset_);
}

std::shared_ptr<Clock> real_clock() {
    static auto clock = std::make_shared<RealClock>();
    return clock;
}

// --- rate limiting -------------------------------------------------------

TokenBucket::TokenBucket(double rate, std::shared_ptr<Clock> clock)
    : clock_(std::move(clock)) {
    if (rate <= 0.0) throw Error("rate limit must be positive");
    interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / rate));
}

void TokenBucket::acquire() {
    Clock::TimePoint scheduled;
    {
        std::lock_guard lock(mu_);
        auto now = clock_->now();
        scheduled = next_free_ ? std::max(*next_free_, now) : now;
        next_free_ = scheduled + interval_;
    }
    if (scheduled > clock_->now()) clock_->sleep_until(scheduled);
}

// --- cache ---------------------------------------------------------------

namespace {

json response_to_json(const GenerationResponse& r) {
    return json{{"text", r.text},
                {"prompt_tokens", r.prompt_tokens},
                {"completion_tokens", r.completion_tokens},
                {"latency_ms", r.latency.count()}};
}

GenerationResponse response_from_json(const json& obj) {
    GenerationResponse r;
    r.text = obj.at("text").get<std::string>();
    r.prompt_tokens = obj.at("prompt_tokens").get<std::int64_t>();
    r.completion_tokens = obj.at("completion_tokens").get<std::int64_t>();
    r.latency = Duration(obj.at("latency_ms").get<std::int64_t>());
    r.cached = false;
    return r;
}

bool is_hex(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c) || (c >= 'a' && c <= 'f');
    });
}

} // namespace

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return; // fresh cache

    // A torn final record (interrupted append) is dropped silently; anything
    // else malformed is an error.
    for (;;) {
        std::string key(64, '\0');
        in.read(key.data(), 64);
        if (in.gcount() == 0) break;
        if (in.gcount() < 64) break; // torn tail
        if (!is_hex(key)) throw IoFailure("corrupt cache file: " + path_.string());
        char len_bytes[8];
        in.read(len_bytes, 8);
        if (in.gcount() < 8) break;
        std::uint64_t len = 0;
        for (int i = 0; i < 8; ++i)
            len |= static_cast<std::uint64_t>(static_cast<unsigned char>(len_bytes[i])) << (8 * i);
        std::string body(len, '\0');
        in.read(body.data(), static_cast<std::streamsize>(len));
        if (static_cast<std::uint64_t>(in.gcount()) < len) break;
        try {
            entries_[key] = response_from_json(json::parse(body));
        } catch (const json::exception&) {
            throw IoFailure("corrupt cache record in " + path_.string());
        }
    }
}

std::optional<GenerationResponse> ResponseCache::lookup(const digest::Sha256& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(digest::to_hex(key));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::store(const digest::Sha256& key, const GenerationResponse& response) {
    std::lock_guard lock(mu_);
    const std::string hex = digest::to_hex(key);
    GenerationResponse stored = response;
    stored.cached = false;
    entries_[hex] = stored;

    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw IoFailure("cannot append to cache " + path_.string());
    const std::string body = response_to_json(stored).dump();
    out.write(hex.data(), 64);
    char len_bytes[8];
    std::uint64_t len = body.size();
    for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<char>(len >> (8 * i));
    out.write(len_bytes, 8);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoFailure("failed appending to cache " + path_.string());
}

void ResponseCache::compact() {
    std::lock_guard lock(mu_);
    const std::filesystem::path tmp = path_.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoFailure("cannot open " + tmp.string() + " for writing");
        for (const auto& [hex, resp] : entries_) {
            const std::string body = response_to_json(resp).dump();
            out.write(hex.data(), 64);
            char len_bytes[8];
            std::uint64_t len = body.size();
            for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<char>(len >> (8 * i));
            out.write(len_bytes, 8);
            out.write(body.data(), static_cast<std::streamsize>(body.size()));
        }
        if (!out) throw IoFailure("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path_);
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

// --- stub ----------------------------------------------------------------

namespace {

std::int64_t rough_token_count(const std::string& text) {
    std::istringstream in(text);
    std::string tok;
    std::int64_t n = 0;
    while (in >> tok) ++n;
    return n;
}

} // namespace

StubBackend::StubBackend(Role role, std::string default_text)
    : default_text_(std::move(default_text)) {
    descriptor_.role = role;
    descriptor_.endpoint_url = "stub://local";
    descriptor_.model_name = role == Role::PkgModule ? "stub-pkg" : "stub-llm";
    descriptor_.timeout = Duration(1000);
    descriptor_.max_retries = 0;
    descriptor_.rate_limit = 1e9;
}

void StubBackend::script(const std::string& prompt, const std::string& response_text) {
    script_digest(digest::sha256(prompt), response_text);
}

void StubBackend::script_digest(const digest::Sha256& prompt_digest,
                                const std::string& response_text) {
    std::lock_guard lock(mu_);
    scripted_[digest::to_hex(prompt_digest)] = response_text;
}

void StubBackend::fail_prompt(const std::string& prompt, FailureKind kind) {
    std::lock_guard lock(mu_);
    failures_[digest::to_hex(digest::sha256(prompt))] = kind;
}

const BackendDescriptor& StubBackend::descriptor() const {
    return descriptor_;
}

GenerationResponse StubBackend::generate(const GenerationRequest& request) {
    std::lock_guard lock(mu_);
    ++calls_;
    prompts_.push_back(request.prompt);
    const std::string hex = digest::to_hex(digest::sha256(request.prompt));
    if (auto it = failures_.find(hex); it != failures_.end())
        throw BackendError(it->second, 1, "scripted failure");

    GenerationResponse resp;
    auto it = scripted_.find(hex);
    resp.text = it != scripted_.end() ? it->second : default_text_;
    resp.prompt_tokens = rough_token_count(request.prompt);
    resp.completion_tokens = rough_token_count(resp.text);
    return resp;
}

std::size_t StubBackend::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::vector<std::string> StubBackend::prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
}

// --- HTTP ----------------------------------------------------------------

namespace {

struct ParsedUrl {
    std::string base; // scheme://host:port
    std::string path; // /...
};

ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("endpoint_url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_transport_error(httplib::Error err) {
    return err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
           err == httplib::Error::Write;
}

} // namespace

HttpBackend::HttpBackend(BackendDescriptor descriptor, std::shared_ptr<Clock> clock)
    : descriptor_(std::move(descriptor)),
      clock_(std::move(clock)),
      bucket_(descriptor_.rate_limit, clock_) {
    descriptor_.validate();
}

const BackendDescriptor& HttpBackend::descriptor() const {
    return descriptor_;
}

std::size_t HttpBackend::network_calls() const {
    std::lock_guard lock(mu_);
    return network_calls_;
}

GenerationResponse HttpBackend::generate(const GenerationRequest& request) {
    if (request.prompt.empty()) throw Error("generation prompt must be non-empty");
    if (request.max_tokens < 1) throw Error("max_tokens must be >= 1");
    if (request.temperature < 0.0) throw Error("temperature must be >= 0");

    const ParsedUrl url = parse_url(descriptor_.endpoint_url);
    const std::string body = json{{"model", descriptor_.model_name},
                                  {"prompt", request.prompt},
                                  {"max_tokens", request.max_tokens},
                                  {"temperature", request.temperature},
                                  {"stop", request.stop}}
                                 .dump();

    httplib::Headers headers;
    if (const char* key = std::getenv("PKG_API_KEY"))
        headers.emplace("Authorization", std::string("Bearer ") + key);

    Duration backoff(100);
    int attempts = 0;
    for (;;) {
        bucket_.acquire();
        {
            std::lock_guard lock(mu_);
            ++network_calls_;
        }
        ++attempts;

        httplib::Client client(url.base);
        const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(descriptor_.timeout);
        const auto timeout_us =
            std::chrono::duration_cast<std::chrono::microseconds>(descriptor_.timeout) -
            std::chrono::duration_cast<std::chrono::microseconds>(timeout_s);
        client.set_connection_timeout(timeout_s.count(), timeout_us.count());
        client.set_read_timeout(timeout_s.count(), timeout_us.count());
        client.set_write_timeout(timeout_s.count(), timeout_us.count());

        const auto t0 = std::chrono::steady_clock::now();
        httplib::Result res = client.Post(url.path, headers, body, "application/json");
        const auto latency = std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - t0);

        FailureKind kind;
        std::string detail;
        if (res) {
            if (res->status == 200) {
                json parsed;
                try {
                    parsed = json::parse(res->body);
                } catch (const json::exception& e) {
                    throw BackendError(FailureKind::MalformedResponse, attempts,
                                       std::string("response is not JSON: ") + e.what());
                }
                if (!parsed.is_object() || !parsed.contains("text") ||
                    !parsed.at("text").is_string() || !parsed.contains("usage") ||
                    !parsed.at("usage").is_object())
                    throw BackendError(FailureKind::MalformedResponse, attempts,
                                       "response missing text/usage");
                const json& usage = parsed.at("usage");
                GenerationResponse out;
                out.text = parsed.at("text").get<std::string>();
                out.prompt_tokens = usage.value("prompt_tokens", std::int64_t(0));
                out.completion_tokens = usage.value("completion_tokens", std::int64_t(0));
                out.latency = latency;
                return out;
            }
            if (res->status == 429) {
                kind = FailureKind::RateLimited;
                detail = "HTTP 429";
            } else if (res->status >= 500) {
                kind = FailureKind::TransportFailure;
                detail = "HTTP " + std::to_string(res->status);
            } else {
                // other 4xx: deterministic client error, never retried
                throw BackendError(FailureKind::TransportFailure, attempts,
                                   "HTTP " + std::to_string(res->status));
            }
        } else if (retryable_transport_error(res.error())) {
            kind = FailureKind::Timeout;
            detail = httplib::to_string(res.error());
        } else {
            throw BackendError(FailureKind::TransportFailure, attempts,
                               httplib::to_string(res.error()));
        }

        if (attempts > descriptor_.max_retries) throw BackendError(kind, attempts, detail);
        clock_->sleep_for(backoff);
        backoff = std::min(backoff * 2, Duration(2000));
    }
}

// --- cache decorator -----------------------------------------------------

CachedBackend::CachedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

const BackendDescriptor& CachedBackend::descriptor() const {
    return inner_->descriptor();
}

GenerationResponse CachedBackend::generate(const GenerationRequest& request) {
    const digest::Sha256 key = cache_key(inner_->descriptor().model_name, request);
    if (auto hit = cache_->lookup(key)) {
        hit->cached = true;
        std::lock_guard lock(mu_);
        ++cache_hits_;
        return *hit;
    }
    GenerationResponse resp = inner_->generate(request);
    cache_->store(key, resp);
    return resp;
}

std::size_t CachedBackend::cache_hits() const {
    std::lock_guard lock(mu_);
    return cache_hits_;
}

// --- batching ------------------------------------------------------------

std::vector<GenerationResult> generate_batch(Backend& backend,
                                             const std::vector<GenerationRequest>& requests,
                                             std::size_t max_in_flight) {
    if (max_in_flight < 1) throw Error("max_in_flight must be >= 1");

    std::vector<GenerationResult> results(requests.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) return;
            try {
                results[i] = backend.generate(requests[i]);
            } catch (const BackendError& e) {
                results[i] = BackendFailure{e.kind(), e.what(), e.attempts()};
            } catch (const std::exception& e) {
                results[i] = BackendFailure{FailureKind::TransportFailure, e.what(), 0};
            }
        }
    };

    const std::size_t n_workers = std::min(max_in_flight, requests.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return results;
}

} // namespace pkg::backend
