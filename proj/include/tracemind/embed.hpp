#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "tracemind/trace.hpp"

namespace tracemind {

struct RawEmbedding {
    Vec vector;
    std::string provider_id;
};

enum class ProviderKind { hashing, http };

struct ProviderConfig {
    ProviderKind kind = ProviderKind::hashing;
    int dimension = 3072;
    uint64_t hash_seed = 0x9e3779b97f4a7c15ULL;
    std::string endpoint;      // http only, e.g. "http://127.0.0.1:8080/v1/embeddings"
    std::string auth_token;    // sent as "Authorization: Bearer <token>" when set
    std::string input_field = "input";
    std::string data_field = "data";
    std::string embedding_field = "embedding";
    std::string cache_path;    // "" disables caching

    void validate() const;     // dimension >= 8
};

ProviderConfig provider_config_from_json(const json& j);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual RawEmbedding embed_text(const std::string& text) = 0;
    virtual std::string id() const = 0;
    virtual int dimension() const = 0;
};

// Deterministic offline fallback: token n-gram feature hashing with signed
// buckets, L2-normalized. Stable across runs and platforms.
class HashingProvider : public EmbeddingProvider {
public:
    explicit HashingProvider(const ProviderConfig& cfg);
    RawEmbedding embed_text(const std::string& text) override;
    std::string id() const override { return id_; }
    int dimension() const override { return dim_; }

private:
    int dim_;
    uint64_t seed_;
    std::string id_;
};

// Remote provider: POST {"input":[texts]} -> {"data":[{"embedding":[...]}]},
// field names configurable.
class HttpProvider : public EmbeddingProvider {
public:
    explicit HttpProvider(const ProviderConfig& cfg);
    RawEmbedding embed_text(const std::string& text) override;
    std::string id() const override { return id_; }
    int dimension() const override { return cfg_.dimension; }

private:
    ProviderConfig cfg_;
    std::string id_;
};

// Append-only (digest -> vector) cache wrapped around another provider.
// Hits are returned bit-identically; the cache never changes values.
class CachedProvider : public EmbeddingProvider {
public:
    CachedProvider(std::unique_ptr<EmbeddingProvider> inner, std::string cache_path);
    RawEmbedding embed_text(const std::string& text) override;
    std::string id() const override { return inner_->id(); }
    int dimension() const override { return inner_->dimension(); }
    size_t hits() const { return hits_; }

private:
    std::unique_ptr<EmbeddingProvider> inner_;
    std::string path_;
    std::map<std::string, Vec> entries_;
    std::mutex mu_;
    size_t hits_ = 0;
};

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg);

// View keys as they appear in trace records and reports.
enum class ViewKey { E, A, K, D };
const char* to_string(ViewKey v);

// Embeds exactly the views the unit carries: {E,A,D} for control traces,
// {E,K,D} for browsing traces.
std::map<ViewKey, RawEmbedding> embed_views(const IntentUnit& unit, EmbeddingProvider& provider);

}  // namespace tracemind
