#include "tracemind/embed.hpp"

#include <cctype>
#include <fstream>

#include <httplib.h>

namespace tracemind {

void ProviderConfig::validate() const {
    if (dimension < 8)
        fail(ErrorClass::validation, "provider dimension must be >= 8, got " + std::to_string(dimension));
    if (kind == ProviderKind::http && endpoint.empty())
        fail(ErrorClass::validation, "http provider requires an endpoint");
}

ProviderConfig provider_config_from_json(const json& j) {
    ProviderConfig cfg;
    std::string kind = j.value("kind", "hashing");
    if (kind == "hashing") cfg.kind = ProviderKind::hashing;
    else if (kind == "http") cfg.kind = ProviderKind::http;
    else fail(ErrorClass::parse, "unknown provider kind '" + kind + "'");
    cfg.dimension = j.value("dimension", 3072);
    cfg.hash_seed = j.value("hash_seed", cfg.hash_seed);
    cfg.endpoint = j.value("endpoint", "");
    cfg.auth_token = j.value("auth_token", "");
    cfg.input_field = j.value("input_field", "input");
    cfg.data_field = j.value("data_field", "data");
    cfg.embedding_field = j.value("embedding_field", "embedding");
    cfg.cache_path = j.value("cache_path", "");
    cfg.validate();
    return cfg;
}

// --- hashing provider --------------------------------------------------------

namespace {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

}  // namespace

HashingProvider::HashingProvider(const ProviderConfig& cfg)
    : dim_(cfg.dimension), seed_(cfg.hash_seed) {
    cfg.validate();
    id_ = "hashing:" + std::to_string(dim_) + ":" + std::to_string(seed_);
}

RawEmbedding HashingProvider::embed_text(const std::string& text) {
    if (text.empty()) fail(ErrorClass::precondition, "embed_text: empty text");
    Vec v = Vec::Zero(dim_);
    auto add_feature = [&](std::string_view feat) {
        uint64_t h = stable_hash64(feat, seed_);
        auto bucket = static_cast<Eigen::Index>(h % static_cast<uint64_t>(dim_));
        double sign = (mix64(h) & 1) ? 1.0 : -1.0;
        v[bucket] += sign;
    };
    auto tokens = tokenize(text);
    for (const auto& t : tokens) add_feature(t);
    for (size_t i = 0; i + 1 < tokens.size(); ++i) add_feature(tokens[i] + " " + tokens[i + 1]);
    double n = v.norm();
    if (n > 0) v /= n;
    return {std::move(v), id_};
}

// --- http provider -----------------------------------------------------------

HttpProvider::HttpProvider(const ProviderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    id_ = "http:" + cfg_.endpoint;
}

RawEmbedding HttpProvider::embed_text(const std::string& text) {
    if (text.empty()) fail(ErrorClass::precondition, "embed_text: empty text");
    auto split = cfg_.endpoint.find('/', cfg_.endpoint.find("//") == std::string::npos
                                             ? 0
                                             : cfg_.endpoint.find("//") + 2);
    std::string host = split == std::string::npos ? cfg_.endpoint : cfg_.endpoint.substr(0, split);
    std::string path = split == std::string::npos ? "/" : cfg_.endpoint.substr(split);
    httplib::Client client(host);
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
    httplib::Headers headers;
    if (!cfg_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.auth_token);
    json body;
    body[cfg_.input_field] = json::array({text});
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res)
        fail(ErrorClass::provider, "embedding endpoint unreachable: " + cfg_.endpoint);
    if (res->status != 200)
        fail(ErrorClass::provider,
             "embedding endpoint returned status " + std::to_string(res->status));
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains(cfg_.data_field) || doc[cfg_.data_field].empty())
        fail(ErrorClass::provider, "malformed embedding response");
    Vec v = vec_from_json(doc[cfg_.data_field][0].at(cfg_.embedding_field));
    if (v.size() != cfg_.dimension)
        fail(ErrorClass::dimension, "remote embedding has dimension " + std::to_string(v.size()) +
                                        ", expected " + std::to_string(cfg_.dimension));
    return {std::move(v), id_};
}

// --- cache -------------------------------------------------------------------

CachedProvider::CachedProvider(std::unique_ptr<EmbeddingProvider> inner, std::string cache_path)
    : inner_(std::move(inner)), path_(std::move(cache_path)) {
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) fail(ErrorClass::corrupt_file, path_ + ": malformed cache line");
        entries_[rec.at("digest").get<std::string>()] = vec_from_json(rec.at("v"));
    }
}

RawEmbedding CachedProvider::embed_text(const std::string& text) {
    std::string digest = content_digest(inner_->id() + "\x1f" + text);
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = entries_.find(digest);
        if (it != entries_.end()) {
            ++hits_;
            return {it->second, inner_->id()};
        }
    }
    RawEmbedding e = inner_->embed_text(text);
    std::lock_guard<std::mutex> lock(mu_);
    auto [it, inserted] = entries_.emplace(digest, e.vector);
    if (inserted) {
        json rec;
        rec["digest"] = digest;
        rec["v"] = vec_to_json(e.vector);
        std::ofstream out(path_, std::ios::app);
        if (!out) fail(ErrorClass::io, "cannot append to cache " + path_);
        out << rec.dump() << "\n";
    }
    return e;
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg) {
    cfg.validate();
    std::unique_ptr<EmbeddingProvider> p;
    if (cfg.kind == ProviderKind::hashing)
        p = std::make_unique<HashingProvider>(cfg);
    else
        p = std::make_unique<HttpProvider>(cfg);
    if (!cfg.cache_path.empty()) p = std::make_unique<CachedProvider>(std::move(p), cfg.cache_path);
    return p;
}

const char* to_string(ViewKey v) {
    switch (v) {
        case ViewKey::E: return "E";
        case ViewKey::A: return "A";
        case ViewKey::K: return "K";
        case ViewKey::D: return "D";
    }
    return "?";
}

std::map<ViewKey, RawEmbedding> embed_views(const IntentUnit& unit, EmbeddingProvider& provider) {
    unit.validate();
    std::map<ViewKey, RawEmbedding> out;
    out[ViewKey::E] = provider.embed_text(unit.env);
    out[unit.kind == TraceKind::control ? ViewKey::A : ViewKey::K] =
        provider.embed_text(unit.act_or_key);
    out[ViewKey::D] = provider.embed_text(unit.desc);
    return out;
}

}  // namespace tracemind
