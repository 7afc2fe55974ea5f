#include <doctest.h>

#include <filesystem>
#include <set>
#include <thread>

#include "tracemind/embed.hpp"

#include <httplib.h>

using namespace tracemind;

namespace {

ProviderConfig hashing_cfg(int dim = 128) {
    ProviderConfig cfg;
    cfg.dimension = dim;
    return cfg;
}

std::filesystem::path temp_file(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tracemind_test_" + name);
    std::filesystem::remove(p);
    return p;
}

}  // namespace

TEST_SUITE("embed") {

TEST_CASE("hashing provider is deterministic and unit-norm") {
    HashingProvider p(hashing_cfg());
    auto a = p.embed_text("open the browser and search");
    auto b = p.embed_text("open the browser and search");
    CHECK(a.vector == b.vector);
    CHECK(a.vector.norm() == doctest::Approx(1.0).epsilon(1e-12));

    HashingProvider p2(hashing_cfg());
    CHECK(p2.embed_text("open the browser and search").vector == a.vector);
}

TEST_CASE("distinct strings embed to distinct directions") {
    HashingProvider p(hashing_cfg(512));
    const char* fixtures[] = {"open notepad", "search cats", "save the file",
                              "compose an email", "scroll the page"};
    for (const char* a : fixtures)
        for (const char* b : fixtures) {
            double c = cosine(p.embed_text(a).vector, p.embed_text(b).vector);
            if (std::string(a) == b)
                CHECK(c == doctest::Approx(1.0));
            else
                CHECK(c < 1.0 - 1e-6);
        }
}

TEST_CASE("empty text is a precondition error") {
    HashingProvider p(hashing_cfg());
    CHECK_THROWS_AS(p.embed_text(""), Error);
}

TEST_CASE("collision rate on a 1k-string fixture stays below 1% at full width") {
    ProviderConfig cfg;
    cfg.dimension = 3072;
    HashingProvider p(cfg);
    std::set<std::string> digests;
    int n = 1000;
    for (int i = 0; i < n; ++i) {
        std::string text = "fixture string number " + std::to_string(i) + " about topic " +
                           std::to_string(i * 37 % 101);
        Vec v = p.embed_text(text).vector;
        digests.insert(content_digest(
            std::string(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double))));
    }
    int collisions = n - static_cast<int>(digests.size());
    CHECK(collisions < n / 100);
}

TEST_CASE("dimension below 8 is rejected") {
    ProviderConfig cfg;
    cfg.dimension = 4;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("cache returns bit-identical vectors and survives reopen") {
    auto path = temp_file("cache.jsonl");
    ProviderConfig cfg = hashing_cfg(64);
    cfg.cache_path = path.string();
    Vec first;
    {
        auto p = make_provider(cfg);
        first = p->embed_text("cached text").vector;
        CHECK(p->embed_text("cached text").vector == first);
    }
    {
        auto p = make_provider(cfg);
        auto* cached = dynamic_cast<CachedProvider*>(p.get());
        REQUIRE(cached != nullptr);
        CHECK(cached->embed_text("cached text").vector == first);
        CHECK(cached->hits() == 1);
    }
    std::filesystem::remove(path);
}

TEST_CASE("embed_views yields E/A/D for control and E/K/D for browsing") {
    HashingProvider p(hashing_cfg());
    IntentUnit u;
    u.id = "u";
    u.env = "desktop";
    u.act_or_key = "search";
    u.desc = "search cats";
    u.kind = TraceKind::control;
    auto views = embed_views(u, p);
    CHECK(views.size() == 3);
    CHECK(views.count(ViewKey::E) == 1);
    CHECK(views.count(ViewKey::A) == 1);
    CHECK(views.count(ViewKey::D) == 1);

    u.kind = TraceKind::browsing;
    views = embed_views(u, p);
    CHECK(views.count(ViewKey::K) == 1);
    CHECK(views.count(ViewKey::A) == 0);

    u.desc = "";
    CHECK_THROWS_AS(embed_views(u, p), Error);
}

TEST_CASE("http provider round-trips through a stub server and then the cache") {
    httplib::Server server;
    Vec fixed = Vec::LinSpaced(16, 0.0, 1.5);
    int requests = 0;
    server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        json body = json::parse(req.body);
        REQUIRE(body.contains("input"));
        json out;
        out["data"] = {{{"embedding", vec_to_json(fixed)}}};
        res.set_content(out.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto cache_path = temp_file("http_cache.jsonl");
    ProviderConfig cfg;
    cfg.kind = ProviderKind::http;
    cfg.dimension = 16;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/embeddings";
    cfg.cache_path = cache_path.string();
    auto p = make_provider(cfg);
    CHECK(p->embed_text("anything").vector == fixed);
    CHECK(p->embed_text("anything").vector == fixed);
    CHECK(requests == 1);  // second call served from the cache

    server.stop();
    t.join();
    std::filesystem::remove(cache_path);
}

TEST_CASE("http dimension mismatch is a typed error") {
    httplib::Server server;
    server.Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
        json out;
        out["data"] = {{{"embedding", {1.0, 2.0}}}};
        res.set_content(out.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ProviderConfig cfg;
    cfg.kind = ProviderKind::http;
    cfg.dimension = 16;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/embed";
    HttpProvider p(cfg);
    try {
        p.embed_text("x");
        FAIL("expected dimension error");
    } catch (const Error& e) {
        CHECK(e.cls() == ErrorClass::dimension);
    }
    server.stop();
    t.join();
}

}  // TEST_SUITE
