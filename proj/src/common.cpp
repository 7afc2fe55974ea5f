#include "tracemind/common.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace tracemind {

const char* to_string(ErrorClass c) {
    switch (c) {
        case ErrorClass::io: return "io";
        case ErrorClass::parse: return "parse";
        case ErrorClass::validation: return "validation";
        case ErrorClass::dimension: return "dimension";
        case ErrorClass::provider: return "provider";
        case ErrorClass::unresolved_verb: return "unresolved_verb";
        case ErrorClass::degenerate: return "degenerate";
        case ErrorClass::precondition: return "precondition";
        case ErrorClass::corrupt_file: return "corrupt_file";
        case ErrorClass::not_found: return "not_found";
        case ErrorClass::usage: return "usage";
        case ErrorClass::divergence: return "divergence";
        case ErrorClass::simulator: return "simulator";
    }
    return "unknown";
}

uint64_t stable_hash64(std::string_view s, uint64_t seed) {
    uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string content_digest(std::string_view s) {
    uint64_t a = stable_hash64(s);
    uint64_t b = stable_hash64(s, 0x9ae16a3b2f90404fULL);
    b = mix64(b ^ a);
    char buf[33];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx",
                  static_cast<unsigned long long>(a), static_cast<unsigned long long>(b));
    return std::string(buf, 32);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorClass::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(ErrorClass::io, "read failed for " + path.string());
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorClass::io, "cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) fail(ErrorClass::io, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorClass::io, "rename failed for " + path.string() + ": " + ec.message());
}

json load_document(const std::filesystem::path& path, std::string_view format, int version) {
    std::string text = read_file(path);
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded())
        fail(ErrorClass::corrupt_file, path.string() + ": not valid JSON");
    if (!doc.is_object() || doc.value("format", "") != format)
        fail(ErrorClass::corrupt_file,
             path.string() + ": expected format '" + std::string(format) + "'");
    if (doc.value("version", -1) != version)
        fail(ErrorClass::corrupt_file, path.string() + ": unsupported version");
    return doc;
}

void store_document(const std::filesystem::path& path, std::string_view format, int version,
                    json body) {
    body["format"] = std::string(format);
    body["version"] = version;
    write_file_atomic(path, body.dump(2) + "\n");
}

json vec_to_json(const Vec& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Vec vec_from_json(const json& j) {
    if (!j.is_array()) fail(ErrorClass::corrupt_file, "vector field is not an array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    Eigen::Index i = 0;
    for (const auto& x : j) {
        if (!x.is_number()) fail(ErrorClass::corrupt_file, "vector entry is not a number");
        v[i++] = x.get<double>();
    }
    return v;
}

double cosine(const Vec& a, const Vec& b) {
    double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

bool all_finite(const Vec& v) { return v.allFinite(); }
bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace tracemind
