#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace tracemind {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using json = nlohmann::json;

// Machine-parseable error classes surfaced by the CLI as "error:<class>: msg".
enum class ErrorClass {
    io,
    parse,
    validation,
    dimension,
    provider,
    unresolved_verb,
    degenerate,
    precondition,
    corrupt_file,
    not_found,
    usage,
    divergence,
    simulator,
};

const char* to_string(ErrorClass c);

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& msg)
        : std::runtime_error(msg), cls_(cls) {}
    ErrorClass cls() const { return cls_; }

private:
    ErrorClass cls_;
};

[[noreturn]] inline void fail(ErrorClass cls, const std::string& msg) {
    throw Error(cls, msg);
}

// FNV-1a, seedable. Used for feature hashing and content digests; must be
// stable across platforms and process restarts (std::hash is not).
uint64_t stable_hash64(std::string_view s, uint64_t seed = 0xcbf29ce484222325ULL);

// Bit mixer (splitmix64 finalizer) for deriving secondary hashes.
uint64_t mix64(uint64_t x);

// 128-bit content digest rendered as 32 hex chars.
std::string content_digest(std::string_view s);

// Deterministic RNG handle. Seeds derived by hashing a label keep streams
// independent without coupling to call order.
inline std::mt19937_64 seeded_rng(uint64_t seed, std::string_view label = {}) {
    if (!label.empty()) seed = mix64(seed ^ stable_hash64(label));
    return std::mt19937_64(seed);
}

// --- JSON documents on disk -------------------------------------------------

// Reads a whole file; Error{io} on failure.
std::string read_file(const std::filesystem::path& path);

// Writes atomically (tmp file + rename) so readers never see partial state.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Parses a JSON document and checks its {"format","version"} header.
// Any mismatch or parse failure is Error{corrupt_file}.
json load_document(const std::filesystem::path& path, std::string_view format, int version);

// Serializes with the standard header and writes atomically.
void store_document(const std::filesystem::path& path, std::string_view format, int version,
                    json body);

// --- small vector helpers ----------------------------------------------------

json vec_to_json(const Vec& v);
Vec vec_from_json(const json& j);

double cosine(const Vec& a, const Vec& b);  // 0 when either norm is 0

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

}  // namespace tracemind
