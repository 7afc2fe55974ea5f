#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tracemind/common.hpp"

namespace tracemind {

enum class TraceKind { control, browsing };

const char* to_string(TraceKind k);
TraceKind trace_kind_from(const std::string& s);

// One low-level action as logged, plus its canonical form once resolved.
// An empty verb means "not yet canonicalized".
struct ActionStep {
    std::string raw_label;
    std::string verb;
    std::map<std::string, std::string> args;
    std::string object;
    bool recovery = false;  // marked as a retry/recovery step in the source log

    bool operator==(const ActionStep&) const = default;
};

// One labeled interaction unit: environment / action-or-keyword / description
// views plus its low-level action sequence.
struct IntentUnit {
    std::string id;
    std::string env;
    std::string act_or_key;
    std::string desc;
    TraceKind kind = TraceKind::control;
    std::vector<ActionStep> actions;

    void validate() const;  // Error{validation} when a view text is empty
};

using VerbSignature = std::vector<std::string>;

// Argument field types a verb's schema may declare.
// Values of the first four are eligible for placeholder substitution.
enum class FieldType { url, query, file_path, text, component_ref, app_name };

const char* to_string(FieldType t);
FieldType field_type_from(const std::string& s);

// Surface-label pattern: matches a raw label either exactly or as a prefix
// whose remainder is captured into one argument field.
struct AliasPattern {
    std::string match;                           // literal, compared case-insensitively
    std::string verb;
    std::map<std::string, std::string> args;     // fixed argument values
    std::string capture;                         // field name for the remainder ("" = exact match only)
    std::string object;                          // optional target descriptor
    int priority = 0;
};

// The alias map: fixed verb vocabulary, per-verb field schema, and the
// surface-pattern table that collapses raw labels onto it.
class AliasMap {
public:
    static AliasMap from_json(const json& doc);
    static AliasMap load(const std::filesystem::path& path);

    const std::vector<std::string>& vocabulary() const { return vocabulary_; }
    bool provisional() const { return provisional_; }
    bool has_verb(const std::string& v) const;
    const std::map<std::string, FieldType>& fields_of(const std::string& verb) const;
    std::optional<FieldType> field_type(const std::string& verb, const std::string& field) const;
    const std::vector<AliasPattern>& patterns() const { return patterns_; }

    // Longest case-insensitive match over the pattern table; priority breaks
    // length ties. Returns nullptr when nothing matches.
    const AliasPattern* match(const std::string& raw_label, std::string* remainder) const;

private:
    void validate() const;

    std::vector<std::string> vocabulary_;
    std::map<std::string, std::map<std::string, FieldType>> field_schema_;
    std::vector<AliasPattern> patterns_;
    bool provisional_ = false;
};

// Rewrites a step into canonical verb/args form via the alias map.
// Idempotent; Error{unresolved_verb} when no pattern matches.
ActionStep canonicalize_action(const ActionStep& step, const AliasMap& phi);

// Ordered list of canonical verbs; Error{unresolved_verb} on any blank verb.
VerbSignature signature_of(const std::vector<ActionStep>& actions);

struct ParseDiagnostic {
    int line = 0;
    std::string message;
};

struct ParseResult {
    std::vector<IntentUnit> units;
    std::vector<ParseDiagnostic> diagnostics;
};

// Line-delimited trace records. Malformed lines become diagnostics with their
// 1-based line number; a file with zero valid lines is Error{parse}.
ParseResult parse_trace_file(const std::string& bytes);
ParseResult parse_trace_path(const std::filesystem::path& path);

// Canonical single-line record; parse(serialize(u)) == u and
// serialize(parse(line)) == line for canonical lines.
std::string serialize_unit(const IntentUnit& unit);
std::string serialize_units(const std::vector<IntentUnit>& units);

json unit_to_json(const IntentUnit& unit);
IntentUnit unit_from_json(const json& j);

}  // namespace tracemind
