#include "tracemind/trace.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace tracemind {

namespace {

std::string lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

std::string trim(std::string_view s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

}  // namespace

const char* to_string(TraceKind k) {
    return k == TraceKind::control ? "control" : "browsing";
}

TraceKind trace_kind_from(const std::string& s) {
    if (s == "control") return TraceKind::control;
    if (s == "browsing") return TraceKind::browsing;
    fail(ErrorClass::parse, "unknown trace kind '" + s + "'");
}

void IntentUnit::validate() const {
    if (id.empty()) fail(ErrorClass::validation, "intent unit has empty id");
    if (env.empty()) fail(ErrorClass::validation, "unit " + id + ": empty env view");
    if (act_or_key.empty()) fail(ErrorClass::validation, "unit " + id + ": empty act/key view");
    if (desc.empty()) fail(ErrorClass::validation, "unit " + id + ": empty desc view");
}

const char* to_string(FieldType t) {
    switch (t) {
        case FieldType::url: return "url";
        case FieldType::query: return "query";
        case FieldType::file_path: return "file_path";
        case FieldType::text: return "text";
        case FieldType::component_ref: return "component_ref";
        case FieldType::app_name: return "app_name";
    }
    return "text";
}

FieldType field_type_from(const std::string& s) {
    if (s == "url") return FieldType::url;
    if (s == "query") return FieldType::query;
    if (s == "file_path") return FieldType::file_path;
    if (s == "text") return FieldType::text;
    if (s == "component_ref") return FieldType::component_ref;
    if (s == "app_name") return FieldType::app_name;
    fail(ErrorClass::parse, "unknown field type '" + s + "'");
}

AliasMap AliasMap::from_json(const json& doc) {
    AliasMap phi;
    phi.provisional_ = doc.value("provisional_vocabulary", false);
    for (const auto& v : doc.at("vocabulary")) phi.vocabulary_.push_back(v.get<std::string>());
    for (const auto& [verb, fields] : doc.at("field_schema").items()) {
        std::map<std::string, FieldType> schema;
        for (const auto& f : fields)
            schema[f.at("name").get<std::string>()] = field_type_from(f.at("type").get<std::string>());
        phi.field_schema_[verb] = std::move(schema);
    }
    for (const auto& p : doc.at("patterns")) {
        AliasPattern pat;
        pat.match = lower(p.at("match").get<std::string>());
        pat.verb = p.at("verb").get<std::string>();
        if (p.contains("args"))
            for (const auto& [k, v] : p.at("args").items()) pat.args[k] = v.get<std::string>();
        pat.capture = p.value("capture", "");
        pat.object = p.value("object", "");
        pat.priority = p.value("priority", 0);
        phi.patterns_.push_back(std::move(pat));
    }
    phi.validate();
    return phi;
}

AliasMap AliasMap::load(const std::filesystem::path& path) {
    return from_json(load_document(path, "tracemind_alias_map", 1));
}

void AliasMap::validate() const {
    if (vocabulary_.size() != 17)
        fail(ErrorClass::validation,
             "verb vocabulary must contain exactly 17 verbs, got " +
                 std::to_string(vocabulary_.size()));
    std::set<std::string> vocab(vocabulary_.begin(), vocabulary_.end());
    if (vocab.size() != vocabulary_.size())
        fail(ErrorClass::validation, "verb vocabulary contains duplicates");
    for (const auto& [verb, _] : field_schema_)
        if (!vocab.count(verb))
            fail(ErrorClass::validation, "field schema names unknown verb '" + verb + "'");
    std::set<std::pair<std::string, int>> seen;
    for (const auto& p : patterns_) {
        if (!vocab.count(p.verb))
            fail(ErrorClass::validation, "pattern '" + p.match + "' maps to unknown verb '" + p.verb + "'");
        if (!seen.insert({p.match, p.priority}).second)
            fail(ErrorClass::validation,
                 "ambiguous alias patterns: '" + p.match + "' appears twice at priority " +
                     std::to_string(p.priority));
        auto it = field_schema_.find(p.verb);
        for (const auto& [field, _] : p.args)
            if (it == field_schema_.end() || !it->second.count(field))
                fail(ErrorClass::validation,
                     "pattern '" + p.match + "' sets field '" + field + "' not declared for verb '" +
                         p.verb + "'");
        if (!p.capture.empty() &&
            (it == field_schema_.end() || !it->second.count(p.capture)))
            fail(ErrorClass::validation,
                 "pattern '" + p.match + "' captures into undeclared field '" + p.capture + "'");
    }
}

bool AliasMap::has_verb(const std::string& v) const {
    return std::find(vocabulary_.begin(), vocabulary_.end(), v) != vocabulary_.end();
}

const std::map<std::string, FieldType>& AliasMap::fields_of(const std::string& verb) const {
    static const std::map<std::string, FieldType> empty;
    auto it = field_schema_.find(verb);
    return it == field_schema_.end() ? empty : it->second;
}

std::optional<FieldType> AliasMap::field_type(const std::string& verb,
                                              const std::string& field) const {
    const auto& fields = fields_of(verb);
    auto it = fields.find(field);
    if (it == fields.end()) return std::nullopt;
    return it->second;
}

const AliasPattern* AliasMap::match(const std::string& raw_label, std::string* remainder) const {
    std::string raw = lower(trim(raw_label));
    const AliasPattern* best = nullptr;
    for (const auto& p : patterns_) {
        bool hit = false;
        if (p.capture.empty()) {
            hit = (raw == p.match);
        } else {
            hit = raw.size() >= p.match.size() && raw.compare(0, p.match.size(), p.match) == 0;
        }
        if (!hit) continue;
        if (!best || p.match.size() > best->match.size() ||
            (p.match.size() == best->match.size() && p.priority > best->priority))
            best = &p;
    }
    if (best && remainder) {
        *remainder = best->capture.empty() ? "" : trim(raw_label.substr(best->match.size()));
    }
    return best;
}

ActionStep canonicalize_action(const ActionStep& step, const AliasMap& phi) {
    // Already canonical: known verb and every arg key in the verb's schema.
    if (!step.verb.empty() && phi.has_verb(step.verb)) {
        const auto& fields = phi.fields_of(step.verb);
        bool ok = true;
        for (const auto& [k, _] : step.args)
            if (!fields.count(k)) { ok = false; break; }
        if (ok) return step;
    }
    std::string remainder;
    const AliasPattern* pat = phi.match(step.raw_label, &remainder);
    if (!pat)
        fail(ErrorClass::unresolved_verb,
             "no alias pattern matches raw label '" + step.raw_label + "'");
    ActionStep out = step;
    out.verb = pat->verb;
    out.args = pat->args;
    if (!pat->capture.empty() && !remainder.empty()) out.args[pat->capture] = remainder;
    if (!pat->object.empty()) out.object = pat->object;
    if (out.object.empty()) {
        auto it = out.args.find("target");
        if (it != out.args.end()) out.object = it->second;
    }
    return out;
}

VerbSignature signature_of(const std::vector<ActionStep>& actions) {
    VerbSignature sig;
    sig.reserve(actions.size());
    for (size_t i = 0; i < actions.size(); ++i) {
        if (actions[i].verb.empty())
            fail(ErrorClass::unresolved_verb,
                 "step " + std::to_string(i) + " ('" + actions[i].raw_label + "') is unresolved");
        sig.push_back(actions[i].verb);
    }
    return sig;
}

json unit_to_json(const IntentUnit& unit) {
    json actions = json::array();
    for (const auto& a : unit.actions) {
        json step;
        step["raw"] = a.raw_label;
        if (!a.verb.empty()) step["verb"] = a.verb;
        if (!a.args.empty()) step["args"] = a.args;
        if (!a.object.empty()) step["object"] = a.object;
        if (a.recovery) step["recovery"] = true;
        actions.push_back(std::move(step));
    }
    json j;
    j["id"] = unit.id;
    j["kind"] = to_string(unit.kind);
    j["env"] = unit.env;
    j[unit.kind == TraceKind::control ? "act" : "key"] = unit.act_or_key;
    j["desc"] = unit.desc;
    j["actions"] = std::move(actions);
    return j;
}

IntentUnit unit_from_json(const json& j) {
    if (!j.is_object()) fail(ErrorClass::parse, "record is not an object");
    IntentUnit u;
    u.id = j.at("id").get<std::string>();
    u.kind = trace_kind_from(j.at("kind").get<std::string>());
    u.env = j.at("env").get<std::string>();
    const char* mid_key = u.kind == TraceKind::control ? "act" : "key";
    if (!j.contains(mid_key))
        fail(ErrorClass::parse,
             std::string("record is missing '") + mid_key + "' for kind " + to_string(u.kind));
    u.act_or_key = j.at(mid_key).get<std::string>();
    u.desc = j.at("desc").get<std::string>();
    for (const auto& s : j.value("actions", json::array())) {
        ActionStep step;
        step.raw_label = s.at("raw").get<std::string>();
        step.verb = s.value("verb", "");
        if (s.contains("args"))
            for (const auto& [k, v] : s.at("args").items()) step.args[k] = v.get<std::string>();
        step.object = s.value("object", "");
        step.recovery = s.value("recovery", false);
        u.actions.push_back(std::move(step));
    }
    u.validate();
    return u;
}

ParseResult parse_trace_file(const std::string& bytes) {
    ParseResult result;
    std::istringstream in(bytes);
    std::string line;
    int lineno = 0;
    int nonblank = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        ++nonblank;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) {
            result.diagnostics.push_back({lineno, "line " + std::to_string(lineno) + ": not valid JSON"});
            continue;
        }
        try {
            result.units.push_back(unit_from_json(rec));
        } catch (const std::exception& e) {
            result.diagnostics.push_back({lineno, "line " + std::to_string(lineno) + ": " + e.what()});
        }
    }
    if (nonblank > 0 && result.units.empty())
        fail(ErrorClass::parse, "no valid trace records (" +
                                    std::to_string(result.diagnostics.size()) + " malformed lines)");
    return result;
}

ParseResult parse_trace_path(const std::filesystem::path& path) {
    return parse_trace_file(read_file(path));
}

std::string serialize_unit(const IntentUnit& unit) {
    return unit_to_json(unit).dump();
}

std::string serialize_units(const std::vector<IntentUnit>& units) {
    std::string out;
    for (const auto& u : units) {
        out += serialize_unit(u);
        out += '\n';
    }
    return out;
}

}  // namespace tracemind
