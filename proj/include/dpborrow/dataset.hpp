#pragma once

#include "dpborrow/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dpborrow {

enum class OutcomeKind { BinomialSummary, Ipd };

enum class RoleKind { Historical, CurrentControl, CurrentTreatment };

struct StudyRole {
    RoleKind kind = RoleKind::Historical;
    int historical_index = 0; // 1..K for historical studies, 0 otherwise
};

struct BinomialSummary {
    std::int64_t n = 0;
    std::int64_t responses = 0;
};

struct IpdRecord {
    std::vector<double> covariates; // first entry is the intercept (1.0)
    int treatment_indicator = 0;
    double outcome = 0.0;
};

using StudyPayload = std::variant<BinomialSummary, std::vector<IpdRecord>>;

struct Study {
    std::string id;
    StudyRole role;
    StudyPayload payload;

    bool is_control() const { return role.kind != RoleKind::CurrentTreatment; }
    const BinomialSummary& summary() const { return std::get<BinomialSummary>(payload); }
    const std::vector<IpdRecord>& records() const { return std::get<std::vector<IpdRecord>>(payload); }
};

/// A validated collection of study records. Construct through the parsers or
/// make_dataset(); studies are ordered historical (by index), current control,
/// then current treatment.
struct Dataset {
    OutcomeKind outcome_kind = OutcomeKind::BinomialSummary;
    std::vector<Study> studies;
    std::vector<std::string> covariate_names; // IPD only, excluding the intercept

    std::size_t num_historical() const {
        return static_cast<std::size_t>(std::count_if(studies.begin(), studies.end(), [](const Study& s) {
            return s.role.kind == RoleKind::Historical;
        }));
    }

    const Study& current_control() const {
        for (const auto& s : studies)
            if (s.role.kind == RoleKind::CurrentControl) return s;
        throw ValidationError("missing current_control");
    }

    const Study* current_treatment() const {
        for (const auto& s : studies)
            if (s.role.kind == RoleKind::CurrentTreatment) return &s;
        return nullptr;
    }

    /// Control studies in sampler order: H_1..H_K followed by CC.
    std::vector<const Study*> controls() const {
        std::vector<const Study*> out;
        for (const auto& s : studies)
            if (s.role.kind == RoleKind::Historical) out.push_back(&s);
        out.push_back(&current_control());
        return out;
    }

    /// Covariate dimension including the intercept (IPD only).
    std::size_t dimension() const { return covariate_names.size() + 1; }
};

// ---------------------------------------------------------------------------
// validation

namespace detail {

inline const char* role_name(RoleKind k) {
    switch (k) {
    case RoleKind::Historical: return "historical";
    case RoleKind::CurrentControl: return "current_control";
    case RoleKind::CurrentTreatment: return "current_treatment";
    }
    return "?";
}

inline void sort_studies(std::vector<Study>& studies) {
    std::stable_sort(studies.begin(), studies.end(), [](const Study& a, const Study& b) {
        auto rank = [](const Study& s) { return static_cast<int>(s.role.kind); };
        if (rank(a) != rank(b)) return rank(a) < rank(b);
        return a.role.historical_index < b.role.historical_index;
    });
}

} // namespace detail

inline void validate(const Dataset& ds) {
    std::set<std::string> ids;
    int n_cc = 0, n_ct = 0;
    std::optional<std::size_t> dim;
    for (const auto& s : ds.studies) {
        if (s.id.empty()) throw ValidationError("study with empty id");
        if (!ids.insert(s.id).second) throw ValidationError("duplicate study id '" + s.id + "'");
        if (s.role.kind == RoleKind::CurrentControl) ++n_cc;
        if (s.role.kind == RoleKind::CurrentTreatment) ++n_ct;
        if (ds.outcome_kind == OutcomeKind::BinomialSummary) {
            if (!std::holds_alternative<BinomialSummary>(s.payload))
                throw ValidationError("study '" + s.id + "' does not carry binomial summary data");
            const auto& b = s.summary();
            if (b.n <= 0) throw ValidationError("study '" + s.id + "': n must be positive");
            if (b.responses < 0 || b.responses > b.n)
                throw ValidationError("study '" + s.id + "': responses must lie in [0, n]");
        } else {
            if (!std::holds_alternative<std::vector<IpdRecord>>(s.payload))
                throw ValidationError("study '" + s.id + "' does not carry participant records");
            const auto& recs = s.records();
            if (recs.empty()) throw ValidationError("study '" + s.id + "' has no participant records");
            for (const auto& r : recs) {
                if (!dim) dim = r.covariates.size();
                if (r.covariates.size() != *dim || r.covariates.empty())
                    throw ValidationError("study '" + s.id + "': inconsistent covariate dimension");
                if (r.covariates.front() != 1.0)
                    throw ValidationError("study '" + s.id + "': first covariate must be the intercept");
                const bool control = s.role.kind != RoleKind::CurrentTreatment;
                if (control && r.treatment_indicator != 0)
                    throw ValidationError("study '" + s.id + "': treatment row in a control study");
                if (!control && r.treatment_indicator != 1)
                    throw ValidationError("study '" + s.id + "': control row in the treatment arm");
                if (!std::isfinite(r.outcome) ||
                    !std::all_of(r.covariates.begin(), r.covariates.end(), [](double v) { return std::isfinite(v); }))
                    throw ValidationError("study '" + s.id + "': non-finite value");
            }
        }
    }
    if (n_cc == 0) throw ValidationError("missing current_control");
    if (n_cc > 1) throw ValidationError("more than one current_control");
    if (n_ct > 1) throw ValidationError("more than one current_treatment");
    if (ds.outcome_kind == OutcomeKind::Ipd && dim && *dim != ds.covariate_names.size() + 1)
        throw ValidationError("covariate names do not match record dimension");
}

/// Sorts studies into canonical order, assigns historical indices 1..K, validates.
inline Dataset make_dataset(OutcomeKind kind, std::vector<Study> studies, std::vector<std::string> covariate_names = {}) {
    int k = 0;
    for (auto& s : studies)
        if (s.role.kind == RoleKind::Historical) s.role.historical_index = ++k;
    Dataset ds{kind, std::move(studies), std::move(covariate_names)};
    detail::sort_studies(ds.studies);
    validate(ds);
    return ds;
}

/// Historical studies and the current control only.
inline Dataset control_subset(const Dataset& ds) {
    Dataset out = ds;
    std::erase_if(out.studies, [](const Study& s) { return s.role.kind == RoleKind::CurrentTreatment; });
    return out;
}

// ---------------------------------------------------------------------------
// binomial summary JSON

inline Dataset parse_summary_dataset(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw SchemaError("top level must be an object");
    if (!doc.contains("outcome")) throw SchemaError("missing field 'outcome'");
    if (doc["outcome"] != "binomial") throw SchemaError("outcome must be \"binomial\"");
    if (!doc.contains("studies") || !doc["studies"].is_array()) throw SchemaError("missing array 'studies'");

    std::vector<Study> studies;
    for (const auto& item : doc["studies"]) {
        if (!item.is_object()) throw SchemaError("study entries must be objects");
        for (const char* field : {"id", "role", "n", "responses"})
            if (!item.contains(field)) throw SchemaError(std::string("study missing field '") + field + "'");
        if (!item["id"].is_string() || !item["role"].is_string()) throw SchemaError("id and role must be strings");
        if (!item["n"].is_number_integer() || !item["responses"].is_number_integer())
            throw SchemaError("n and responses must be integers");
        Study s;
        s.id = item["id"].get<std::string>();
        const auto role = item["role"].get<std::string>();
        if (role == "historical") s.role.kind = RoleKind::Historical;
        else if (role == "current_control") s.role.kind = RoleKind::CurrentControl;
        else if (role == "current_treatment") s.role.kind = RoleKind::CurrentTreatment;
        else throw SchemaError("unknown role '" + role + "'");
        s.payload = BinomialSummary{item["n"].get<std::int64_t>(), item["responses"].get<std::int64_t>()};
        studies.push_back(std::move(s));
    }
    return make_dataset(OutcomeKind::BinomialSummary, std::move(studies));
}

inline std::string serialize_summary_dataset(const Dataset& ds) {
    if (ds.outcome_kind != OutcomeKind::BinomialSummary) throw SchemaError("not a binomial summary dataset");
    nlohmann::ordered_json doc;
    doc["outcome"] = "binomial";
    doc["studies"] = nlohmann::ordered_json::array();
    for (const auto& s : ds.studies) {
        nlohmann::ordered_json item;
        item["id"] = s.id;
        item["role"] = detail::role_name(s.role.kind);
        item["n"] = s.summary().n;
        item["responses"] = s.summary().responses;
        doc["studies"].push_back(item);
    }
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// IPD CSV

/// Column mapping for participant-level CSV input. When current_study is empty
/// the current trial is the unique study containing treatment rows.
struct IpdColumnMap {
    std::string study = "study";
    std::string arm = "arm";
    std::string outcome = "y";
    std::vector<std::string> covariates;
    std::string current_study;
};

inline IpdColumnMap parse_column_map(const nlohmann::json& j) {
    IpdColumnMap m;
    if (j.contains("study")) m.study = j["study"].get<std::string>();
    if (j.contains("arm")) m.arm = j["arm"].get<std::string>();
    if (j.contains("outcome")) m.outcome = j["outcome"].get<std::string>();
    if (j.contains("covariates")) m.covariates = j["covariates"].get<std::vector<std::string>>();
    if (j.contains("current_study")) m.current_study = j["current_study"].get<std::string>();
    return m;
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    out.push_back(std::move(cell));
    return out;
}

inline double parse_number(const std::string& cell, std::size_t line_no) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && last[-1] == ' ') --last;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || first == last)
        throw ValidationError("line " + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
    return v;
}

inline std::string treatment_id(const std::string& study) { return study + ":treatment"; }

} // namespace detail

inline Dataset parse_ipd_dataset(std::string_view csv, const IpdColumnMap& map) {
    std::istringstream in{std::string(csv)};
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line != "\r") {
            header = detail::split_csv_line(line);
            break;
        }
    }
    if (header.empty()) throw SchemaError("CSV has no header row");
    auto column = [&header](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_study = column(map.study);
    const std::size_t c_arm = column(map.arm);
    const std::size_t c_outcome = column(map.outcome);
    std::vector<std::size_t> c_cov;
    for (const auto& name : map.covariates) c_cov.push_back(column(name));

    // study id -> (control records, treatment records), in first-seen order
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<IpdRecord>, std::vector<IpdRecord>>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw SchemaError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " cells");
        IpdRecord r;
        r.covariates.reserve(c_cov.size() + 1);
        r.covariates.push_back(1.0);
        for (auto c : c_cov) r.covariates.push_back(detail::parse_number(cells[c], line_no));
        r.outcome = detail::parse_number(cells[c_outcome], line_no);
        const auto& arm = cells[c_arm];
        if (arm == "control") r.treatment_indicator = 0;
        else if (arm == "treatment") r.treatment_indicator = 1;
        else throw ValidationError("line " + std::to_string(line_no) + ": arm must be 'control' or 'treatment'");
        const auto& sid = cells[c_study];
        if (sid.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty study id");
        if (!rows.contains(sid)) order.push_back(sid);
        auto& slot = rows[sid];
        (r.treatment_indicator ? slot.second : slot.first).push_back(std::move(r));
    }

    std::string current = map.current_study;
    if (current.empty()) {
        for (const auto& sid : order) {
            if (rows[sid].second.empty()) continue;
            if (!current.empty())
                throw ValidationError("treatment rows in more than one study ('" + current + "', '" + sid + "')");
            current = sid;
        }
        if (current.empty()) throw ValidationError("missing current_control: no study has treatment rows");
    } else if (!rows.contains(current)) {
        throw ValidationError("missing current_control: study '" + current + "' not found");
    }

    std::vector<Study> studies;
    for (const auto& sid : order) {
        auto& [ctl, trt] = rows[sid];
        if (sid != current) {
            if (!trt.empty()) throw ValidationError("treatment row in historical study '" + sid + "'");
            studies.push_back(Study{sid, {RoleKind::Historical, 0}, std::move(ctl)});
        } else {
            if (ctl.empty()) throw ValidationError("missing current_control: current study has no control rows");
            studies.push_back(Study{sid, {RoleKind::CurrentControl, 0}, std::move(ctl)});
            if (!trt.empty()) studies.push_back(Study{detail::treatment_id(sid), {RoleKind::CurrentTreatment, 0}, std::move(trt)});
        }
    }
    return make_dataset(OutcomeKind::Ipd, std::move(studies), map.covariates);
}

/// Writes the dataset in the layout parse_ipd_dataset reads with the default
/// column names (study, arm, y, covariate names).
inline std::string serialize_ipd_dataset(const Dataset& ds) {
    if (ds.outcome_kind != OutcomeKind::Ipd) throw SchemaError("not an IPD dataset");
    std::ostringstream out;
    out.precision(17);
    out << "study,arm,y";
    for (const auto& c : ds.covariate_names) out << ',' << c;
    out << '\n';
    const std::string cc_id = ds.current_control().id;
    for (const auto& s : ds.studies) {
        const std::string& sid = s.role.kind == RoleKind::CurrentTreatment ? cc_id : s.id;
        for (const auto& r : s.records()) {
            out << sid << ',' << (r.treatment_indicator ? "treatment" : "control") << ',' << r.outcome;
            for (std::size_t i = 1; i < r.covariates.size(); ++i) out << ',' << r.covariates[i];
            out << '\n';
        }
    }
    return out.str();
}

} // namespace dpborrow
