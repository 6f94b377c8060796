#pragma once

#include "radalign/common.hpp"
#include "radalign/io.hpp"
#include "radalign/llm_client.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace radalign {

struct DiseaseLabel {
    int id = 0;            // dense index in [0, N)
    std::string code;      // short code, e.g. "CM"
    std::string name;      // full name, e.g. "Cardiomegaly"

    bool operator==(const DiseaseLabel&) const = default;
};

struct ConceptDescription {
    int criterion_id = 0;
    int local_id = 0;            // position within the criterion, [0, n_i)
    std::string text;
    std::set<int> diseases;      // disease ids this description maps to; empty = "normal"

    bool operator==(const ConceptDescription&) const = default;
};

struct Criterion {
    int id = 0;                  // [0, K)
    std::string name;            // e.g. "Heart Size"
    std::vector<ConceptDescription> descriptions;  // length n_i >= 1

    bool operator==(const Criterion&) const = default;
};

// The full knowledge base: K criteria over N disease labels plus the
// description -> disease mapping carried on each description.
struct CriterionSet {
    std::vector<Criterion> criteria;
    std::vector<DiseaseLabel> labels;
    std::string version;

    bool operator==(const CriterionSet&) const = default;

    int num_criteria() const { return static_cast<int>(criteria.size()); }
    int num_labels() const { return static_cast<int>(labels.size()); }

    int total_descriptions() const {
        int n = 0;
        for (const auto& c : criteria) n += static_cast<int>(c.descriptions.size());
        return n;
    }

    std::vector<int> block_sizes() const {
        std::vector<int> sizes;
        sizes.reserve(criteria.size());
        for (const auto& c : criteria) sizes.push_back(static_cast<int>(c.descriptions.size()));
        return sizes;
    }

    const DiseaseLabel* find_label_by_code(const std::string& code) const {
        for (const auto& l : labels)
            if (l.code == code) return &l;
        return nullptr;
    }

    const Criterion* find_criterion_by_name(const std::string& name) const {
        for (const auto& c : criteria)
            if (c.name == name) return &c;
        return nullptr;
    }
};

struct Violation {
    enum class Kind {
        DuplicateCriterionName,
        DuplicateLabelCode,
        NonDenseLabelIds,
        EmptyDescriptionText,
        DanglingDiseaseId,
        InconsistentCriterionId,
        EmptyCriterion,
        UnmappedDisease,  // warning: a disease with zero mapped descriptions anywhere
    };
    Kind kind;
    std::string message;
    bool warning = false;
};

inline std::vector<Violation> validate_criteria(const CriterionSet& cs) {
    std::vector<Violation> out;
    const int n_labels = cs.num_labels();

    std::set<std::string> codes;
    std::set<int> label_ids;
    for (const auto& l : cs.labels) {
        if (!codes.insert(l.code).second)
            out.push_back({Violation::Kind::DuplicateLabelCode,
                           "duplicate label code '" + l.code + "'", false});
        label_ids.insert(l.id);
    }
    for (int i = 0; i < n_labels; ++i) {
        if (!label_ids.count(i)) {
            out.push_back({Violation::Kind::NonDenseLabelIds,
                           "label ids are not dense in [0, " + std::to_string(n_labels) + ")",
                           false});
            break;
        }
    }

    std::set<std::string> names;
    std::vector<int> mapped_count(static_cast<size_t>(std::max(n_labels, 0)), 0);
    for (size_t i = 0; i < cs.criteria.size(); ++i) {
        const auto& c = cs.criteria[i];
        if (!names.insert(c.name).second)
            out.push_back({Violation::Kind::DuplicateCriterionName,
                           "duplicate criterion name '" + c.name + "'", false});
        if (c.descriptions.empty())
            out.push_back({Violation::Kind::EmptyCriterion,
                           "criterion '" + c.name + "' has no descriptions", false});
        for (size_t j = 0; j < c.descriptions.size(); ++j) {
            const auto& d = c.descriptions[j];
            std::string where =
                "criteria[" + std::to_string(i) + "].descriptions[" + std::to_string(j) + "]";
            if (d.criterion_id != c.id)
                out.push_back({Violation::Kind::InconsistentCriterionId,
                               where + " criterion_id " + std::to_string(d.criterion_id) +
                                   " != " + std::to_string(c.id),
                               false});
            if (d.text.empty())
                out.push_back({Violation::Kind::EmptyDescriptionText,
                               where + " has empty text", false});
            for (int disease : d.diseases) {
                if (disease < 0 || disease >= n_labels)
                    out.push_back({Violation::Kind::DanglingDiseaseId,
                                   where + " maps to dangling disease id " +
                                       std::to_string(disease),
                                   false});
                else
                    ++mapped_count[static_cast<size_t>(disease)];
            }
        }
    }
    for (int d = 0; d < n_labels; ++d) {
        if (mapped_count[static_cast<size_t>(d)] == 0)
            out.push_back({Violation::Kind::UnmappedDisease,
                           "disease '" + cs.labels[static_cast<size_t>(d)].code +
                               "' has no mapped description in any criterion",
                           true});
    }
    return out;
}

inline bool is_valid(const CriterionSet& cs) {
    for (const auto& v : validate_criteria(cs))
        if (!v.warning) return false;
    return true;
}

// Positive description indices for the anchor loss: descriptions whose
// disease set intersects the image's labels; falls back to the "normal"
// descriptions (empty disease set), then to {0}. Always nonempty.
inline std::vector<int> positives_for(const CriterionSet& cs, int criterion_id,
                                      const std::set<int>& label_ids) {
    if (criterion_id < 0 || criterion_id >= cs.num_criteria())
        throw PreconditionError("positives_for: criterion_id " + std::to_string(criterion_id) +
                                " out of range");
    const auto& descs = cs.criteria[static_cast<size_t>(criterion_id)].descriptions;
    std::vector<int> matched;
    for (size_t j = 0; j < descs.size(); ++j) {
        for (int d : descs[j].diseases) {
            if (label_ids.count(d)) {
                matched.push_back(static_cast<int>(j));
                break;
            }
        }
    }
    if (!matched.empty()) return matched;
    for (size_t j = 0; j < descs.size(); ++j)
        if (descs[j].diseases.empty()) matched.push_back(static_cast<int>(j));
    if (!matched.empty()) return matched;
    return {0};
}

// ---- JSON persistence ------------------------------------------------
//
// Schema: {"version": str,
//          "labels": [{"id": int, "code": str, "name": str}],
//          "criteria": [{"id": int, "name": str,
//                        "descriptions": [{"text": str, "diseases": [int]}]}]}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key,
                                     const std::string& path) {
    if (!j.contains(key)) throw SchemaError(path.empty() ? key : path + "." + key, "missing key");
    return j.at(key);
}

template <typename T>
inline T as(const nlohmann::json& j, const std::string& path, const char* type_name) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SchemaError(path, std::string("expected ") + type_name);
    }
}

}  // namespace detail

inline nlohmann::ordered_json criteria_to_json(const CriterionSet& cs) {
    nlohmann::ordered_json j;
    j["version"] = cs.version;
    j["labels"] = nlohmann::ordered_json::array();
    for (const auto& l : cs.labels) {
        nlohmann::ordered_json jl;
        jl["id"] = l.id;
        jl["code"] = l.code;
        jl["name"] = l.name;
        j["labels"].push_back(std::move(jl));
    }
    j["criteria"] = nlohmann::ordered_json::array();
    for (const auto& c : cs.criteria) {
        nlohmann::ordered_json jc;
        jc["id"] = c.id;
        jc["name"] = c.name;
        jc["descriptions"] = nlohmann::ordered_json::array();
        for (const auto& d : c.descriptions) {
            nlohmann::ordered_json jd;
            jd["text"] = d.text;
            jd["diseases"] = std::vector<int>(d.diseases.begin(), d.diseases.end());
            jc["descriptions"].push_back(std::move(jd));
        }
        j["criteria"].push_back(std::move(jc));
    }
    return j;
}

inline CriterionSet criteria_from_json(const nlohmann::json& j) {
    using detail::as;
    using detail::require;
    CriterionSet cs;
    cs.version = as<std::string>(require(j, "version", ""), "version", "string");

    const auto& jlabels = require(j, "labels", "");
    if (!jlabels.is_array()) throw SchemaError("labels", "expected array");
    for (size_t i = 0; i < jlabels.size(); ++i) {
        std::string path = "labels[" + std::to_string(i) + "]";
        const auto& jl = jlabels[i];
        DiseaseLabel l;
        l.id = as<int>(require(jl, "id", path), path + ".id", "int");
        l.code = as<std::string>(require(jl, "code", path), path + ".code", "string");
        l.name = as<std::string>(require(jl, "name", path), path + ".name", "string");
        cs.labels.push_back(std::move(l));
    }

    const auto& jcriteria = require(j, "criteria", "");
    if (!jcriteria.is_array()) throw SchemaError("criteria", "expected array");
    for (size_t i = 0; i < jcriteria.size(); ++i) {
        std::string path = "criteria[" + std::to_string(i) + "]";
        const auto& jc = jcriteria[i];
        Criterion c;
        c.id = as<int>(require(jc, "id", path), path + ".id", "int");
        c.name = as<std::string>(require(jc, "name", path), path + ".name", "string");
        const auto& jdescs = require(jc, "descriptions", path);
        if (!jdescs.is_array()) throw SchemaError(path + ".descriptions", "expected array");
        for (size_t k = 0; k < jdescs.size(); ++k) {
            std::string dpath = path + ".descriptions[" + std::to_string(k) + "]";
            const auto& jd = jdescs[k];
            ConceptDescription d;
            d.criterion_id = c.id;
            d.local_id = static_cast<int>(k);
            d.text = as<std::string>(require(jd, "text", dpath), dpath + ".text", "string");
            auto ids = as<std::vector<int>>(require(jd, "diseases", dpath), dpath + ".diseases",
                                            "array of int");
            d.diseases = std::set<int>(ids.begin(), ids.end());
            c.descriptions.push_back(std::move(d));
        }
        cs.criteria.push_back(std::move(c));
    }
    return cs;
}

inline void save_criteria(const CriterionSet& cs, const std::filesystem::path& path) {
    io::atomic_write(path, [&](std::ostream& os) {
        os << criteria_to_json(cs).dump(2) << "\n";
    });
}

inline CriterionSet load_criteria(const std::filesystem::path& path) {
    std::string text = io::read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("criteria file is not valid JSON: " + std::string(e.what()));
    }
    return criteria_from_json(j);
}

// ---- Criteria mining -------------------------------------------------

struct LLMTurn {
    std::string prompt;
    std::string response;
};

struct MiningTranscript {
    std::vector<LLMTurn> turns;
};

inline std::vector<DiseaseLabel> default_chest_labels() {
    return {{0, "AT", "Atelectasis"},
            {1, "CM", "Cardiomegaly"},
            {2, "CD", "Consolidation"},
            {3, "ED", "Edema"},
            {4, "PE", "Pleural Effusion"}};
}

namespace detail {

inline std::string mining_turn1_prompt(const std::vector<std::string>& corpus, int n_criteria) {
    std::ostringstream os;
    os << "You are indexing radiology reports. From the report corpus below, derive exactly "
       << n_criteria
       << " disentangled diagnostic criteria (named axes of assessment such as heart size or "
          "lung opacity). Reply with JSON only: {\"criteria\": [<name>, ...]} with exactly "
       << n_criteria << " names.\n\nCORPUS:\n";
    for (size_t i = 0; i < corpus.size(); ++i)
        os << "Report " << (i + 1) << ": " << corpus[i] << "\n";
    return os.str();
}

inline std::string mining_turn2_prompt(const std::vector<std::string>& names,
                                       const std::vector<DiseaseLabel>& labels) {
    std::ostringstream os;
    os << "For each diagnostic criterion below, write short concept descriptions of how it "
          "manifests per disease, plus one normal description. Disease codes: ";
    for (size_t i = 0; i < labels.size(); ++i)
        os << (i ? ", " : "") << labels[i].code << " (" << labels[i].name << ")";
    os << ". Reply with JSON only: {\"criteria\": [{\"name\": str, \"descriptions\": "
          "[{\"text\": str, \"diseases\": [<code>, ...]}]}]} where an empty diseases list "
          "marks the normal description. Criteria:\n";
    for (const auto& n : names) os << "- " << n << "\n";
    return os.str();
}

}  // namespace detail

// Runs the two-turn mining protocol: turn 1 asks for criterion names, turn 2
// for per-disease concept descriptions. Both turns are recorded verbatim in
// `transcript` when given.
inline CriterionSet mine_criteria(const std::vector<std::string>& corpus, LLMClient& llm,
                                  int n_criteria,
                                  const std::vector<DiseaseLabel>& labels = default_chest_labels(),
                                  MiningTranscript* transcript = nullptr) {
    if (corpus.empty()) throw PreconditionError("mine_criteria: corpus is empty");
    if (n_criteria < 1) throw PreconditionError("mine_criteria: n_criteria must be positive");

    std::string prompt1 = detail::mining_turn1_prompt(corpus, n_criteria);
    std::string reply1 = llm.generate(prompt1);
    if (transcript) transcript->turns.push_back({prompt1, reply1});

    std::vector<std::string> names;
    try {
        auto j = nlohmann::json::parse(reply1);
        names = j.at("criteria").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("cannot parse criteria names from LLM reply: " + std::string(e.what()),
                         reply1);
    }
    if (static_cast<int>(names.size()) < n_criteria)
        throw ParseError("LLM returned " + std::to_string(names.size()) + " criteria, expected " +
                             std::to_string(n_criteria),
                         reply1);
    names.resize(static_cast<size_t>(n_criteria));

    std::string prompt2 = detail::mining_turn2_prompt(names, labels);
    std::string reply2 = llm.generate(prompt2);
    if (transcript) transcript->turns.push_back({prompt2, reply2});

    CriterionSet cs;
    cs.version = "mined-v1";
    cs.labels = labels;
    try {
        auto j = nlohmann::json::parse(reply2);
        std::map<std::string, nlohmann::json> by_name;
        for (const auto& jc : j.at("criteria"))
            by_name[jc.at("name").get<std::string>()] = jc;
        for (int i = 0; i < n_criteria; ++i) {
            const auto& name = names[static_cast<size_t>(i)];
            auto it = by_name.find(name);
            if (it == by_name.end())
                throw ParseError("LLM turn 2 missing criterion '" + name + "'", reply2);
            Criterion c;
            c.id = i;
            c.name = name;
            for (const auto& jd : it->second.at("descriptions")) {
                ConceptDescription d;
                d.criterion_id = i;
                d.local_id = static_cast<int>(c.descriptions.size());
                d.text = jd.at("text").get<std::string>();
                for (const auto& code : jd.at("diseases")) {
                    const auto* label = cs.find_label_by_code(code.get<std::string>());
                    if (!label)
                        throw ParseError("unknown disease code '" + code.get<std::string>() + "'",
                                         reply2);
                    d.diseases.insert(label->id);
                }
                c.descriptions.push_back(std::move(d));
            }
            if (c.descriptions.empty())
                throw ParseError("criterion '" + name + "' has no descriptions", reply2);
            cs.criteria.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("cannot parse concept descriptions from LLM reply: " +
                             std::string(e.what()),
                         reply2);
    }

    for (const auto& v : validate_criteria(cs))
        if (!v.warning) throw ParseError("mined criteria invalid: " + v.message, reply2);
    return cs;
}

// Renders the two canned mining replies for a criteria set, so a
// ScriptedLLMClient can replay a fixture through the real mining path.
inline std::deque<std::string> scripted_mining_replies(const CriterionSet& cs, int n_criteria) {
    n_criteria = std::min(n_criteria, cs.num_criteria());
    nlohmann::ordered_json turn1;
    turn1["criteria"] = nlohmann::ordered_json::array();
    for (int i = 0; i < n_criteria; ++i)
        turn1["criteria"].push_back(cs.criteria[static_cast<size_t>(i)].name);

    nlohmann::ordered_json turn2;
    turn2["criteria"] = nlohmann::ordered_json::array();
    for (int i = 0; i < n_criteria; ++i) {
        const auto& c = cs.criteria[static_cast<size_t>(i)];
        nlohmann::ordered_json jc;
        jc["name"] = c.name;
        jc["descriptions"] = nlohmann::ordered_json::array();
        for (const auto& d : c.descriptions) {
            nlohmann::ordered_json jd;
            jd["text"] = d.text;
            jd["diseases"] = nlohmann::ordered_json::array();
            for (int disease : d.diseases)
                jd["diseases"].push_back(cs.labels[static_cast<size_t>(disease)].code);
            jc["descriptions"].push_back(std::move(jd));
        }
        turn2["criteria"].push_back(std::move(jc));
    }
    return {turn1.dump(), turn2.dump()};
}

}  // namespace radalign
