#pragma once

#include <groundcrit/backends.hpp>
#include <groundcrit/error.hpp>
#include <groundcrit/orchestrator.hpp>

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace groundcrit {

using ojson = nlohmann::ordered_json;

inline constexpr std::string_view kReportSchema = "groundcrit.report/1";
inline constexpr std::string_view kManifestSchema = "groundcrit.manifest/1";

// ---------------------------------------------------------------------------
// Text files
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InvalidArgument("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) {
        throw Error("cannot write " + path.string());
    }
}

// ---------------------------------------------------------------------------
// Report document
// ---------------------------------------------------------------------------

inline ojson box_to_json(const GridBox& b) { return ojson::array({b.left, b.top, b.right, b.bottom}); }

inline GridBox box_from_json(const ojson& j) {
    if (!j.is_array() || j.size() != 4) {
        throw InvalidArgument("box must be an array [left, top, right, bottom]");
    }
    for (const auto& v : j) {
        if (!v.is_number()) {
            throw InvalidArgument("box coordinates must be numbers");
        }
    }
    return GridBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline ojson item_to_json(const CritiqueItem& item) {
    ojson j;
    j["id"] = item.id;
    j["comment"] = item.comment;
    j["box"] = item.box ? box_to_json(*item.box) : ojson(nullptr);
    j["status"] = std::string(item_status_name(item.status));
    if (item.status == ItemStatus::Discarded) {
        j["discard_reason"] = item.discard_reason;
    }
    ojson trace = ojson::array();
    for (const auto& b : item.box_trace) {
        trace.push_back(box_to_json(b));
    }
    j["box_trace"] = std::move(trace);
    j["box_trace_truncated"] = item.box_trace_truncated;
    j["text_trace"] = item.text_trace;
    j["text_trace_truncated"] = item.text_trace_truncated;
    ojson verdicts = ojson::array();
    for (auto v : item.verdicts) {
        verdicts.push_back(std::string(verdict_label(v)));
    }
    j["verdicts"] = std::move(verdicts);
    j["calls"] = {{"BoxGen", item.box_gen_calls},
                  {"BoxRefine", item.box_refine_calls},
                  {"Validation", item.validation_calls},
                  {"TextRefine", item.text_refine_calls}};
    return j;
}

inline ojson report_to_json(const PipelineReport& r, const std::string& transcript_ref = "transcript.jsonl") {
    ojson j;
    j["schema"] = std::string(kReportSchema);
    j["profile"] = r.profile;
    j["image"] = r.image_id;
    ojson items = ojson::array();
    for (const auto& i : r.items) {
        items.push_back(item_to_json(i));
    }
    j["items"] = std::move(items);
    ojson counts = ojson::object();
    for (Stage s : kAllStages) {
        counts[std::string(stage_name(s))] = r.calls(s);
    }
    j["stage_calls"] = std::move(counts);
    j["total_calls"] = r.total_calls();
    j["parse_retries"] = r.parse_retries;
    j["summary"] = {{"generated", r.items.size()},
                    {"filtered_out", r.count(ItemStatus::FilteredOut)},
                    {"discarded", r.count(ItemStatus::Discarded)},
                    {"emitted", r.count(ItemStatus::Emitted)}};
    j["transcript"] = transcript_ref;
    return j;
}

inline std::string dump_document(const ojson& j) { return j.dump(2) + "\n"; }

/// Checks the structural rules of a report document and returns the error
/// list (empty when valid).
inline std::vector<std::string> check_report_schema(const ojson& j) {
    std::vector<std::string> errs;
    auto need = [&](const ojson& obj, const char* key, auto pred, const std::string& where) {
        if (!obj.is_object() || !obj.contains(key) || !pred(obj.at(key))) {
            errs.push_back(where + "." + key + " missing or mistyped");
            return false;
        }
        return true;
    };
    auto is_str = [](const ojson& v) { return v.is_string(); };
    auto is_int = [](const ojson& v) { return v.is_number_integer(); };
    auto is_arr = [](const ojson& v) { return v.is_array(); };
    auto is_obj = [](const ojson& v) { return v.is_object(); };
    auto is_bool = [](const ojson& v) { return v.is_boolean(); };
    if (!need(j, "schema", is_str, "$") || j["schema"] != kReportSchema) {
        errs.push_back("$.schema is not " + std::string(kReportSchema));
    }
    need(j, "profile", is_str, "$");
    need(j, "total_calls", is_int, "$");
    if (need(j, "stage_calls", is_obj, "$")) {
        long sum = 0;
        for (Stage s : kAllStages) {
            if (need(j["stage_calls"], std::string(stage_name(s)).c_str(), is_int, "$.stage_calls")) {
                sum += j["stage_calls"][std::string(stage_name(s))].get<long>();
            }
        }
        if (j.contains("total_calls") && j["total_calls"].is_number_integer() &&
            j["total_calls"].get<long>() != sum) {
            errs.push_back("$.total_calls differs from the sum of stage_calls");
        }
    }
    if (need(j, "items", is_arr, "$")) {
        for (std::size_t i = 0; i < j["items"].size(); ++i) {
            const ojson& it = j["items"][i];
            const std::string where = "$.items[" + std::to_string(i) + "]";
            need(it, "id", is_int, where);
            need(it, "comment", is_str, where);
            need(it, "box_trace", is_arr, where);
            need(it, "text_trace", is_arr, where);
            need(it, "verdicts", is_arr, where);
            need(it, "box_trace_truncated", is_bool, where);
            if (need(it, "status", is_str, where)) {
                const std::string st = it["status"];
                if (st != "generated" && st != "filtered_out" && st != "grounded" &&
                    st != "emitted" && st != "discarded") {
                    errs.push_back(where + ".status unknown: " + st);
                }
                if (st == "discarded") {
                    need(it, "discard_reason", is_str, where);
                }
                if (st == "emitted") {
                    if (!it.contains("box") || it["box"].is_null()) {
                        errs.push_back(where + " emitted without a box");
                    } else {
                        try {
                            (void)box_from_json(it["box"]);
                        } catch (const InvalidArgument& e) {
                            errs.push_back(where + ".box: " + e.what());
                        }
                    }
                }
            }
        }
    }
    return errs;
}

inline ojson transcript_entry_to_json(const TranscriptEntry& e) {
    ojson j;
    j["stage"] = std::string(stage_name(e.stage));
    j["item"] = e.item_id;
    j["images"] = e.image_checksums;
    j["request"] = e.request_text;
    j["response"] = e.response_text;
    return j;
}

inline std::string transcript_jsonl(const std::vector<TranscriptEntry>& t) {
    std::string out;
    for (const auto& e : t) {
        out += transcript_entry_to_json(e).dump() + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scripted transcripts
// ---------------------------------------------------------------------------

/// Reads a scripted-backend transcript. Each nonblank line is
///   {"response": "...", "match": "optional substring", "channel": "optional key"}
inline std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot read transcript " + path.string());
    }
    std::vector<ScriptEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path.string(), lineno, e.what());
        }
        if (!j.is_object() || !j.contains("response") || !j["response"].is_string()) {
            throw SchemaError(path.string(), lineno, "\"response\" string is required");
        }
        ScriptEntry e;
        e.response.text = j["response"].get<std::string>();
        if (j.contains("match")) {
            if (!j["match"].is_string()) {
                throw SchemaError(path.string(), lineno, "\"match\" must be a string");
            }
            e.match = j["match"].get<std::string>();
        }
        if (j.contains("channel")) {
            if (!j["channel"].is_string()) {
                throw SchemaError(path.string(), lineno, "\"channel\" must be a string");
            }
            e.channel = j["channel"].get<std::string>();
        }
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Flat key = value config
// ---------------------------------------------------------------------------

namespace detail {

inline int parse_int_value(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    int out = 0;
    try {
        out = std::stoi(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) {
        throw InvalidArgument("config " + key + ": expected an integer, got \"" + v + "\"");
    }
    return out;
}

inline double parse_double_value(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) {
        throw InvalidArgument("config " + key + ": expected a number, got \"" + v + "\"");
    }
    return out;
}

inline bool parse_bool_value(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "off" || v == "no") {
        return false;
    }
    throw InvalidArgument("config " + key + ": expected true/false, got \"" + v + "\"");
}

struct ConfigField {
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

inline std::string fmt_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

inline const std::map<std::string, ConfigField>& config_fields() {
    static const std::map<std::string, ConfigField> fields = [] {
        std::map<std::string, ConfigField> m;
        auto int_field = [&m](const std::string& k, int PipelineConfig::*p) {
            m[k] = {[k, p](PipelineConfig& c, const std::string& v) { c.*p = parse_int_value(k, v); },
                    [p](const PipelineConfig& c) { return std::to_string(c.*p); }};
        };
        auto bool_field = [&m](const std::string& k, bool PipelineConfig::*p) {
            m[k] = {[k, p](PipelineConfig& c, const std::string& v) { c.*p = parse_bool_value(k, v); },
                    [p](const PipelineConfig& c) { return std::string(c.*p ? "true" : "false"); }};
        };
        int_field("max_box_refine_iters", &PipelineConfig::max_box_refine_iters);
        int_field("max_text_refine_iters", &PipelineConfig::max_text_refine_iters);
        int_field("max_validation_cycles", &PipelineConfig::max_validation_cycles);
        int_field("parse_retry", &PipelineConfig::parse_retry);
        int_field("k_textgen", &PipelineConfig::k_textgen);
        int_field("k_filter", &PipelineConfig::k_filter);
        int_field("k_box_gen", &PipelineConfig::k_box_gen);
        int_field("k_box_refine", &PipelineConfig::k_box_refine);
        int_field("k_validation", &PipelineConfig::k_validation);
        int_field("k_text_refine", &PipelineConfig::k_text_refine);
        int_field("k_invalid", &PipelineConfig::k_invalid);
        int_field("text_refine_steps", &PipelineConfig::text_refine_steps);
        int_field("parallel_items", &PipelineConfig::parallel_items);
        bool_field("filtering_on", &PipelineConfig::filtering_on);
        bool_field("box_refine_on", &PipelineConfig::box_refine_on);
        bool_field("validation_on", &PipelineConfig::validation_on);
        bool_field("visual_prompting_on", &PipelineConfig::visual_prompting_on);
        m["max_num_perturb"] = {
            [](PipelineConfig& c, const std::string& v) {
                c.perturb.max_num_perturb = parse_int_value("max_num_perturb", v);
            },
            [](const PipelineConfig& c) { return std::to_string(c.perturb.max_num_perturb); }};
        m["grid_width"] = {
            [](PipelineConfig& c, const std::string& v) { c.space.width_units = parse_double_value("grid_width", v); },
            [](const PipelineConfig& c) { return fmt_double(c.space.width_units); }};
        m["grid_height"] = {
            [](PipelineConfig& c, const std::string& v) { c.space.height_units = parse_double_value("grid_height", v); },
            [](const PipelineConfig& c) { return fmt_double(c.space.height_units); }};
        m["context_frac"] = {
            [](PipelineConfig& c, const std::string& v) { c.context_frac = parse_double_value("context_frac", v); },
            [](const PipelineConfig& c) { return fmt_double(c.context_frac); }};
        m["temperature"] = {
            [](PipelineConfig& c, const std::string& v) { c.temperature = parse_double_value("temperature", v); },
            [](const PipelineConfig& c) { return fmt_double(c.temperature); }};
        m["box_stroke"] = {
            [](PipelineConfig& c, const std::string& v) { c.style.box_stroke_px = parse_int_value("box_stroke", v); },
            [](const PipelineConfig& c) { return std::to_string(c.style.box_stroke_px); }};
        m["label_px"] = {
            [](PipelineConfig& c, const std::string& v) { c.style.label_px = parse_int_value("label_px", v); },
            [](const PipelineConfig& c) { return std::to_string(c.style.label_px); }};
        m["task_description"] = {
            [](PipelineConfig& c, const std::string& v) { c.task_description = v; },
            [](const PipelineConfig& c) { return c.task_description; }};
        return m;
    }();
    return fields;
}

} // namespace detail

inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const auto& fields = detail::config_fields();
    const auto it = fields.find(key);
    if (it == fields.end()) {
        throw InvalidArgument("unknown config key \"" + key + "\"");
    }
    it->second.set(cfg, value);
}

/// Applies "key = value" lines; '#' starts a comment line.
inline void apply_config_text(PipelineConfig& cfg, std::string_view text, const std::string& origin) {
    int lineno = 0;
    while (!text.empty()) {
        ++lineno;
        const auto nl = text.find('\n');
        const auto line = trim(text.substr(0, nl));
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw SchemaError(origin, lineno, "expected key = value");
        }
        try {
            set_config_value(cfg, std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
        } catch (const InvalidArgument& e) {
            throw SchemaError(origin, lineno, e.what());
        }
    }
}

inline std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, f] : detail::config_fields()) {
        out.emplace_back(k, f.get(cfg));
    }
    return out;
}

inline ojson config_to_json(const PipelineConfig& cfg) {
    ojson j = ojson::object();
    for (const auto& [k, v] : config_entries(cfg)) {
        j[k] = v;
    }
    return j;
}

inline PipelineConfig config_from_json(const ojson& j) {
    PipelineConfig cfg;
    if (!j.is_object()) {
        throw InvalidArgument("config must be an object");
    }
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) {
            throw InvalidArgument("config value for " + k + " must be a string");
        }
        set_config_value(cfg, k, v.get<std::string>());
    }
    return cfg;
}

} // namespace groundcrit
