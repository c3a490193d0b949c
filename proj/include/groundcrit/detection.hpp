#pragma once

#include <groundcrit/geometry.hpp>
#include <groundcrit/parsers.hpp>

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace groundcrit {

/// Text item of the open-vocabulary detection task: "category: attr, attr".
struct DetectionLabel {
    std::string category;
    std::vector<std::string> attributes;

    friend bool operator==(const DetectionLabel&, const DetectionLabel&) = default;
};

inline DetectionLabel parse_detection_label(std::string_view text) {
    DetectionLabel out;
    const auto t = trim(text);
    const auto colon = t.find(':');
    out.category = std::string(trim(t.substr(0, colon)));
    if (colon != std::string_view::npos) {
        std::string_view rest = t.substr(colon + 1);
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const auto attr = trim(rest.substr(0, comma));
            if (!attr.empty()) {
                out.attributes.emplace_back(attr);
            }
            if (comma == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(comma + 1);
        }
    }
    return out;
}

inline std::string format_detection_label(const DetectionLabel& label) {
    std::string out = label.category;
    if (!label.attributes.empty()) {
        out += ":";
        for (std::size_t i = 0; i < label.attributes.size(); ++i) {
            out += (i ? ", " : " ") + label.attributes[i];
        }
    }
    return out;
}

struct DetectionVocabulary {
    std::vector<std::string> categories;
    std::vector<std::string> attributes;
};

inline std::vector<std::string> split_csv_list(std::string_view text) {
    std::vector<std::string> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        const auto item = trim(text.substr(0, comma));
        if (!item.empty()) {
            out.emplace_back(item);
        }
        if (comma == std::string_view::npos) {
            break;
        }
        text.remove_prefix(comma + 1);
    }
    return out;
}

/// Reads "Categories: a, b" and "Attributes: x, y" lines (any order, case
/// insensitive keys). Returns nullopt unless both lines are present.
inline std::optional<DetectionVocabulary> parse_detection_vocabulary(std::string_view text) {
    DetectionVocabulary v;
    bool cats = false;
    bool attrs = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = trim(text.substr(0, nl));
        const auto colon = line.find(':');
        if (colon != std::string_view::npos) {
            std::string key(trim(line.substr(0, colon)));
            for (auto& ch : key) {
                ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            }
            if (key == "categories") {
                v.categories = split_csv_list(line.substr(colon + 1));
                cats = true;
            } else if (key == "attributes") {
                v.attributes = split_csv_list(line.substr(colon + 1));
                attrs = true;
            }
        }
        if (nl == std::string_view::npos) {
            break;
        }
        text.remove_prefix(nl + 1);
    }
    if (!cats || !attrs) {
        return std::nullopt;
    }
    return v;
}

/// Random category swap, attribute swap, attribute deletion or attribute
/// addition. Always returns a label different from the input when the
/// vocabulary allows any change at all.
inline DetectionLabel perturb_detection_label(const DetectionLabel& label,
                                              const DetectionVocabulary& vocab, Rng& rng) {
    auto pick_other = [&](const std::vector<std::string>& pool,
                          const std::vector<std::string>& exclude) -> std::string {
        std::vector<std::string> options;
        for (const auto& p : pool) {
            if (std::find(exclude.begin(), exclude.end(), p) == exclude.end()) {
                options.push_back(p);
            }
        }
        return options.empty() ? std::string{} : options[uniform_index(rng, options.size())];
    };

    for (int attempt = 0; attempt < 16; ++attempt) {
        DetectionLabel out = label;
        switch (uniform_index(rng, 4)) {
        case 0:
            if (auto c = pick_other(vocab.categories, {label.category}); !c.empty()) {
                out.category = c;
            }
            break;
        case 1:
            if (!out.attributes.empty()) {
                const auto i = uniform_index(rng, out.attributes.size());
                if (auto a = pick_other(vocab.attributes, out.attributes); !a.empty()) {
                    out.attributes[i] = a;
                }
            }
            break;
        case 2:
            if (!out.attributes.empty()) {
                out.attributes.erase(out.attributes.begin() +
                                     static_cast<std::ptrdiff_t>(
                                         uniform_index(rng, out.attributes.size())));
            }
            break;
        default:
            if (auto a = pick_other(vocab.attributes, out.attributes); !a.empty()) {
                out.attributes.push_back(a);
            }
            break;
        }
        if (!(out == label)) {
            return out;
        }
    }
    return label;
}

} // namespace groundcrit
