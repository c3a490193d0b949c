#pragma once

#include <groundcrit/error.hpp>
#include <groundcrit/geometry.hpp>

#include <array>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace groundcrit {

// ---------------------------------------------------------------------------
// Shared vocabulary
// ---------------------------------------------------------------------------

enum class Stage { TextGen, TextFilter, BoxGen, BoxRefine, Validation, TextRefine };

inline constexpr std::array<Stage, 6> kAllStages{Stage::TextGen,    Stage::TextFilter,
                                                 Stage::BoxGen,     Stage::BoxRefine,
                                                 Stage::Validation, Stage::TextRefine};

inline constexpr std::string_view stage_name(Stage s) {
    switch (s) {
    case Stage::TextGen: return "TextGen";
    case Stage::TextFilter: return "TextFilter";
    case Stage::BoxGen: return "BoxGen";
    case Stage::BoxRefine: return "BoxRefine";
    case Stage::Validation: return "Validation";
    case Stage::TextRefine: return "TextRefine";
    }
    return "?";
}

enum class ValidationVerdict { BothCorrect, IncorrectComment, IncorrectBbox, BothIncorrect };

inline constexpr std::array<ValidationVerdict, 4> kAllVerdicts{
    ValidationVerdict::BothCorrect, ValidationVerdict::IncorrectComment,
    ValidationVerdict::IncorrectBbox, ValidationVerdict::BothIncorrect};

/// The exact label each verdict is written as, in model output and few-shot examples.
inline constexpr std::string_view verdict_label(ValidationVerdict v) {
    switch (v) {
    case ValidationVerdict::BothCorrect: return "Both Correct";
    case ValidationVerdict::IncorrectComment: return "Incorrect Comment";
    case ValidationVerdict::IncorrectBbox: return "Incorrect Bbox";
    case ValidationVerdict::BothIncorrect: return "Both Incorrect";
    }
    return "?";
}

inline constexpr std::string_view kBoxAcceptSentinel = "BOUNDING BOX IS ACCURATE, PLEASE TERMINATE";
inline constexpr std::string_view kCommentAcceptSentinel = "COMMENT IS ACCURATE, PLEASE TERMINATE";

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ParseErrorKind {
    MalformedSyntax,  // filter tuple list not parseable
    IndexCoverage,    // filter indices not exactly 0..n-1
    NoTuple,          // no 4-tuple of numbers found
    ReversedBox,      // left >= right or top >= bottom with positive extent reversed
    ZeroArea,         // width or height exactly zero
    OutOfRange,       // coordinate outside the grid space
    NotSentinelOrBox, // refine output is neither the sentinel nor a box
    EmptyOutput,      // text refine output empty
    UnknownLabel,     // verdict not one of the four labels
};

inline constexpr std::string_view parse_error_kind_name(ParseErrorKind k) {
    switch (k) {
    case ParseErrorKind::MalformedSyntax: return "malformed_syntax";
    case ParseErrorKind::IndexCoverage: return "index_coverage";
    case ParseErrorKind::NoTuple: return "no_tuple";
    case ParseErrorKind::ReversedBox: return "reversed_box";
    case ParseErrorKind::ZeroArea: return "zero_area";
    case ParseErrorKind::OutOfRange: return "out_of_range";
    case ParseErrorKind::NotSentinelOrBox: return "not_sentinel_or_box";
    case ParseErrorKind::EmptyOutput: return "empty_output";
    case ParseErrorKind::UnknownLabel: return "unknown_label";
    }
    return "?";
}

class ParseError : public Error {
public:
    ParseError(ParseErrorKind kind, const std::string& detail)
        : Error(std::string(parse_error_kind_name(kind)) + ": " + detail), kind_(kind) {}
    ParseErrorKind kind() const noexcept { return kind_; }

private:
    ParseErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

/// Splits a TextGen reply into comments. A blank line (only whitespace)
/// separates items; segments are trimmed and empty ones dropped.
inline std::vector<std::string> parse_comment_list(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        const auto t = trim(current);
        if (!t.empty()) {
            out.emplace_back(t);
        }
        current.clear();
    };
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        if (trim(line).empty()) {
            flush();
        } else {
            if (!current.empty()) {
                current += '\n';
            }
            current += line;
        }
        if (nl == std::string_view::npos) {
            break;
        }
        pos = nl + 1;
    }
    flush();
    return out;
}

namespace detail {

class Cursor {
public:
    explicit Cursor(std::string_view s) : s_(s) {}

    void skip_ws() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) {
            ++i_;
        }
    }
    bool eat(char c) {
        skip_ws();
        if (i_ < s_.size() && s_[i_] == c) {
            ++i_;
            return true;
        }
        return false;
    }
    bool eat_word(std::string_view w) {
        skip_ws();
        if (s_.substr(i_, w.size()) == w) {
            i_ += w.size();
            return true;
        }
        return false;
    }
    std::optional<long> integer() {
        skip_ws();
        long v = 0;
        const char* b = s_.data() + i_;
        const auto [p, ec] = std::from_chars(b, s_.data() + s_.size(), v);
        if (ec != std::errc() || p == b) {
            return std::nullopt;
        }
        i_ += static_cast<std::size_t>(p - b);
        return v;
    }
    bool at_end() {
        skip_ws();
        return i_ == s_.size();
    }

private:
    std::string_view s_;
    std::size_t i_ = 0;
};

// Scans for the first "( n , n , n , n )" with real-number entries.
inline std::optional<std::array<double, 4>> find_four_tuple(std::string_view text) {
    for (std::size_t open = text.find('('); open != std::string_view::npos;
         open = text.find('(', open + 1)) {
        const auto close = text.find(')', open);
        if (close == std::string_view::npos) {
            return std::nullopt;
        }
        std::string inner(text.substr(open + 1, close - open - 1));
        std::array<double, 4> vals{};
        std::size_t count = 0;
        bool ok = true;
        std::size_t start = 0;
        while (ok) {
            const auto comma = inner.find(',', start);
            const std::string field(trim(std::string_view(inner).substr(
                start, comma == std::string::npos ? std::string::npos : comma - start)));
            if (field.empty() || count == 4) {
                ok = false;
                break;
            }
            char* end = nullptr;
            const double v = std::strtod(field.c_str(), &end);
            if (end != field.c_str() + field.size() || !std::isfinite(v)) {
                ok = false;
                break;
            }
            vals[count++] = v;
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        if (ok && count == 4) {
            return vals;
        }
    }
    return std::nullopt;
}

} // namespace detail

/// Parses "[(0, True), (1, False), ...]". Indices must be exactly 0..n_items-1,
/// each once; the result is ordered by index.
inline std::vector<std::pair<int, bool>> parse_filter_verdicts(std::string_view text, int n_items) {
    if (n_items < 0) {
        throw InvalidArgument("parse_filter_verdicts: n_items must be >= 0");
    }
    detail::Cursor c(trim(text));
    std::vector<std::pair<int, bool>> raw;
    if (!c.eat('[')) {
        throw ParseError(ParseErrorKind::MalformedSyntax, "expected '['");
    }
    if (!c.eat(']')) {
        while (true) {
            if (!c.eat('(')) {
                throw ParseError(ParseErrorKind::MalformedSyntax, "expected '('");
            }
            const auto idx = c.integer();
            if (!idx) {
                throw ParseError(ParseErrorKind::MalformedSyntax, "expected an index");
            }
            if (!c.eat(',')) {
                throw ParseError(ParseErrorKind::MalformedSyntax, "expected ','");
            }
            bool value = false;
            if (c.eat_word("True")) {
                value = true;
            } else if (!c.eat_word("False")) {
                throw ParseError(ParseErrorKind::MalformedSyntax, "expected True or False");
            }
            if (!c.eat(')')) {
                throw ParseError(ParseErrorKind::MalformedSyntax, "expected ')'");
            }
            raw.emplace_back(static_cast<int>(*idx), value);
            if (c.eat(']')) {
                break;
            }
            if (!c.eat(',')) {
                throw ParseError(ParseErrorKind::MalformedSyntax, "expected ',' or ']'");
            }
        }
    }
    if (!c.at_end()) {
        throw ParseError(ParseErrorKind::MalformedSyntax, "trailing text after list");
    }

    std::vector<std::optional<bool>> by_index(static_cast<std::size_t>(n_items));
    for (const auto& [i, v] : raw) {
        if (i < 0 || i >= n_items || by_index[static_cast<std::size_t>(i)]) {
            throw ParseError(ParseErrorKind::IndexCoverage,
                             "index " + std::to_string(i) + " out of range or repeated");
        }
        by_index[static_cast<std::size_t>(i)] = v;
    }
    std::vector<std::pair<int, bool>> out;
    for (int i = 0; i < n_items; ++i) {
        if (!by_index[static_cast<std::size_t>(i)]) {
            throw ParseError(ParseErrorKind::IndexCoverage,
                             "index " + std::to_string(i) + " missing");
        }
        out.emplace_back(i, *by_index[static_cast<std::size_t>(i)]);
    }
    return out;
}

inline std::string format_filter_verdicts(const std::vector<std::pair<int, bool>>& verdicts) {
    std::string out = "[";
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        if (i) {
            out += ", ";
        }
        out += "(" + std::to_string(verdicts[i].first) + ", " +
               (verdicts[i].second ? "True" : "False") + ")";
    }
    return out + "]";
}

/// First "(left, top, right, bottom)" in the text, validated against space.
/// Reversed coordinates are rejected, never swapped.
inline GridBox parse_box(std::string_view text, const GridSpace& space) {
    const auto t = detail::find_four_tuple(text);
    if (!t) {
        throw ParseError(ParseErrorKind::NoTuple, "no (left, top, right, bottom) tuple found");
    }
    const GridBox b{(*t)[0], (*t)[1], (*t)[2], (*t)[3]};
    if (b.left == b.right || b.top == b.bottom) {
        throw ParseError(ParseErrorKind::ZeroArea, "box " + format_box(b) + " has zero area");
    }
    if (b.left > b.right || b.top > b.bottom) {
        throw ParseError(ParseErrorKind::ReversedBox, "box " + format_box(b) + " is reversed");
    }
    if (!b.valid_in(space)) {
        throw ParseError(ParseErrorKind::OutOfRange,
                         "box " + format_box(b) + " lies outside the coordinate range");
    }
    return b;
}

struct Accept {
    friend bool operator==(const Accept&, const Accept&) = default;
};

struct NewBox {
    GridBox box;
    friend bool operator==(const NewBox&, const NewBox&) = default;
};

struct NewComment {
    std::string text;
    friend bool operator==(const NewComment&, const NewComment&) = default;
};

using BoxRefineStep = std::variant<Accept, NewBox>;
using TextRefineStep = std::variant<Accept, NewComment>;

inline BoxRefineStep parse_refine_step(std::string_view text, const GridSpace& space) {
    if (trim(text) == kBoxAcceptSentinel) {
        return Accept{};
    }
    if (!detail::find_four_tuple(text)) {
        throw ParseError(ParseErrorKind::NotSentinelOrBox,
                         "expected a box tuple or the acceptance sentinel");
    }
    return NewBox{parse_box(text, space)};
}

inline TextRefineStep parse_text_refine_step(std::string_view text) {
    const auto t = trim(text);
    if (t.empty()) {
        throw ParseError(ParseErrorKind::EmptyOutput, "empty text refinement");
    }
    if (t == kCommentAcceptSentinel) {
        return Accept{};
    }
    return NewComment{std::string(t)};
}

inline ValidationVerdict parse_verdict(std::string_view text) {
    const auto t = trim(text);
    for (ValidationVerdict v : kAllVerdicts) {
        if (t == verdict_label(v)) {
            return v;
        }
    }
    throw ParseError(ParseErrorKind::UnknownLabel, "unrecognized label \"" + std::string(t) + "\"");
}

} // namespace groundcrit
