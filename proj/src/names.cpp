#include "ckmerge/names.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "ckmerge/errors.hpp"

namespace ckmerge {

namespace {

struct Token {
    std::string_view text;
    std::size_t offset;  // byte offset within the full name
};

std::vector<Token> split_tokens(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t start = 0;
    while (true) {
        const std::size_t underscore = text.find('_', start);
        if (underscore == std::string_view::npos) {
            tokens.push_back({text.substr(start), start});
            return tokens;
        }
        tokens.push_back({text.substr(start, underscore - start), start});
        start = underscore + 1;
    }
}

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (const char c : s) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

[[noreturn]] void fail(std::string_view name, std::size_t position, const std::string& what) {
    throw ValidationError("invalid merge name '" + std::string(name) + "': " + what +
                          " at position " + std::to_string(position));
}

/// "pf-{n}" + "{d}" tokens -> penalty value. The fractional token is read
/// as literal decimal digits, so "pf-1" + "05" is 1.05 and "pf-0" + "7" is
/// 0.7. A single strtod on the reassembled literal keeps parse(format(p))
/// exact for every penalty the formatter can emit.
double parse_penalty(std::string_view name, const Token& integer_tok, const Token& frac_tok) {
    constexpr std::string_view prefix = "pf-";
    if (integer_tok.text.substr(0, prefix.size()) != prefix) {
        fail(name, integer_tok.offset, "expected penalty token 'pf-<integer>'");
    }
    const std::string_view int_digits = integer_tok.text.substr(prefix.size());
    if (!all_digits(int_digits)) {
        fail(name, integer_tok.offset + prefix.size(), "expected penalty integer digits");
    }
    if (!all_digits(frac_tok.text)) {
        fail(name, frac_tok.offset, "expected penalty fractional digits");
    }
    const std::string literal =
        std::string(int_digits) + "." + std::string(frac_tok.text);
    return std::strtod(literal.c_str(), nullptr);
}

std::string format_penalty(double penalty) {
    if (!(penalty > 0.0)) throw ValidationError("invalid penalty factor");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12f", penalty);
    const std::string text = buf;
    const std::size_t dot = text.find('.');
    std::string integer_part = text.substr(0, dot);
    std::string frac_part = text.substr(dot + 1);
    while (frac_part.size() > 1 && frac_part.back() == '0') frac_part.pop_back();
    return "pf-" + integer_part + "_" + frac_part;
}

std::size_t parse_positive_integer(std::string_view name, const Token& tok,
                                   const char* what) {
    if (!all_digits(tok.text)) {
        fail(name, tok.offset, std::string("expected ") + what);
    }
    const unsigned long long value = std::strtoull(std::string(tok.text).c_str(), nullptr, 10);
    if (value == 0) {
        fail(name, tok.offset, std::string(what) + " must be positive");
    }
    return static_cast<std::size_t>(value);
}

}  // namespace

std::string format_name(const MergeName& name) {
    std::string out = "last_" + std::to_string(name.k);
    if (name.interval_m.has_value()) out += "_" + std::to_string(*name.interval_m);
    switch (name.scheme) {
        case MergeName::Scheme::Unweighted:
            out += "_unweighted";
            break;
        case MergeName::Scheme::Loss:
        case MergeName::Scheme::Steps:
            if (!name.penalty.has_value()) {
                throw ValidationError("metric-weighted merge name requires a penalty factor");
            }
            out += name.scheme == MergeName::Scheme::Loss ? "_loss_" : "_steps_";
            out += format_penalty(*name.penalty);
            break;
    }
    return out;
}

MergeName parse_name(std::string_view text) {
    const std::vector<Token> tokens = split_tokens(text);
    std::size_t idx = 0;

    if (tokens[idx].text != "last") fail(text, tokens[idx].offset, "expected 'last'");
    ++idx;

    if (idx >= tokens.size()) fail(text, text.size(), "expected checkpoint count");
    MergeName name;
    name.k = parse_positive_integer(text, tokens[idx], "checkpoint count");
    ++idx;

    if (idx < tokens.size() && all_digits(tokens[idx].text)) {
        name.interval_m = parse_positive_integer(text, tokens[idx], "checkpoint interval");
        ++idx;
    }

    if (idx >= tokens.size()) fail(text, text.size(), "expected scheme token");
    const Token scheme_tok = tokens[idx];
    if (scheme_tok.text == "unweighted") {
        name.scheme = MergeName::Scheme::Unweighted;
        ++idx;
    } else if (scheme_tok.text == "loss" || scheme_tok.text == "steps") {
        name.scheme = scheme_tok.text == "loss" ? MergeName::Scheme::Loss
                                                : MergeName::Scheme::Steps;
        ++idx;
        if (idx + 1 >= tokens.size()) {
            fail(text, text.size(), "expected penalty factor 'pf-<n>_<d>'");
        }
        name.penalty = parse_penalty(text, tokens[idx], tokens[idx + 1]);
        idx += 2;
    } else {
        fail(text, scheme_tok.offset,
             "expected scheme token 'unweighted', 'loss', or 'steps'");
    }

    if (idx != tokens.size()) {
        fail(text, tokens[idx].offset, "unexpected trailing text");
    }
    return name;
}

std::string format_baseline_name(const BaselineName& name) {
    if (name.method != "ties" && name.method != "dare_ties" && name.method != "slerp") {
        throw ValidationError("unknown merge method '" + name.method + "'");
    }
    std::string out = name.method + "_last_" + std::to_string(name.k);
    if (name.interval_m.has_value()) out += "_" + std::to_string(*name.interval_m);
    out += "_base_" + base_choice_name(name.base);
    return out;
}

BaselineName parse_baseline_name(std::string_view text) {
    const std::vector<Token> tokens = split_tokens(text);
    std::size_t idx = 0;

    BaselineName name;
    if (tokens.size() >= 2 && tokens[0].text == "dare" && tokens[1].text == "ties") {
        name.method = "dare_ties";
        idx = 2;
    } else if (tokens[0].text == "ties" || tokens[0].text == "slerp") {
        name.method = std::string(tokens[0].text);
        idx = 1;
    } else {
        fail(text, 0, "expected method 'ties', 'dare_ties', or 'slerp'");
    }

    if (idx >= tokens.size() || tokens[idx].text != "last") {
        fail(text, idx < tokens.size() ? tokens[idx].offset : text.size(), "expected 'last'");
    }
    ++idx;

    if (idx >= tokens.size()) fail(text, text.size(), "expected checkpoint count");
    name.k = parse_positive_integer(text, tokens[idx], "checkpoint count");
    ++idx;

    if (idx < tokens.size() && all_digits(tokens[idx].text)) {
        name.interval_m = parse_positive_integer(text, tokens[idx], "checkpoint interval");
        ++idx;
    }

    if (idx >= tokens.size() || tokens[idx].text != "base") {
        fail(text, idx < tokens.size() ? tokens[idx].offset : text.size(), "expected 'base'");
    }
    ++idx;

    if (idx >= tokens.size()) fail(text, text.size(), "expected base choice 'first' or 'last'");
    if (tokens[idx].text != "first" && tokens[idx].text != "last") {
        fail(text, tokens[idx].offset, "expected base choice 'first' or 'last'");
    }
    name.base = base_choice_from_name(tokens[idx].text);
    ++idx;

    if (idx != tokens.size()) {
        fail(text, tokens[idx].offset, "unexpected trailing text");
    }
    return name;
}

}  // namespace ckmerge
