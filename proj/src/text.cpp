#include "semcon/text.hpp"

#include <cctype>

namespace semcon {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string trim(std::string_view s) {
    size_t b = 0;
    while (b < s.size() && is_space(s[b])) ++b;
    size_t e = s.size();
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string casefold(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) tokens.push_back(casefold(text.substr(start, i - start)));
    }
    return tokens;
}

std::vector<std::string> metric_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    for (std::string& tok : word_tokens(text)) {
        size_t b = 0, e = tok.size();
        while (b < e && is_punct(tok[b])) ++b;
        while (e > b && is_punct(tok[e - 1])) --e;
        if (e > b) tokens.push_back(tok.substr(b, e - b));
    }
    return tokens;
}

}  // namespace semcon
