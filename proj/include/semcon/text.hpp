#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace semcon {

std::string trim(std::string_view s);

/// ASCII lowercase copy; bytes outside A-Z pass through untouched.
std::string casefold(std::string_view s);

/// Whitespace-separated tokens, case-folded. Used by the paraphrase
/// edit-distance and the deterministic test embedder.
std::vector<std::string> word_tokens(std::string_view text);

/// word_tokens with punctuation stripped from token edges; tokens that are
/// punctuation-only are dropped. Used by the n-gram/LCS metrics.
std::vector<std::string> metric_tokens(std::string_view text);

}  // namespace semcon
