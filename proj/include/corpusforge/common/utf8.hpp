#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace corpusforge::utf8 {

bool is_valid(std::string_view text);

// Decodes strict UTF-8. Throws ValidationError on malformed input.
std::u32string decode(std::string_view text);

void append(std::string& out, char32_t cp);
std::string encode(std::u32string_view cps);

// Number of Unicode scalar values. Throws on malformed input.
std::size_t count_scalars(std::string_view text);

// Full-width ASCII variants (U+FF01..U+FF5E) and the ideographic space map to
// their half-width forms. Everything else is untouched.
char32_t to_half_width(char32_t cp);
std::string normalize_width(std::string_view text);

// ASCII-only lowercase; non-ASCII bytes pass through.
std::string fold_ascii_case(std::string_view text);

// First `n` scalar values of `text` (whole text when shorter).
std::string prefix_scalars(std::string_view text, std::size_t n);

}  // namespace corpusforge::utf8
