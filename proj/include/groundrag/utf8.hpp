#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace groundrag::utf8 {

// Decodes UTF-8, replacing each invalid or truncated sequence with U+FFFD.
// `replacements`, when given, receives the number of substitutions made.
std::u32string decode(std::string_view bytes, std::size_t* replacements = nullptr);

std::string encode(std::u32string_view text);

// Code-point count of already-valid UTF-8.
std::size_t length(std::string_view text);

bool is_space(char32_t c);
bool is_word_char(char32_t c);
char32_t to_lower(char32_t c);

}  // namespace groundrag::utf8
