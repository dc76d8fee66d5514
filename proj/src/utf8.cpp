#include "groundrag/utf8.hpp"

namespace groundrag::utf8 {

namespace {
constexpr char32_t kReplacement = 0xFFFD;

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }
}  // namespace

std::u32string decode(std::string_view bytes, std::size_t* replacements) {
    std::u32string out;
    out.reserve(bytes.size());
    std::size_t replaced = 0;
    std::size_t i = 0;
    const std::size_t n = bytes.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(bytes[i]);
        if (c < 0x80) {
            out.push_back(c);
            ++i;
            continue;
        }
        std::size_t need = 0;
        char32_t cp = 0;
        char32_t min_cp = 0;
        if (c >= 0xC2 && c <= 0xDF) {
            need = 1;
            cp = c & 0x1F;
            min_cp = 0x80;
        } else if (c >= 0xE0 && c <= 0xEF) {
            need = 2;
            cp = c & 0x0F;
            min_cp = 0x800;
        } else if (c >= 0xF0 && c <= 0xF4) {
            need = 3;
            cp = c & 0x07;
            min_cp = 0x10000;
        } else {
            out.push_back(kReplacement);
            ++replaced;
            ++i;
            continue;
        }
        std::size_t k = 1;
        for (; k <= need && i + k < n; ++k) {
            const auto cc = static_cast<unsigned char>(bytes[i + k]);
            if (!is_continuation(cc)) break;
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (k <= need || cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            // Skip the lead byte plus whatever continuation bytes were consumed.
            out.push_back(kReplacement);
            ++replaced;
            i += (k <= need) ? k : need + 1;
            continue;
        }
        out.push_back(cp);
        i += need + 1;
    }
    if (replacements) *replacements = replaced;
    return out;
}

std::string encode(std::u32string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char32_t cp : text) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

std::size_t length(std::string_view text) {
    std::size_t count = 0;
    for (char c : text) {
        if (!is_continuation(static_cast<unsigned char>(c))) ++count;
    }
    return count;
}

bool is_space(char32_t c) {
    switch (c) {
        case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029: case 0x202F:
        case 0x205F: case 0x3000:
            return true;
        default:
            return c >= 0x2000 && c <= 0x200A;
    }
}

bool is_word_char(char32_t c) {
    if (c < 0x80) {
        return (c >= U'0' && c <= U'9') || (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') ||
               c == U'_';
    }
    if (is_space(c)) return false;
    // Latin-1 punctuation and symbols, general punctuation, CJK symbols.
    if (c >= 0xA1 && c <= 0xBF) return false;
    if (c == 0xD7 || c == 0xF7) return false;
    if (c >= 0x2010 && c <= 0x206F) return false;
    if (c >= 0x3000 && c <= 0x303F) return false;
    if (c == kReplacement) return false;
    return true;
}

char32_t to_lower(char32_t c) {
    if (c >= U'A' && c <= U'Z') return c + 32;
    if (c < 0xC0) return c;
    // Latin-1 supplement (covers ä, ö, å).
    if (c <= 0xDE && c != 0xD7) return c + 32;
    // Latin Extended-A pairs (š, ž, ...), excluding the irregular range.
    if (c >= 0x100 && c <= 0x137 && (c % 2 == 0)) return c + 1;
    if (c >= 0x139 && c <= 0x148 && (c % 2 == 1)) return c + 1;
    if (c >= 0x14A && c <= 0x177 && (c % 2 == 0)) return c + 1;
    if (c == 0x178) return 0xFF;
    if (c == 0x179 || c == 0x17B || c == 0x17D) return c + 1;
    // Greek and Cyrillic basic blocks.
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
    if (c >= 0x410 && c <= 0x42F) return c + 32;
    if (c >= 0x400 && c <= 0x40F) return c + 80;
    return c;
}

}  // namespace groundrag::utf8
