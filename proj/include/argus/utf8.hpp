#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace argus::utf8 {

// Span offsets count Unicode scalar values, not bytes. These helpers convert
// between the two on UTF-8 strings. Invalid lead bytes advance one byte and
// count as one scalar so malformed input still yields total offsets.

inline bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

inline std::size_t sequence_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead & 0xE0) == 0xC0) return 2;
    if ((lead & 0xF0) == 0xE0) return 3;
    if ((lead & 0xF8) == 0xF0) return 4;
    return 1;
}

inline std::size_t length(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size();) {
        i += sequence_length(static_cast<unsigned char>(s[i]));
        ++n;
    }
    return n;
}

// Byte offset of the scalar at scalar-index `pos`; s.size() when pos is past
// the end.
inline std::size_t scalar_to_byte(std::string_view s, std::size_t pos) {
    std::size_t i = 0;
    for (std::size_t n = 0; n < pos && i < s.size(); ++n)
        i += sequence_length(static_cast<unsigned char>(s[i]));
    return i < s.size() ? i : s.size();
}

inline std::size_t byte_to_scalar(std::string_view s, std::size_t byte) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < byte && i < s.size(); ++n)
        i += sequence_length(static_cast<unsigned char>(s[i]));
    return n;
}

// Substring by scalar offsets [start, end).
inline std::string slice(std::string_view s, std::size_t start, std::size_t end) {
    std::size_t b0 = scalar_to_byte(s, start);
    std::size_t b1 = scalar_to_byte(s, end);
    if (b1 < b0) b1 = b0;
    return std::string(s.substr(b0, b1 - b0));
}

} // namespace argus::utf8
