#pragma once
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mlmlab {

// Byte-level vocabularies render raw bytes as printable code points so token
// surface forms are valid UTF-8 text. Printable latin ranges map to
// themselves; everything else is shifted into 0x100+. The space byte maps to
// U+0120 (Ġ), which is why word-initial tokens carry that marker.

inline std::string codepoint_to_utf8(std::uint32_t cp) {
  std::string out;
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
  return out;
}

// Decodes UTF-8 into code points. Throws std::invalid_argument with the byte
// offset of the first malformed sequence.
inline std::vector<std::uint32_t> utf8_to_codepoints(const std::string& s) {
  std::vector<std::uint32_t> cps;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char b = static_cast<unsigned char>(s[i]);
    std::uint32_t cp = 0;
    int extra = 0;
    if (b < 0x80) {
      cp = b;
    } else if ((b & 0xE0) == 0xC0) {
      cp = b & 0x1F;
      extra = 1;
    } else if ((b & 0xF0) == 0xE0) {
      cp = b & 0x0F;
      extra = 2;
    } else if ((b & 0xF8) == 0xF0) {
      cp = b & 0x07;
      extra = 3;
    } else {
      throw std::invalid_argument("invalid UTF-8 at byte offset " + std::to_string(i));
    }
    if (i + extra >= s.size() && extra > 0)
      throw std::invalid_argument("truncated UTF-8 at byte offset " + std::to_string(i));
    for (int k = 1; k <= extra; ++k) {
      unsigned char c = static_cast<unsigned char>(s[i + k]);
      if ((c & 0xC0) != 0x80)
        throw std::invalid_argument("invalid UTF-8 continuation at byte offset " +
                                    std::to_string(i + k));
      cp = (cp << 6) | (c & 0x3F);
    }
    // reject overlong encodings and surrogates
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) ||
        (extra == 3 && cp < 0x10000) || (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF)
      throw std::invalid_argument("invalid UTF-8 scalar at byte offset " + std::to_string(i));
    cps.push_back(cp);
    i += 1 + extra;
  }
  return cps;
}

inline bool is_valid_utf8(const std::string& s) {
  try {
    utf8_to_codepoints(s);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

// the Ġ marker code point (mapped image of byte 0x20)
inline constexpr std::uint32_t kSpaceMarker = 0x120;

struct ByteUnicodeMap {
  std::array<std::uint32_t, 256> byte_to_cp{};
  std::unordered_map<std::uint32_t, std::uint8_t> cp_to_byte;

  ByteUnicodeMap() {
    std::vector<int> printable;
    for (int b = 0x21; b <= 0x7E; ++b) printable.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) printable.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) printable.push_back(b);
    std::array<bool, 256> direct{};
    for (int b : printable) direct[static_cast<std::size_t>(b)] = true;
    std::uint32_t shift = 0;
    for (int b = 0; b < 256; ++b) {
      std::uint32_t cp;
      if (direct[static_cast<std::size_t>(b)]) {
        cp = static_cast<std::uint32_t>(b);
      } else {
        cp = 256 + shift++;
      }
      byte_to_cp[static_cast<std::size_t>(b)] = cp;
      cp_to_byte.emplace(cp, static_cast<std::uint8_t>(b));
    }
  }
};

inline const ByteUnicodeMap& byte_unicode_map() {
  static const ByteUnicodeMap m;
  return m;
}

// raw bytes -> rendered surface text
inline std::string bytes_to_surface(const std::string& raw) {
  const auto& m = byte_unicode_map();
  std::string out;
  out.reserve(raw.size() * 2);
  for (unsigned char b : raw) out += codepoint_to_utf8(m.byte_to_cp[b]);
  return out;
}

// rendered surface text -> raw bytes; throws on code points outside the map
inline std::string surface_to_bytes(const std::string& surface) {
  const auto& m = byte_unicode_map();
  std::string out;
  for (std::uint32_t cp : utf8_to_codepoints(surface)) {
    auto it = m.cp_to_byte.find(cp);
    if (it == m.cp_to_byte.end())
      throw std::invalid_argument("surface code point outside byte map: " + std::to_string(cp));
    out.push_back(static_cast<char>(it->second));
  }
  return out;
}

// strips one leading Ġ from a rendered surface, returns code points
inline std::vector<std::uint32_t> stripped_codepoints(const std::string& surface) {
  auto cps = utf8_to_codepoints(surface);
  if (!cps.empty() && cps.front() == kSpaceMarker) cps.erase(cps.begin());
  return cps;
}

inline std::string codepoints_to_utf8(const std::vector<std::uint32_t>& cps, std::size_t begin,
                                      std::size_t count) {
  std::string out;
  for (std::size_t i = begin; i < begin + count && i < cps.size(); ++i)
    out += codepoint_to_utf8(cps[i]);
  return out;
}

}  // namespace mlmlab
