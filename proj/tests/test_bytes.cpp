#include <doctest.h>

#include <string>

#include "mlmlab/bytes.hpp"
#include "mlmlab/rng.hpp"

using namespace mlmlab;

TEST_CASE("byte map covers all 256 bytes bijectively") {
  const auto& m = byte_unicode_map();
  CHECK(m.cp_to_byte.size() == 256);
  for (int b = 0; b < 256; ++b) {
    auto cp = m.byte_to_cp[static_cast<std::size_t>(b)];
    REQUIRE(m.cp_to_byte.count(cp) == 1);
    CHECK(m.cp_to_byte.at(cp) == b);
  }
  CHECK(m.byte_to_cp[0x20] == kSpaceMarker);
  CHECK(m.byte_to_cp['a'] == 'a');  // printable bytes map to themselves
}

TEST_CASE("surface rendering round-trips arbitrary byte strings") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::string raw;
    auto len = rng.next_below(64);
    for (std::uint64_t i = 0; i < len; ++i)
      raw.push_back(static_cast<char>(rng.next_below(256)));
    std::string surface = bytes_to_surface(raw);
    CHECK(is_valid_utf8(surface));
    CHECK(surface_to_bytes(surface) == raw);
  }
}

TEST_CASE("utf8 codec round-trips and rejects malformed input") {
  std::string text = "héllo → wörld 🙂";
  auto cps = utf8_to_codepoints(text);
  CHECK(codepoints_to_utf8(cps, 0, cps.size()) == text);

  CHECK(!is_valid_utf8("\xff"));
  CHECK(!is_valid_utf8("\xc3"));          // truncated two-byte sequence
  CHECK(!is_valid_utf8("\xc0\xaf"));      // overlong
  CHECK(!is_valid_utf8("\xed\xa0\x80"));  // surrogate
  CHECK_THROWS_WITH_AS(utf8_to_codepoints("ab\xff"), doctest::Contains("byte offset 2"),
                       std::invalid_argument);
}

TEST_CASE("stripped_codepoints removes exactly one leading marker") {
  std::string g = codepoint_to_utf8(kSpaceMarker);
  CHECK(stripped_codepoints(g + "hi").size() == 2);
  CHECK(stripped_codepoints(g + g + "x").size() == 2);  // only the first marker
  CHECK(stripped_codepoints("hi").size() == 2);
  CHECK(stripped_codepoints(g).empty());
}
