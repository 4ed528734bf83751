#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nacrf::unicode {

/// NFC-normalizes UTF-8 text. Invalid byte sequences become U+FFFD.
std::string nfc(std::string_view utf8);

/// Splits UTF-8 text into one string per Unicode scalar value.
std::vector<std::string> split_scalars(std::string_view utf8);

std::u32string decode(std::string_view utf8);
std::string encode(char32_t cp);
std::string encode(std::u32string_view cps);

}  // namespace nacrf::unicode
