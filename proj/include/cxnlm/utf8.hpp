#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cxnlm::utf8 {

// Byte offset of the first invalid sequence, or nullopt if `s` is valid UTF-8.
std::optional<std::size_t> find_invalid(std::string_view s);

// Decodes to code points. Throws IngestError naming the byte offset on
// invalid input.
std::vector<char32_t> decode(std::string_view s);

void append(std::string& out, char32_t cp);
std::string encode(char32_t cp);
std::string encode(const std::vector<char32_t>& cps);

// Number of code points; `s` must be valid.
std::size_t length(std::string_view s);

}  // namespace cxnlm::utf8
