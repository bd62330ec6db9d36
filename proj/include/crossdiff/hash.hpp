#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace crossdiff {

/// 16 hex chars of BLAKE2b-64 over the bytes.
std::string hash_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
/// Throws ValidationError on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace crossdiff
