#pragma once

#include <string>
#include <string_view>

namespace corpusforge {

// Lowercase hex SHA-256 of the raw bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace corpusforge
