#pragma once

#include <string>
#include <string_view>

namespace fog {

std::string sha256_hex(std::string_view data);
std::string read_file(const std::string& path);

}  // namespace fog
