#pragma once

#include <string>

namespace sleb {

// Shortest round-trip representation; locale-independent.
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace sleb
