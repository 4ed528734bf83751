#pragma once

#include <map>
#include <string>

namespace nacrf {

/// Flat `key=value` file; blank lines and `#` comments ignored, whitespace
/// around keys and values trimmed.
std::map<std::string, std::string> load_key_values(const std::string& path);

void save_key_values(const std::string& path, const std::map<std::string, std::string>& values);

}  // namespace nacrf
