#pragma once

#include <string>
#include <utility>
#include <vector>

namespace signshield {

/// Line-based `key = value` configuration, keys matching CLI flag names.
/// Blank lines and lines starting with '#' are skipped; keys and values are
/// whitespace-trimmed; entries keep file order (a later duplicate wins when
/// applied in order). A line without '=' or with an empty key is a
/// FormatError naming the line number.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

/// parse_config_text over the file contents; IoError if unreadable.
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path);

}  // namespace signshield
