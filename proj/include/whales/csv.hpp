#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace whales::csv
{
	// RFC 4180 field quoting: quotes only when the field holds a comma, quote or line break.
	std::string escape(std::string_view field);
	std::string join(const std::vector<std::string> &fields);

	std::vector<std::vector<std::string>> parse(std::string_view text);
	std::vector<std::vector<std::string>> read_file(const std::filesystem::path &path);

	// Header row to column index, with names lower-cased and trimmed.
	std::map<std::string, std::size_t> header_index(const std::vector<std::string> &header);
} // namespace whales::csv
