#include "whales/csv.hpp"

#include "whales/types.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace whales::csv
{
	std::string escape(std::string_view field)
	{
		if (field.find_first_of(",\"\r\n") == std::string_view::npos)
			return std::string(field);
		std::string out = "\"";
		for (char c : field)
		{
			if (c == '"')
				out += '"';
			out += c;
		}
		out += '"';
		return out;
	}

	std::string join(const std::vector<std::string> &fields)
	{
		std::string line;
		for (std::size_t i = 0; i < fields.size(); ++i)
		{
			if (i)
				line += ',';
			line += escape(fields[i]);
		}
		return line;
	}

	std::vector<std::vector<std::string>> parse(std::string_view text)
	{
		std::vector<std::vector<std::string>> rows;
		std::vector<std::string> row;
		std::string field;
		bool quoted = false;
		bool any = false;
		for (std::size_t i = 0; i < text.size(); ++i)
		{
			const char c = text[i];
			if (quoted)
			{
				if (c == '"')
				{
					if (i + 1 < text.size() && text[i + 1] == '"')
					{
						field += '"';
						++i;
					}
					else
						quoted = false;
				}
				else
					field += c;
				continue;
			}
			switch (c)
			{
			case '"':
				quoted = true;
				any = true;
				break;
			case ',':
				row.push_back(std::move(field));
				field.clear();
				any = true;
				break;
			case '\r':
				break;
			case '\n':
				if (any || !field.empty())
				{
					row.push_back(std::move(field));
					rows.push_back(std::move(row));
				}
				row.clear();
				field.clear();
				any = false;
				break;
			default:
				field += c;
				any = true;
			}
		}
		if (quoted)
			throw InputError("unterminated quoted CSV field");
		if (any || !field.empty())
		{
			row.push_back(std::move(field));
			rows.push_back(std::move(row));
		}
		return rows;
	}

	std::vector<std::vector<std::string>> read_file(const std::filesystem::path &path)
	{
		std::ifstream in(path, std::ios::binary);
		if (!in)
			throw InputError("cannot read CSV: " + path.string());
		std::stringstream ss;
		ss << in.rdbuf();
		return parse(ss.str());
	}

	std::map<std::string, std::size_t> header_index(const std::vector<std::string> &header)
	{
		std::map<std::string, std::size_t> index;
		for (std::size_t i = 0; i < header.size(); ++i)
		{
			std::string name;
			for (unsigned char c : header[i])
				if (!std::isspace(c))
					name.push_back(static_cast<char>(std::tolower(c)));
			index.emplace(name, i);
		}
		return index;
	}
} // namespace whales::csv
