#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace drivepoison::text {

std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

/// Case-insensitive substring test.
bool icontains(std::string_view haystack, std::string_view needle);

/// Non-overlapping, case-sensitive occurrences of `needle`.
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

/// True when `word` occurs in `s` bounded by non-word characters
/// (word characters are [A-Za-z0-9_]). Case-insensitive.
bool contains_word(std::string_view s, std::string_view word);

std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view s);

/// Replaces every `{name}` whose name is a key of `values`. Unknown
/// placeholders are left untouched.
std::string expand_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Byte offsets one past each sentence terminator ('.', '!' or '?' followed by
/// whitespace or end of text). "25.0" does not terminate a sentence.
std::vector<std::size_t> sentence_ends(std::string_view s);

/// Lowercase alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view s);

}  // namespace drivepoison::text
