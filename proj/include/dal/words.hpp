#pragma once

#include <string>
#include <vector>

namespace dal::data {

// Unit-cost edit distance.
int levenshtein(const std::string& a, const std::string& b);

// American Soundex: first letter + three digits, h/w transparent, vowels
// break runs, zero-padded. Throws on empty or non-alphabetic input.
std::string soundex(const std::string& word);

// Phonetic-plus-orthographic separation used to pick the task words.
int word_distance(const std::string& a, const std::string& b);

// Greedy max-min selection of k mutually distant words; deterministic with
// lexicographic tie-breaking; result sorted lexicographically.
std::vector<std::string> select_words(const std::vector<std::string>& candidates, int k);

// The 20-word demonstration pool shipped with the toolkit.
const std::vector<std::string>& demo_word_pool();

} // namespace dal::data
