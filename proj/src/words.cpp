#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>
#include <vector>

#include "dal/words.hpp"

namespace dal::data {

int levenshtein(const std::string& a, const std::string& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

namespace {

// American Soundex digit for a letter; 0 = vowel-ish separator, -1 = h/w (transparent).
int soundex_code(char lc) {
    switch (lc) {
        case 'b': case 'f': case 'p': case 'v': return 1;
        case 'c': case 'g': case 'j': case 'k': case 'q': case 's': case 'x': case 'z': return 2;
        case 'd': case 't': return 3;
        case 'l': return 4;
        case 'm': case 'n': return 5;
        case 'r': return 6;
        case 'h': case 'w': return -1;
        default: return 0; // a e i o u y
    }
}

} // namespace

std::string soundex(const std::string& word) {
    if (word.empty()) throw std::invalid_argument("soundex: empty word");
    for (char c : word)
        if (!std::isalpha(static_cast<unsigned char>(c)))
            throw std::invalid_argument("soundex: word must be ASCII alphabetic, got '" + word +
                                        "'");
    std::string out;
    out += static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    int last = soundex_code(static_cast<char>(std::tolower(static_cast<unsigned char>(word[0]))));
    for (size_t i = 1; i < word.size() && out.size() < 4; ++i) {
        const int code =
            soundex_code(static_cast<char>(std::tolower(static_cast<unsigned char>(word[i]))));
        if (code < 0) continue; // h/w: transparent, previous code survives across them
        if (code == 0) {        // vowel: emits nothing but separates duplicates
            last = 0;
            continue;
        }
        if (code != last) out += static_cast<char>('0' + code);
        last = code;
    }
    out.resize(4, '0');
    return out;
}

int word_distance(const std::string& a, const std::string& b) {
    return levenshtein(a, b) + levenshtein(soundex(a), soundex(b));
}

std::vector<std::string> select_words(const std::vector<std::string>& candidates, int k) {
    if (k < 2) throw std::invalid_argument("select_words: k must be >= 2");
    if (static_cast<size_t>(k) > candidates.size())
        throw std::invalid_argument("select_words: k exceeds candidate count");

    // sort a working copy so "first strictly better wins" == lexicographic tie-break
    std::vector<std::string> pool(candidates);
    std::sort(pool.begin(), pool.end());
    const int n = static_cast<int>(pool.size());

    std::vector<std::vector<int>> score(static_cast<size_t>(n),
                                        std::vector<int>(static_cast<size_t>(n), 0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            score[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                score[static_cast<size_t>(j)][static_cast<size_t>(i)] =
                    word_distance(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);

    // seed with the highest-scoring pair
    int bi = 0, bj = 1, best = -1;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (score[static_cast<size_t>(i)][static_cast<size_t>(j)] > best) {
                best = score[static_cast<size_t>(i)][static_cast<size_t>(j)];
                bi = i;
                bj = j;
            }
    std::vector<bool> picked(static_cast<size_t>(n), false);
    picked[static_cast<size_t>(bi)] = picked[static_cast<size_t>(bj)] = true;
    int count = 2;

    // grow greedily: maximize the candidate's minimum score to the chosen set
    while (count < k) {
        int arg = -1, argmin = -1;
        for (int i = 0; i < n; ++i) {
            if (picked[static_cast<size_t>(i)]) continue;
            int mn = INT32_MAX;
            for (int j = 0; j < n; ++j)
                if (picked[static_cast<size_t>(j)])
                    mn = std::min(mn, score[static_cast<size_t>(i)][static_cast<size_t>(j)]);
            if (mn > argmin) {
                argmin = mn;
                arg = i;
            }
        }
        picked[static_cast<size_t>(arg)] = true;
        ++count;
    }

    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < n; ++i)
        if (picked[static_cast<size_t>(i)]) out.push_back(pool[static_cast<size_t>(i)]);
    return out; // pool is sorted, so out is too
}

const std::vector<std::string>& demo_word_pool() {
    static const std::vector<std::string> pool = {
        "apple", "ball", "cat",  "dog", "echo", "fish", "gold", "hat",  "ice", "jump",
        "kite",  "lamp", "moon", "nose", "owl", "pig",  "quiz", "rain", "sun", "tree"};
    return pool;
}

} // namespace dal::data
