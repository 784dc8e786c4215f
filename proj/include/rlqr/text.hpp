#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rlqr/common.hpp"

namespace rlqr {

enum class TokenizerMode { word, word_cjk_bigram };

inline bool is_cjk(char32_t c) {
  return (c >= 0xAC00 && c <= 0xD7AF)     // Hangul syllables
         || (c >= 0x1100 && c <= 0x11FF)  // Hangul jamo
         || (c >= 0x3130 && c <= 0x318F)  // Hangul compatibility jamo
         || (c >= 0x3040 && c <= 0x30FF)  // Hiragana, Katakana
         || (c >= 0x3400 && c <= 0x4DBF)  // CJK extension A
         || (c >= 0x4E00 && c <= 0x9FFF)  // CJK unified ideographs
         || (c >= 0xF900 && c <= 0xFAFF);  // CJK compatibility ideographs
}

inline bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  return (c >= 0x00A1 && c <= 0x00BF) || c == 0x00D7 || c == 0x00F7 ||
         (c >= 0x2010 && c <= 0x206F) || (c >= 0x3000 && c <= 0x303F) ||
         (c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) ||
         (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65) || c == 0xFFFD;
}

inline char32_t ascii_lower(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + 32 : c; }

namespace detail {

inline void emit_bigrams(std::u32string_view run, std::vector<std::string>& out) {
  if (run.size() == 1) {
    out.push_back(utf8::encode(run));
    return;
  }
  for (std::size_t i = 0; i + 1 < run.size(); ++i) out.push_back(utf8::encode(run.substr(i, 2)));
}

// Splits a word into maximal CJK / non-CJK runs; CJK runs become bigrams.
inline void emit_word(std::u32string_view word, TokenizerMode mode, std::vector<std::string>& out) {
  if (word.empty()) return;
  if (mode == TokenizerMode::word) {
    out.push_back(utf8::encode(word));
    return;
  }
  std::size_t i = 0;
  while (i < word.size()) {
    const bool cjk = is_cjk(word[i]);
    std::size_t j = i + 1;
    while (j < word.size() && is_cjk(word[j]) == cjk) ++j;
    const auto run = word.substr(i, j - i);
    if (cjk) {
      emit_bigrams(run, out);
    } else if (!(run.size() == 1 && run[0] == U'+')) {
      out.push_back(utf8::encode(run));
    }
    i = j;
  }
}

}  // namespace detail

/// Lowercases (ASCII) and splits on whitespace and punctuation. '+' survives
/// when it follows other word characters ("U+" -> "u+", "c++" -> "c++"). In
/// bigram mode each maximal CJK run is replaced by its character bigrams.
inline std::vector<std::string> tokenize(std::string_view text,
                                         TokenizerMode mode = TokenizerMode::word) {
  std::vector<std::string> out;
  std::u32string word;
  for (char32_t c : utf8::decode(text)) {
    if (c == U'+' && !word.empty()) {
      word.push_back(c);
    } else if (is_space(c) || is_punct(c)) {
      detail::emit_word(word, mode, out);
      word.clear();
    } else {
      word.push_back(ascii_lower(c));
    }
  }
  detail::emit_word(word, mode, out);
  return out;
}

inline bool contains_cjk(std::string_view term) {
  for (char32_t c : utf8::decode(term)) {
    if (is_cjk(c)) return true;
  }
  return false;
}

inline std::string_view to_string(TokenizerMode m) {
  return m == TokenizerMode::word ? "word" : "word+cjk_bigram";
}

inline TokenizerMode tokenizer_mode_from_string(std::string_view s) {
  if (s == "word") return TokenizerMode::word;
  if (s == "word+cjk_bigram" || s == "cjk_bigram") return TokenizerMode::word_cjk_bigram;
  throw Error("unknown tokenizer mode: " + std::string(s));
}

}  // namespace rlqr
