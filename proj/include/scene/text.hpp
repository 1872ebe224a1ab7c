#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scene {

inline constexpr std::string_view kMaskMarker = "[MASK]";
inline constexpr std::string_view kSubwordPrefix = "##";

inline bool is_subword(std::string_view token) noexcept { return token.starts_with(kSubwordPrefix); }

namespace detail {

// Decodes one UTF-8 code point starting at s[i]; returns false on malformed input.
inline bool next_code_point(std::string_view s, std::size_t& i, char32_t& cp) noexcept {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len;
  if (b0 < 0x80) {
    cp = b0;
    len = 1;
  } else if ((b0 & 0xE0) == 0xC0) {
    cp = b0 & 0x1F;
    len = 2;
  } else if ((b0 & 0xF0) == 0xE0) {
    cp = b0 & 0x0F;
    len = 3;
  } else if ((b0 & 0xF8) == 0xF0) {
    cp = b0 & 0x07;
    len = 4;
  } else {
    return false;
  }
  if (i + len > s.size()) return false;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return false;
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return true;
}

// ASCII letters, Latin-1/Latin Extended letters, Greek and Cyrillic.
inline bool is_letter(char32_t cp) noexcept {
  if ((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z')) return true;
  if (cp >= 0xC0 && cp <= 0x24F) return cp != 0xD7 && cp != 0xF7;
  if (cp >= 0x370 && cp <= 0x52F) return cp != 0x37E && cp != 0x387;
  return false;
}

inline char ascii_lower(char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace detail

// True when every code point is a letter. "##", digits, punctuation and
// bracketed markers such as "[CLS]" all fail.
inline bool is_alphabetic(std::string_view token) noexcept {
  if (token.empty()) return false;
  std::size_t i = 0;
  while (i < token.size()) {
    char32_t cp;
    if (!detail::next_code_point(token, i, cp) || !detail::is_letter(cp)) return false;
  }
  return true;
}

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = detail::ascii_lower(c);
  return out;
}

inline bool iequals_ascii(std::string_view a, std::string_view b) noexcept {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (detail::ascii_lower(a[i]) != detail::ascii_lower(b[i])) return false;
  return true;
}

// Half-open byte range into a string.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

// Locates every content token (all but first and last) in the raw text.
// Matching skips whitespace, is ASCII case-insensitive, and requires "##"
// pieces to follow the previous piece with no gap. Returns nullopt when the
// tokens are not a case-folded cover of the text (e.g. [UNK], stripped accents).
inline std::optional<std::vector<Span>> align_tokens(std::string_view text,
                                                     std::span<const std::string> tokens) {
  std::vector<Span> spans(tokens.size(), Span{std::string_view::npos, std::string_view::npos});
  if (tokens.size() < 2) return spans;
  std::size_t pos = 0;
  for (std::size_t t = 1; t + 1 < tokens.size(); ++t) {
    std::string_view tok = tokens[t];
    const bool piece = is_subword(tok);
    if (piece) {
      tok.remove_prefix(kSubwordPrefix.size());
      if (t == 1) return std::nullopt;
    } else {
      while (pos < text.size() && detail::is_space(text[pos])) ++pos;
    }
    if (tok.empty() || pos + tok.size() > text.size()) return std::nullopt;
    if (!iequals_ascii(text.substr(pos, tok.size()), tok)) return std::nullopt;
    spans[t] = Span{pos, pos + tok.size()};
    pos += tok.size();
  }
  for (; pos < text.size(); ++pos)
    if (!detail::is_space(text[pos])) return std::nullopt;
  return spans;
}

// Positions of the whole word containing `position`: the word-initial piece
// plus every following "##" piece.
inline Span word_extent(std::span<const std::string> tokens, std::size_t position) {
  std::size_t first = position;
  while (first > 0 && is_subword(tokens[first])) --first;
  std::size_t last = position + 1;
  while (last < tokens.size() && is_subword(tokens[last])) ++last;
  return {first, last};
}

// Detokenization rule table, applied left to right to the content tokens:
//   "##x"                     appended to the previous word without a space, prefix dropped
//   , . ! ? ; : ) ] } %       attached to the previous token
//   '                         attached to the previous token
//   s t d m re ve ll after '  attached (contractions: it ' s -> it's)
//   ( [ {                     the next token attaches to it
// Everything else is separated by one space. A replacement list maps token
// positions to substitute words ("[MASK]", counterfactual fills).
struct TokenOverride {
  std::size_t position;
  std::string text;
};

inline std::string detokenize(std::span<const std::string> tokens,
                              std::span<const TokenOverride> overrides = {}) {
  auto is_closing = [](std::string_view t) {
    return t == "," || t == "." || t == "!" || t == "?" || t == ";" || t == ":" || t == ")" ||
           t == "]" || t == "}" || t == "%" || t == "'";
  };
  auto is_opening = [](std::string_view t) { return t == "(" || t == "[" || t == "{"; };
  auto is_contraction_tail = [](std::string_view t) {
    return t == "s" || t == "t" || t == "d" || t == "m" || t == "re" || t == "ve" || t == "ll";
  };

  auto override_for = [&](std::size_t t) -> const TokenOverride* {
    const TokenOverride* found = nullptr;
    for (const auto& o : overrides)
      if (word_extent(tokens, o.position).begin == t) found = &o;
    return found;
  };

  std::string out;
  std::string_view prev;
  bool first = true;
  bool skipping_pieces = false;
  for (std::size_t t = 1; t + 1 < tokens.size(); ++t) {
    const std::string_view raw = tokens[t];
    if (is_subword(raw)) {
      if (skipping_pieces) continue;
      out += raw.substr(kSubwordPrefix.size());
      prev = raw;
      first = false;
      continue;
    }
    const TokenOverride* ov = override_for(t);
    skipping_pieces = ov != nullptr;
    const bool attach = !first && (is_closing(raw) || is_opening(prev) ||
                                   (prev == "'" && is_contraction_tail(raw)));
    if (!first && !attach) out += ' ';
    out += ov ? std::string_view(ov->text) : raw;
    prev = raw;
    first = false;
  }
  return out;
}

}  // namespace scene
