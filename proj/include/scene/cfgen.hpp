#pragma once

// Soft counterfactual generation: mask the significant words, filter the
// fill-mask predictions, and draw K seeded fills.

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "scene/error.hpp"
#include "scene/random.hpp"
#include "scene/text.hpp"
#include "scene/types.hpp"

namespace scene {

inline constexpr std::size_t kDefaultK = 10;
inline constexpr std::size_t kDefaultV = 5;
inline constexpr std::size_t kDefaultCandidatePool = 20;
inline constexpr std::size_t kDefaultMaxRedraws = 10;

struct MaskSlot {
  std::size_t position = 0;  // word-initial token position
  std::string token;         // tokens[position]
  std::string surface;       // the word as it appears in the text being masked

  friend bool operator==(const MaskSlot&, const MaskSlot&) = default;
};

struct MaskedText {
  std::string text;
  // Textual order; one per "[MASK]" in text.
  std::vector<MaskSlot> slots;
  // The original text the masks were cut from (raw text, or its detokenization).
  std::string source;
  bool aligned = true;
};

// Replaces each selected word by "[MASK]". When the tokens align with the raw
// text the mask is spliced into the raw text, leaving every other byte intact;
// otherwise both the source and the masked text come from detokenize().
inline MaskedText mask_text(const Instance& inst, std::span<const ScoredPosition> selected) {
  const auto& tokens = inst.tokens;
  std::set<std::size_t> words;
  for (const auto& s : selected) {
    if (s.position == 0 || s.position + 1 >= tokens.size())
      throw ValidationError("selected position " + std::to_string(s.position) +
                            " out of range for '" + inst.id + "'");
    words.insert(word_extent(tokens, s.position).begin);
  }

  MaskedText out;
  const auto spans = align_tokens(inst.text, tokens);
  if (spans) {
    out.source = inst.text;
    out.text = inst.text;
    for (auto it = words.rbegin(); it != words.rend(); ++it) {
      const auto ext = word_extent(tokens, *it);
      const std::size_t b = (*spans)[ext.begin].begin;
      const std::size_t e = (*spans)[ext.end - 1].end;
      out.slots.push_back({*it, tokens[*it], inst.text.substr(b, e - b)});
      out.text.replace(b, e - b, kMaskMarker);
    }
    std::reverse(out.slots.begin(), out.slots.end());
    return out;
  }

  out.aligned = false;
  out.source = detokenize(tokens);
  std::vector<TokenOverride> overrides;
  for (std::size_t w : words) {
    const auto ext = word_extent(tokens, w);
    std::string surface = tokens[w];
    for (std::size_t p = ext.begin + 1; p < ext.end; ++p)
      surface += std::string_view(tokens[p]).substr(kSubwordPrefix.size());
    out.slots.push_back({w, tokens[w], std::move(surface)});
    overrides.push_back({w, std::string(kMaskMarker)});
  }
  out.text = detokenize(tokens, overrides);
  return out;
}

// Keeps model order; drops non-alphabetic candidates, case-insensitive
// matches of the original, and repeats.
inline std::vector<std::string> filter_substitutes(std::span<const ScoredToken> candidates,
                                                   std::string_view original) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& c : candidates) {
    if (!is_alphabetic(c.token)) continue;
    if (iequals_ascii(c.token, original)) continue;
    if (!seen.insert(c.token).second) continue;
    out.push_back(c.token);
  }
  return out;
}

struct SamplingOptions {
  std::size_t max_redraws = kDefaultMaxRedraws;
};

// Splits text at each "[MASK]"; returns n+1 literal segments for n markers.
inline std::vector<std::string_view> split_masks(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (auto pos = text.find(kMaskMarker); pos != std::string_view::npos;
       pos = text.find(kMaskMarker, start)) {
    parts.push_back(text.substr(start, pos - start));
    start = pos + kMaskMarker.size();
  }
  parts.push_back(text.substr(start));
  return parts;
}

// Draws K counterfactuals. Every mask is filled independently and uniformly
// from its filtered candidates; a mask with none keeps its original word and
// marks the counterfactual as a fallback. A whole-text repeat is re-drawn up
// to max_redraws times, then kept and the set is flagged degenerate.
inline SoftCounterfactualSet sample_counterfactuals(
    const MaskedText& masked, std::span<const std::vector<std::string>> candidates, std::size_t k,
    std::uint64_t seed, SamplingOptions opts = {}) {
  if (k == 0) throw ValidationError("K must be positive");
  if (candidates.size() != masked.slots.size())
    throw ValidationError("one candidate list per mask required");
  const auto parts = split_masks(masked.text);
  if (parts.size() != masked.slots.size() + 1)
    throw ValidationError("mask markers do not match mask slots");
  if (masked.slots.empty()) throw GenerationError("nothing to mask");
  if (std::all_of(candidates.begin(), candidates.end(), [](const auto& c) { return c.empty(); }))
    throw GenerationError("no usable substitute for any mask");

  SoftCounterfactualSet out;
  out.seed = seed;
  Rng rng(seed);
  std::unordered_set<std::string> texts;

  auto draw = [&] {
    Counterfactual cf;
    cf.text.assign(parts[0]);
    for (std::size_t m = 0; m < masked.slots.size(); ++m) {
      const auto& slot = masked.slots[m];
      std::string replacement;
      if (candidates[m].empty()) {
        replacement = slot.surface;
        cf.fallback = true;
      } else {
        replacement = candidates[m][rng.below(candidates[m].size())];
      }
      cf.text += replacement;
      cf.text += parts[m + 1];
      cf.substitutions.push_back({slot.position, slot.token, std::move(replacement)});
    }
    return cf;
  };

  for (std::size_t i = 0; i < k; ++i) {
    Counterfactual cf = draw();
    for (std::size_t attempt = 0; texts.contains(cf.text) && attempt < opts.max_redraws; ++attempt)
      cf = draw();
    if (!texts.insert(cf.text).second) out.degenerate = true;
    out.counterfactuals.push_back(std::move(cf));
  }
  return out;
}

}  // namespace scene
