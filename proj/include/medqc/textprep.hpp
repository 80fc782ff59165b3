#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medqc/aspects.hpp"

namespace medqc {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kClsId = 1;
inline constexpr TokenId kSepId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr std::size_t kReservedTokens = 4;
inline constexpr std::size_t kDefaultMaxLen = 256;
inline constexpr std::string_view kContinuationPrefix = "##";

// Lowercases and splits on whitespace; every ASCII punctuation character
// becomes its own token.
std::vector<std::string> normalize(std::string_view text);

// Dense token <-> id bijection with [PAD] [CLS] [SEP] [UNK] at ids 0..3.
// Word-initial pieces are stored bare, word-internal pieces carry "##".
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);  // validates layout

  std::size_t size() const { return tokens_.size(); }
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Greedy longest-match segmentation of one word. A word containing a
  // character with no matching piece becomes a single [UNK].
  std::vector<TokenId> word_pieces(std::string_view word) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Piece inventory = whole words ∪ single characters, ranked by frequency
// (ties by piece text), keeping pieces seen at least min_freq times, capped
// at max_size entries including the reserved tokens.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq,
                       std::size_t max_size);

struct LocalEncoding {
  std::vector<TokenId> ids;
  // Word index for each position; -1 on [CLS]/[SEP]/[PAD].
  std::vector<std::int32_t> alignment;
};

struct GlobalEncoding {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> segments;
};

// [CLS] pieces [SEP], content truncated from the right to fit max_len.
LocalEncoding encode_local(const std::vector<std::string>& words, const Vocabulary& vocab,
                           std::size_t max_len = kDefaultMaxLen);

// [CLS] text [SEP] aspects [SEP] (or [CLS] text [SEP] with no aspects).
// Truncation drops text before touching the aspect segment.
GlobalEncoding encode_global(const std::vector<std::string>& words,
                             const std::vector<std::string>& aspect_strs, const Vocabulary& vocab,
                             std::size_t max_len = kDefaultMaxLen);

// Expands the word-level span mask onto encoder positions through the
// alignment. Throws InputError on a span outside [0, words.size()].
std::vector<std::uint8_t> build_mask(const std::vector<std::string>& words,
                                     const std::vector<AspectSpan>& spans,
                                     const std::vector<std::int32_t>& alignment);

// Rejoins pieces into words, dropping reserved tokens other than [UNK].
std::vector<std::string> decode(const std::vector<TokenId>& ids, const Vocabulary& vocab);

// One document ready for the dual encoder.
struct EncodedPair {
  std::vector<TokenId> local_ids;
  std::vector<TokenId> global_ids;
  std::vector<std::uint8_t> segment_ids;  // aligned with global_ids
  std::vector<std::uint8_t> aspect_mask;  // aligned with local_ids
  std::size_t local_len = 0;              // unpadded lengths
  std::size_t global_len = 0;
  std::vector<double> labels;  // one-hot or multi-hot
};

// Appends [PAD] positions (mask 0, segment 0) up to the target lengths.
EncodedPair pad_pair(const EncodedPair& pair, std::size_t local_target, std::size_t global_target);

}  // namespace medqc
