#include "medqc/textprep.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "medqc/error.hpp"
#include "medqc/io.hpp"
#include "medqc/utf8.hpp"

namespace medqc {

namespace {

constexpr std::string_view kReserved[] = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

bool is_reserved(TokenId id) { return id >= 0 && static_cast<std::size_t>(id) < kReservedTokens; }

}  // namespace

std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      words.emplace_back(1, c);
    } else {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  flush();
  return words;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>(std::begin(kReserved), std::end(kReserved))) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReservedTokens) throw InputError("vocabulary lacks reserved tokens");
  for (std::size_t i = 0; i < kReservedTokens; ++i) {
    if (tokens_[i] != kReserved[i]) {
      throw InputError("reserved token " + std::string(kReserved[i]) + " must have id " + std::to_string(i));
    }
  }
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw InputError("empty vocabulary token at id " + std::to_string(i));
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw InputError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::word_pieces(std::string_view word) const {
  std::vector<TokenId> pieces;
  if (word.empty()) return pieces;
  if (auto whole = find(word)) {
    pieces.push_back(*whole);
    return pieces;
  }
  const auto chars = utf8::split_chars(word);
  std::size_t start = 0;
  std::string candidate;
  while (start < chars.size()) {
    std::optional<TokenId> match;
    std::size_t end = chars.size();
    for (; end > start; --end) {
      candidate.clear();
      if (start > 0) candidate.append(kContinuationPrefix);
      const char* b = chars[start].data();
      const char* e = chars[end - 1].data() + chars[end - 1].size();
      candidate.append(b, e);
      match = find(candidate);
      if (match) break;
    }
    if (!match) return {kUnkId};
    pieces.push_back(*match);
    start = end;
  }
  return pieces;
}

void Vocabulary::save(const std::string& path) const {
  std::ostringstream out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
  io::write_file(path, out.str());
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  std::vector<std::string> tokens;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError(path, line_no, "expected token<TAB>id");
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError(path, line_no, "bad id");
    }
    if (id != tokens.size()) throw ParseError(path, line_no, "ids must be dense and ascending");
    tokens.push_back(line.substr(0, tab));
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq,
                       std::size_t max_size) {
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  if (max_size < kReservedTokens) throw InputError("max_size must leave room for reserved tokens");

  std::map<std::string, std::size_t> word_counts;
  for (const auto& doc : corpus) {
    for (const auto& w : doc) ++word_counts[w];
  }

  std::map<std::string, std::size_t> piece_counts;
  for (const auto& [word, count] : word_counts) {
    piece_counts[word] += count;
    const auto chars = utf8::split_chars(word);
    if (chars.size() < 2) continue;
    for (std::size_t i = 0; i < chars.size(); ++i) {
      std::string piece = i == 0 ? std::string(chars[i])
                                 : std::string(kContinuationPrefix) + std::string(chars[i]);
      piece_counts[piece] += count;
    }
  }
  for (auto r : kReserved) piece_counts.erase(std::string(r));

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [piece, count] : piece_counts) {
    if (count >= min_freq) ranked.emplace_back(piece, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens(std::begin(kReserved), std::end(kReserved));
  for (const auto& [piece, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(piece);
  }
  return Vocabulary(std::move(tokens));
}

LocalEncoding encode_local(const std::vector<std::string>& words, const Vocabulary& vocab,
                           std::size_t max_len) {
  if (max_len < 2) throw InputError("max_len must be >= 2 for the local encoding");
  LocalEncoding enc;
  enc.ids.push_back(kClsId);
  enc.alignment.push_back(-1);
  const std::size_t budget = max_len - 2;
  for (std::size_t w = 0; w < words.size() && enc.ids.size() - 1 < budget; ++w) {
    for (TokenId id : vocab.word_pieces(words[w])) {
      if (enc.ids.size() - 1 >= budget) break;
      enc.ids.push_back(id);
      enc.alignment.push_back(static_cast<std::int32_t>(w));
    }
  }
  enc.ids.push_back(kSepId);
  enc.alignment.push_back(-1);
  return enc;
}

GlobalEncoding encode_global(const std::vector<std::string>& words,
                             const std::vector<std::string>& aspect_strs, const Vocabulary& vocab,
                             std::size_t max_len) {
  if (max_len < 3) throw InputError("max_len must be >= 3 for the global encoding");
  std::vector<TokenId> text;
  for (const auto& w : words) {
    auto p = vocab.word_pieces(w);
    text.insert(text.end(), p.begin(), p.end());
  }
  std::vector<TokenId> aspects;
  for (const auto& a : aspect_strs) {
    for (const auto& w : normalize(a)) {
      auto p = vocab.word_pieces(w);
      aspects.insert(aspects.end(), p.begin(), p.end());
    }
  }

  if (aspects.size() > max_len - 3) aspects.resize(max_len - 3);
  const std::size_t overhead = aspects.empty() ? 2 : 3;
  const std::size_t text_budget = max_len - overhead - aspects.size();
  if (text.size() > text_budget) text.resize(text_budget);

  GlobalEncoding enc;
  enc.ids.push_back(kClsId);
  enc.ids.insert(enc.ids.end(), text.begin(), text.end());
  enc.ids.push_back(kSepId);
  enc.segments.assign(enc.ids.size(), 0);
  if (!aspects.empty()) {
    enc.ids.insert(enc.ids.end(), aspects.begin(), aspects.end());
    enc.ids.push_back(kSepId);
    enc.segments.resize(enc.ids.size(), 1);
  }
  return enc;
}

std::vector<std::uint8_t> build_mask(const std::vector<std::string>& words,
                                     const std::vector<AspectSpan>& spans,
                                     const std::vector<std::int32_t>& alignment) {
  std::vector<std::uint8_t> in_span(words.size(), 0);
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > words.size()) {
      throw InputError("aspect span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                       ") out of range for " + std::to_string(words.size()) + " words");
    }
    std::fill(in_span.begin() + static_cast<std::ptrdiff_t>(s.start),
              in_span.begin() + static_cast<std::ptrdiff_t>(s.end), 1);
  }
  std::vector<std::uint8_t> mask(alignment.size(), 0);
  for (std::size_t i = 0; i < alignment.size(); ++i) {
    const auto w = alignment[i];
    if (w < 0) continue;
    if (static_cast<std::size_t>(w) >= words.size()) throw InputError("alignment refers past the last word");
    mask[i] = in_span[static_cast<std::size_t>(w)];
  }
  return mask;
}

std::vector<std::string> decode(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::vector<std::string> words;
  for (TokenId id : ids) {
    if (is_reserved(id) && id != kUnkId) continue;
    const std::string& piece = vocab.token(id);
    if (piece.size() > kContinuationPrefix.size() && piece.starts_with(kContinuationPrefix) && !words.empty()) {
      words.back() += piece.substr(kContinuationPrefix.size());
    } else {
      words.push_back(piece);
    }
  }
  return words;
}

EncodedPair pad_pair(const EncodedPair& pair, std::size_t local_target, std::size_t global_target) {
  EncodedPair out = pair;
  if (out.local_ids.size() < local_target) {
    out.local_ids.resize(local_target, kPadId);
    out.aspect_mask.resize(local_target, 0);
  }
  if (out.global_ids.size() < global_target) {
    out.global_ids.resize(global_target, kPadId);
    out.segment_ids.resize(global_target, 0);
  }
  return out;
}

}  // namespace medqc
