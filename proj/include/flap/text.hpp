#pragma once

#include <string>
#include <vector>

#include "flap/manifest.hpp"

namespace flap::text {

// Word-level vocabulary with fixed specials. Captions are lowercased and
// split on anything that is not a letter or digit; words are stored sorted,
// so the vocabulary is independent of manifest record order.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;  // reserved; the default text encoder pools
                                  // over words and does not emit it

  Vocab() = default;
  explicit Vocab(std::vector<std::string> words);

  size_t size() const { return tokens_.size(); }
  int id_of(const std::string& word) const;  // kUnk when absent
  const std::string& token(size_t id) const { return tokens_[id]; }

  // One token per line; line number = id (specials included).
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
};

std::vector<std::string> split_words(const std::string& caption);

Vocab build_vocab(const data::Manifest& manifest);

// Word ids, truncated to max_len. An empty caption becomes a single [UNK]
// and logs a warning.
std::vector<int> tokenize(const std::string& caption, const Vocab& vocab,
                          size_t max_len = 77);

}  // namespace flap::text
