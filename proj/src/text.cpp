#include "flap/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace flap::text {

namespace {
const char* kSpecials[] = {"[PAD]", "[UNK]", "[CLS]"};
}

Vocab::Vocab(std::vector<std::string> words) {
  for (const char* s : kSpecials) {
    tokens_.emplace_back(s);
  }
  tokens_.insert(tokens_.end(), words.begin(), words.end());
}

int Vocab::id_of(const std::string& word) const {
  // Specials occupy the front; words are sorted after them.
  auto begin = tokens_.begin() + 3;
  auto it = std::lower_bound(begin, tokens_.end(), word);
  if (it != tokens_.end() && *it == word) {
    return static_cast<int>(it - tokens_.begin());
  }
  return kUnk;
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot write vocab: " + path);
  }
  for (const auto& t : tokens_) {
    os << t << "\n";
  }
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open vocab: " + path);
  }
  Vocab v;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) {
      v.tokens_.push_back(line);
    }
  }
  for (size_t i = 0; i < 3; ++i) {
    if (v.tokens_.size() <= i || v.tokens_[i] != kSpecials[i]) {
      throw std::runtime_error("vocab file missing specials header: " + path);
    }
  }
  return v;
}

std::vector<std::string> split_words(const std::string& caption) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : caption) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) {
    words.push_back(cur);
  }
  return words;
}

Vocab build_vocab(const data::Manifest& manifest) {
  std::set<std::string> seen;
  for (const auto& rec : manifest.records) {
    for (const auto& cap : rec.captions) {
      for (auto& w : split_words(cap.text)) {
        seen.insert(std::move(w));
      }
    }
  }
  return Vocab(std::vector<std::string>(seen.begin(), seen.end()));
}

std::vector<int> tokenize(const std::string& caption, const Vocab& vocab,
                          size_t max_len) {
  auto words = split_words(caption);
  if (words.empty()) {
    std::cerr << "warning: empty caption tokenized to [UNK]\n";
    return {Vocab::kUnk};
  }
  std::vector<int> ids;
  ids.reserve(std::min(words.size(), max_len));
  for (const auto& w : words) {
    if (ids.size() == max_len) {
      break;
    }
    ids.push_back(vocab.id_of(w));
  }
  return ids;
}

}  // namespace flap::text
