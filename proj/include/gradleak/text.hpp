#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace gradleak {

// Ordered vocabulary with dense ids and the reserved [UNK]/[CLS]/[SEP]
// tokens. Immutable after load.
class Vocab {
 public:
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const;
  int id_of(const std::string& token) const;  // -1 when absent
  bool contains(const std::string& token) const { return id_of(token) >= 0; }

  int unk_id() const { return unk_; }
  int cls_id() const { return cls_; }
  int sep_id() const { return sep_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int unk_ = -1, cls_ = -1, sep_ = -1;
};

// One token per line, UTF-8, ids by line order. Duplicate lines and missing
// reserved tokens are rejected.
Vocab load_vocab(const std::string& path);

// Lowercase, split on whitespace and punctuation, then greedy longest-match
// subword segmentation with the "##" continuation convention. Words with no
// valid segmentation become a single UNK. Deterministic and total.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab);

// Inverse on canonical in-vocab text: joins tokens with spaces, merging
// "##" continuations into the preceding piece.
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

enum class CorpusStyle { Short, Medium, Long };

struct CorpusEntry {
  std::string text;
  int label = 0;
};

struct Corpus {
  std::string name;
  CorpusStyle style = CorpusStyle::Short;
  std::vector<CorpusEntry> entries;
};

// Lines of "label<TAB>sentence", UTF-8.
Corpus load_corpus(const std::string& path, CorpusStyle style = CorpusStyle::Short);

}  // namespace gradleak
