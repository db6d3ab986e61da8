#include "gradleak/text.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace gradleak {

namespace {
const char* kUnk = "[UNK]";
const char* kCls = "[CLS]";
const char* kSep = "[SEP]";
}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int>(i));
    if (!inserted) {
      throw std::invalid_argument("vocab: duplicate token '" + tokens_[i] + "' at line " +
                                  std::to_string(i + 1));
    }
  }
  unk_ = id_of(kUnk);
  cls_ = id_of(kCls);
  sep_ = id_of(kSep);
  if (unk_ < 0 || cls_ < 0 || sep_ < 0) {
    throw std::invalid_argument("vocab: reserved tokens [UNK], [CLS], [SEP] must all be present");
  }
}

const std::string& Vocab::token(std::size_t id) const {
  if (id >= tokens_.size()) throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

int Vocab::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocab file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

// Lowercased word and punctuation pieces, whitespace dropped.
std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else if (is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
      words.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

// Greedy longest-match segmentation of one word; empty result means the
// word has no segmentation and maps to UNK.
std::vector<int> segment_word(const std::string& word, const Vocab& vocab) {
  std::vector<int> pieces;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    int match = -1;
    while (end > start) {
      std::string piece = word.substr(start, end - start);
      if (start > 0) piece = "##" + piece;
      match = vocab.id_of(piece);
      if (match >= 0) break;
      --end;
    }
    if (match < 0) return {};
    pieces.push_back(match);
    start = end;
  }
  return pieces;
}

}  // namespace

std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
  if (text.empty()) throw std::invalid_argument("tokenize: empty text");
  std::vector<int> ids;
  for (const std::string& word : split_words(text)) {
    std::vector<int> pieces = segment_word(word, vocab);
    if (pieces.empty()) {
      ids.push_back(vocab.unk_id());
    } else {
      ids.insert(ids.end(), pieces.begin(), pieces.end());
    }
  }
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id < 0) throw std::out_of_range("detokenize: negative id");
    const std::string& tok = vocab.token(static_cast<std::size_t>(id));
    if (tok.size() > 2 && tok.compare(0, 2, "##") == 0) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

Corpus load_corpus(const std::string& path, CorpusStyle style) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file '" + path + "'");
  Corpus corpus;
  corpus.name = path;
  corpus.style = style;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("corpus '" + path + "' line " + std::to_string(line_no) +
                               ": expected 'label<TAB>sentence'");
    }
    CorpusEntry entry;
    try {
      entry.label = std::stoi(line.substr(0, tab));
    } catch (const std::exception&) {
      throw std::runtime_error("corpus '" + path + "' line " + std::to_string(line_no) +
                               ": bad label");
    }
    entry.text = line.substr(tab + 1);
    if (entry.label < 0) {
      throw std::runtime_error("corpus '" + path + "' line " + std::to_string(line_no) +
                               ": negative label");
    }
    if (entry.text.empty()) {
      throw std::runtime_error("corpus '" + path + "' line " + std::to_string(line_no) +
                               ": empty sentence");
    }
    corpus.entries.push_back(std::move(entry));
  }
  return corpus;
}

}  // namespace gradleak
