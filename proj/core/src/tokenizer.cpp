#include "kfe/tokenizer.hpp"

#include "kfe/utf8.hpp"

namespace kfe {

namespace {

bool is_word_char(char32_t cp) {
  return (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z') ||
         (cp >= U'0' && cp <= U'9');
}

char ascii_lower(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return static_cast<char>(cp - U'A' + 'a');
  return static_cast<char>(cp);
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  const auto cps = utf8::decode(text);
  std::vector<Token> out;
  std::string word;
  auto flush_word = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t cp = cps[i];
    if (is_word_char(cp)) {
      word.push_back(ascii_lower(cp));
      continue;
    }
    flush_word();
    if (utf8::is_cjk(cp)) {
      out.push_back(utf8::encode(cp));
      if (i + 1 < cps.size() && utf8::is_cjk(cps[i + 1])) {
        std::string bigram = utf8::encode(cp);
        utf8::append(bigram, cps[i + 1]);
        out.push_back(std::move(bigram));
      }
    }
  }
  flush_word();
  return out;
}

std::size_t estimate_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_segment = false;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = utf8::next(text, i);
    if (utf8::is_cjk(cp)) {
      ++n;
      in_segment = false;
    } else if (utf8::is_space(cp)) {
      in_segment = false;
    } else if (!in_segment) {
      ++n;
      in_segment = true;
    }
  }
  return n;
}

}  // namespace kfe
