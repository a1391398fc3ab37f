#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace synthpqa {

/// Analyzer shared by BM25, the encoder feature map and lexical overlap.
/// Segmentation follows Unicode default word boundaries; a segment is a term
/// when it holds at least one letter or decimal digit. No stemming, no
/// stopwords.
struct AnalyzerConfig {
  bool lowercase = true;
};

std::vector<std::string> tokenize(std::string_view text, const AnalyzerConfig& cfg = {});

/// Decodes UTF-8 into code points. Invalid sequences decode to U+FFFD.
std::u32string utf8_decode(std::string_view text);

std::string utf8_encode(std::u32string_view cps);

/// Trims ASCII and Unicode whitespace from both ends.
std::string trim(std::string_view s);

}  // namespace synthpqa
