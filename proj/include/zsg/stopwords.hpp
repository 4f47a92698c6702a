#pragma once

#include <string>
#include <string_view>
#include <unordered_set>

namespace zsg {

// English function words removed by the word-level model. Lower case, no
// punctuation, matching preprocess_caption output. Version 1.
inline constexpr std::string_view stopword_list_version = "zsg-stopwords-1";

inline const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a", "about", "above", "after", "again", "against", "all", "am", "an", "and",
      "any", "are", "arent", "as", "at", "be", "because", "been", "before", "being",
      "below", "between", "both", "but", "by", "can", "cant", "could", "couldnt", "did",
      "didnt", "do", "does", "doesnt", "doing", "dont", "down", "during", "each", "few",
      "for", "from", "further", "had", "hadnt", "has", "hasnt", "have", "havent", "having",
      "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i",
      "if", "in", "into", "is", "isnt", "it", "its", "itself", "just", "me",
      "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off",
      "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over",
      "own", "same", "she", "should", "shouldnt", "so", "some", "such", "than", "that",
      "thats", "the", "their", "theirs", "them", "themselves", "then", "there", "theres", "these",
      "they", "this", "those", "through", "to", "too", "under", "until", "up", "very",
      "was", "wasnt", "we", "were", "werent", "what", "when", "where", "which", "while",
      "who", "whom", "why", "will", "with", "wont", "would", "wouldnt", "you", "your",
      "yours", "yourself", "yourselves", "onto", "upon", "s",
  };
  return words;
}

}  // namespace zsg
