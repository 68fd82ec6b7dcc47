#ifndef ESSAY_AUDIT_FEATURES_HPP
#define ESSAY_AUDIT_FEATURES_HPP

#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "essay_audit/core.hpp"
#include "essay_audit/matrix.hpp"

namespace essay_audit::features {

struct TextStats {
    long word_count = 0;
    long sentence_count = 0;
    long character_count = 0;  // alphabetic characters inside words
    long syllable_count = 0;
    long complex_word_count = 0;    // >= 3 syllables
    long difficult_word_count = 0;  // absent from the familiar-word list
    double avg_sentence_length = 0.0;
    double avg_syllables_per_word = 0.0;
    bool difficult_from_syllable_fallback = false;  // no familiar list available
};

struct ReadabilityScores {
    double flesch_reading_ease = 0.0;
    double flesch_kincaid_grade = 0.0;
    double gunning_fog = 0.0;
    double dale_chall = 0.0;
    double automated_readability_index = 0.0;
    double coleman_liau = 0.0;
};

// One lowercase word per line, UTF-8.
class FamiliarWords {
public:
    static FamiliarWords load(const std::string& path);
    bool contains(const std::string& lowercase_word) const { return words_.count(lowercase_word) > 0; }
    std::size_t size() const { return words_.size(); }

private:
    std::unordered_set<std::string> words_;
};

// Words are maximal alphabetic-or-apostrophe runs; sentences split on
// terminal punctuation followed by whitespace or end of text.
std::vector<std::string> tokenize_words(const std::string& text);
long count_syllables(const std::string& word);

TextStats analyze_text(const std::string& text, const FamiliarWords* familiar = nullptr);
ReadabilityScores readability(const TextStats& stats);

struct TfidfConfig {
    int min_document_frequency = 2;
    int max_vocabulary = 5000;
};

struct TfidfModel {
    std::vector<std::string> vocabulary;                  // column order
    std::unordered_map<std::string, int> term_to_column;  // term -> column
    std::vector<long> document_frequencies;
    std::vector<double> idf;  // ln((1 + D) / (1 + df)) + 1
    TfidfConfig config;
    long n_documents = 0;
};

struct SparseRow {
    std::vector<std::pair<int, double>> entries;  // (column, weight), column-sorted
};

TfidfModel tfidf_fit(const std::vector<std::string>& corpus, const TfidfConfig& config = {});
SparseRow tfidf_transform(const TfidfModel& model, const std::string& text);

struct FeatureMatrix {
    Matrix values;
    std::vector<std::string> column_names;  // the manifest
    std::vector<std::string> row_essay_ids;
};

struct ExternalFeatures {
    std::vector<std::string> column_names;
    std::unordered_map<std::string, std::vector<double>> by_essay_id;
};

// CSV with essay_id plus numeric columns.
ExternalFeatures load_external_features(const std::string& path);

// Column order: stats, readability, grade level, word count, tfidf block,
// external block.
FeatureMatrix build_feature_matrix(const std::vector<EssayRecord>& essays,
                                   const TfidfModel* tfidf = nullptr,
                                   const ExternalFeatures* external = nullptr,
                                   const FamiliarWords* familiar = nullptr);

void export_feature_matrix_csv(const std::string& path, const FeatureMatrix& fm);

}  // namespace essay_audit::features

#endif
