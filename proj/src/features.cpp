#include "essay_audit/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

#include "essay_audit/csv.hpp"

namespace essay_audit::features {

namespace {

bool is_word_char(unsigned char c) { return std::isalpha(c) || c == '\''; }
bool is_vowel(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

FamiliarWords FamiliarWords::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AuditError("cannot open familiar-word list: " + path);
    FamiliarWords fw;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) fw.words_.insert(lower(line));
    }
    if (fw.words_.empty()) throw AuditError("familiar-word list is empty: " + path);
    return fw;
}

namespace {

// keep interior apostrophes (contractions) but not quote marks
void push_word(std::vector<std::string>& words, std::string run) {
    std::size_t b = run.find_first_not_of('\'');
    std::size_t e = run.find_last_not_of('\'');
    if (b == std::string::npos) return;  // bare apostrophes are noise
    run = run.substr(b, e - b + 1);
    if (std::any_of(run.begin(), run.end(),
                    [](unsigned char ch) { return std::isalpha(ch); }))
        words.push_back(std::move(run));
}

}  // namespace

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> words;
    std::string current;
    for (unsigned char c : text) {
        if (is_word_char(c)) {
            current += static_cast<char>(c);
        } else if (!current.empty()) {
            push_word(words, std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) push_word(words, std::move(current));
    return words;
}

long count_syllables(const std::string& word) {
    std::string w;
    for (unsigned char c : word)
        if (std::isalpha(c)) w += static_cast<char>(std::tolower(c));
    if (w.empty()) return 0;

    long groups = 0;
    bool in_group = false;
    for (char c : w) {
        if (is_vowel(c)) {
            if (!in_group) ++groups;
            in_group = true;
        } else {
            in_group = false;
        }
    }
    // silent trailing 'e', except -le after a consonant ("table", "little")
    if (w.size() >= 2 && w.back() == 'e') {
        bool consonant_le = w.size() >= 3 && w[w.size() - 2] == 'l' && !is_vowel(w[w.size() - 3]);
        if (!consonant_le && !is_vowel(w[w.size() - 2])) --groups;
    }
    return std::max(groups, 1L);
}

TextStats analyze_text(const std::string& text, const FamiliarWords* familiar) {
    if (text.find_first_not_of(" \t\r\n\f\v") == std::string::npos)
        throw AuditError("analyze_text: empty or whitespace-only text");

    TextStats stats;

    // sentence boundaries: [.!?]+ followed by whitespace or end of text
    bool saw_content = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '.' || c == '!' || c == '?') {
            std::size_t j = i;
            while (j + 1 < text.size() &&
                   (text[j + 1] == '.' || text[j + 1] == '!' || text[j + 1] == '?'))
                ++j;
            bool at_boundary = j + 1 >= text.size() || std::isspace(static_cast<unsigned char>(text[j + 1]));
            if (at_boundary && saw_content) {
                ++stats.sentence_count;
                saw_content = false;
            }
            i = j;
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            saw_content = true;
        }
    }
    if (saw_content) ++stats.sentence_count;

    stats.difficult_from_syllable_fallback = familiar == nullptr;
    for (const std::string& word : tokenize_words(text)) {
        ++stats.word_count;
        for (unsigned char c : word)
            if (std::isalpha(c)) ++stats.character_count;
        long syl = count_syllables(word);
        stats.syllable_count += syl;
        if (syl >= 3) ++stats.complex_word_count;
        if (familiar) {
            if (!familiar->contains(lower(word))) ++stats.difficult_word_count;
        } else if (syl >= 3) {
            ++stats.difficult_word_count;
        }
    }

    if (stats.sentence_count > 0)
        stats.avg_sentence_length =
            static_cast<double>(stats.word_count) / static_cast<double>(stats.sentence_count);
    if (stats.word_count > 0)
        stats.avg_syllables_per_word =
            static_cast<double>(stats.syllable_count) / static_cast<double>(stats.word_count);
    return stats;
}

ReadabilityScores readability(const TextStats& stats) {
    if (stats.word_count <= 0) throw AuditError("readability: zero words");
    if (stats.sentence_count <= 0) throw AuditError("readability: zero sentences");

    const double words = static_cast<double>(stats.word_count);
    const double sentences = static_cast<double>(stats.sentence_count);
    const double syllables = static_cast<double>(stats.syllable_count);
    const double chars = static_cast<double>(stats.character_count);
    const double complex_words = static_cast<double>(stats.complex_word_count);
    const double difficult = static_cast<double>(stats.difficult_word_count);

    ReadabilityScores scores;
    scores.flesch_reading_ease =
        206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words);
    scores.flesch_kincaid_grade = 0.39 * (words / sentences) + 11.8 * (syllables / words) - 15.59;
    scores.gunning_fog = 0.4 * (words / sentences + 100.0 * complex_words / words);
    double difficult_pct = 100.0 * difficult / words;
    scores.dale_chall = 0.1579 * difficult_pct + 0.0496 * (words / sentences);
    if (difficult_pct > 5.0) scores.dale_chall += 3.6365;
    scores.automated_readability_index =
        4.71 * (chars / words) + 0.5 * (words / sentences) - 21.43;
    scores.coleman_liau =
        0.0588 * (100.0 * chars / words) - 0.296 * (100.0 * sentences / words) - 15.8;
    return scores;
}

namespace {

// TF-IDF tokens: lowercased alphabetic runs.
std::vector<std::string> tfidf_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalpha(c)) {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

}  // namespace

TfidfModel tfidf_fit(const std::vector<std::string>& corpus, const TfidfConfig& config) {
    if (corpus.empty()) throw AuditError("tfidf_fit: empty corpus");

    std::map<std::string, long> df;
    for (const auto& doc : corpus) {
        std::vector<std::string> tokens = tfidf_tokens(doc);
        std::sort(tokens.begin(), tokens.end());
        tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
        for (const auto& t : tokens) ++df[t];
    }

    std::vector<std::pair<std::string, long>> kept;
    for (const auto& [term, freq] : df)
        if (freq >= config.min_document_frequency) kept.emplace_back(term, freq);
    if (kept.empty()) throw AuditError("tfidf_fit: empty vocabulary after min-df filtering");

    if (kept.size() > static_cast<std::size_t>(config.max_vocabulary)) {
        // keep the most frequent terms; ties resolved lexicographically
        std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        kept.resize(config.max_vocabulary);
        std::sort(kept.begin(), kept.end());
    }

    TfidfModel model;
    model.config = config;
    model.n_documents = static_cast<long>(corpus.size());
    for (const auto& [term, freq] : kept) {
        model.term_to_column[term] = static_cast<int>(model.vocabulary.size());
        model.vocabulary.push_back(term);
        model.document_frequencies.push_back(freq);
        model.idf.push_back(std::log((1.0 + model.n_documents) / (1.0 + freq)) + 1.0);
    }
    return model;
}

SparseRow tfidf_transform(const TfidfModel& model, const std::string& text) {
    std::map<int, long> tf;
    for (const auto& token : tfidf_tokens(text)) {
        auto it = model.term_to_column.find(token);
        if (it != model.term_to_column.end()) ++tf[it->second];
    }
    SparseRow row;
    double norm_sq = 0.0;
    for (const auto& [col, count] : tf) {
        double w = static_cast<double>(count) * model.idf[col];
        row.entries.emplace_back(col, w);
        norm_sq += w * w;
    }
    if (norm_sq > 0.0) {
        double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& [col, w] : row.entries) w *= inv;
    }
    return row;
}

ExternalFeatures load_external_features(const std::string& path) {
    csv::Table table = csv::read_file(path);
    int c_id = table.column("essay_id");
    if (c_id < 0) throw AuditError("external features file is missing column 'essay_id'");
    ExternalFeatures ext;
    for (std::size_t c = 0; c < table.header.size(); ++c)
        if (static_cast<int>(c) != c_id) ext.column_names.push_back(table.header[c]);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        std::vector<double> values;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (static_cast<int>(c) == c_id) continue;
            double v = std::stod(row[c]);
            if (!std::isfinite(v))
                throw AuditError("non-finite external value at row " + std::to_string(r + 2));
            values.push_back(v);
        }
        ext.by_essay_id[row[c_id]] = std::move(values);
    }
    return ext;
}

namespace {

double grade_level_numeric(const std::string& label) {
    std::size_t pos = label.find_first_of("0123456789");
    if (pos == std::string::npos) return 0.0;
    return std::stod(label.substr(pos));
}

}  // namespace

FeatureMatrix build_feature_matrix(const std::vector<EssayRecord>& essays,
                                   const TfidfModel* tfidf, const ExternalFeatures* external,
                                   const FamiliarWords* familiar) {
    if (essays.empty()) throw AuditError("build_feature_matrix: no essays");

    FeatureMatrix fm;
    fm.column_names = {"sentence_count",      "character_count",
                       "syllable_count",      "complex_word_count",
                       "difficult_word_count", "avg_sentence_length",
                       "avg_syllables_per_word",
                       "flesch_reading_ease", "flesch_kincaid_grade",
                       "gunning_fog",         "dale_chall",
                       "automated_readability_index", "coleman_liau",
                       "grade_level",         "word_count"};
    const std::size_t tfidf_offset = fm.column_names.size();
    if (tfidf)
        for (const auto& term : tfidf->vocabulary) fm.column_names.push_back("tfidf:" + term);
    const std::size_t ext_offset = fm.column_names.size();
    if (external)
        for (const auto& name : external->column_names) fm.column_names.push_back("ext:" + name);

    fm.values = Matrix(essays.size(), fm.column_names.size());
    for (std::size_t r = 0; r < essays.size(); ++r) {
        const EssayRecord& essay = essays[r];
        fm.row_essay_ids.push_back(essay.essay_id);
        TextStats stats = analyze_text(essay.full_text, familiar);
        ReadabilityScores scores = readability(stats);
        double* row = fm.values.row(r);
        row[0] = static_cast<double>(stats.sentence_count);
        row[1] = static_cast<double>(stats.character_count);
        row[2] = static_cast<double>(stats.syllable_count);
        row[3] = static_cast<double>(stats.complex_word_count);
        row[4] = static_cast<double>(stats.difficult_word_count);
        row[5] = stats.avg_sentence_length;
        row[6] = stats.avg_syllables_per_word;
        row[7] = scores.flesch_reading_ease;
        row[8] = scores.flesch_kincaid_grade;
        row[9] = scores.gunning_fog;
        row[10] = scores.dale_chall;
        row[11] = scores.automated_readability_index;
        row[12] = scores.coleman_liau;
        row[13] = grade_level_numeric(essay.demographics.grade_level);
        row[14] = static_cast<double>(essay.word_count);
        if (tfidf) {
            SparseRow sparse = tfidf_transform(*tfidf, essay.full_text);
            for (const auto& [col, w] : sparse.entries) row[tfidf_offset + col] = w;
        }
        if (external) {
            auto it = external->by_essay_id.find(essay.essay_id);
            if (it == external->by_essay_id.end())
                throw AuditError("external features missing essay_id '" + essay.essay_id + "'");
            for (std::size_t c = 0; c < it->second.size(); ++c) row[ext_offset + c] = it->second[c];
        }
    }
    for (double v : fm.values.data)
        if (!std::isfinite(v)) throw AuditError("build_feature_matrix: non-finite entry");
    return fm;
}

void export_feature_matrix_csv(const std::string& path, const FeatureMatrix& fm) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AuditError("cannot write file: " + path);
    out << "essay_id";
    for (const auto& name : fm.column_names) out << ',' << csv::escape_field(name);
    out << '\n';
    for (std::size_t r = 0; r < fm.values.rows; ++r) {
        out << csv::escape_field(fm.row_essay_ids[r]);
        for (std::size_t c = 0; c < fm.values.cols; ++c) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", fm.values.at(r, c));
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace essay_audit::features
