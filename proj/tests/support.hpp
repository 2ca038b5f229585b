#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "privprof/corpus.hpp"

namespace privprof::testing {

// Five generic binary settings s1..s5, no subset tags.
inline std::string toy_taxonomy_text() {
  std::string text = "alias,group,subsets,kind,text\n";
  for (int i = 1; i <= 5; ++i) {
    text += "s" + std::to_string(i) + ",G,,binary,Setting " + std::to_string(i) + "\n";
  }
  return text;
}

inline QuestionCatalog toy_catalog() {
  std::istringstream in(toy_taxonomy_text());
  return parse_taxonomy(in);
}

// u1 allows s1,s2; u2 s1,s3; u3 s1,s3,s4,s5; u4 s1,s2,s4,s5.
inline const std::vector<std::vector<double>>& toy_rows() {
  static const std::vector<std::vector<double>> rows = {
      {1, 1, 0, 0, 0},
      {1, 0, 1, 0, 0},
      {1, 0, 1, 1, 1},
      {1, 1, 0, 1, 1},
  };
  return rows;
}

inline std::string toy_csv_text() {
  return "user_id,s1,s2,s3,s4,s5\n"
         "u1,1,1,0,0,0\n"
         "u2,1,0,1,0,0\n"
         "u3,1,0,1,1,1\n"
         "u4,1,1,0,1,1\n";
}

inline Dataset toy_dataset() {
  std::istringstream in(toy_csv_text());
  return parse_dataset(in, toy_catalog());
}

// A binary dataset over generic questions q1..qW built straight from rows.
inline Dataset make_dataset(const std::vector<std::vector<double>>& rows) {
  std::vector<Question> questions;
  const std::size_t width = rows.empty() ? 0 : rows.front().size();
  for (std::size_t i = 0; i < width; ++i) {
    Question q;
    q.id = i;
    q.alias = "q" + std::to_string(i + 1);
    q.text = "Question " + std::to_string(i + 1);
    q.group = QuestionGroup::kGeneric;
    questions.push_back(q);
  }
  Dataset d{QuestionCatalog(std::move(questions)), {}};
  for (std::size_t u = 0; u < rows.size(); ++u) {
    d.users.push_back({"u" + std::to_string(u + 1), rows[u], std::nullopt, std::nullopt});
  }
  return d;
}

inline Eigen::MatrixXd random_binary(std::size_t rows, std::size_t cols, double p, std::mt19937_64& gen) {
  std::bernoulli_distribution bit(p);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = bit(gen) ? 1.0 : 0.0;
  }
  return m;
}

// Symmetric, zero diagonal, entries uniform in [0, 1).
inline Eigen::MatrixXd random_distances(std::size_t n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) d(i, j) = d(j, i) = u(gen);
  }
  return d;
}

// TF-IDF with a direct double loop.
inline std::vector<std::vector<double>> naive_tfidf(const Eigen::MatrixXd& values) {
  const auto n = static_cast<std::size_t>(values.rows());
  const auto f = static_cast<std::size_t>(values.cols());
  std::vector<std::vector<double>> out(n, std::vector<double>(f, 0.0));
  for (std::size_t c = 0; c < f; ++c) {
    std::size_t a = 0;
    for (std::size_t r = 0; r < n; ++r) a += values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) > 0 ? 1 : 0;
    if (a == 0) continue;
    const double idf = std::log(static_cast<double>(n) / static_cast<double>(a));
    for (std::size_t r = 0; r < n; ++r) {
      out[r][c] = values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * idf;
    }
  }
  return out;
}

inline double naive_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Mann-Whitney estimate of P(score_pos > score_neg), ties counted half.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels, int cls) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != cls) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == cls) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("privprof_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace privprof::testing
