#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace privprof {

// Top-level question groups: domain specific, app related, generic.
enum class QuestionGroup { kDomain, kApp, kGeneric };

enum class ValueKind { kBinary, kNumeric };

std::string_view to_string(QuestionGroup group);
std::string_view to_string(ValueKind kind);

struct Question {
  std::size_t id = 0;
  std::string alias;
  std::string text;
  QuestionGroup group = QuestionGroup::kGeneric;
  std::set<std::string> subset_tags;
  ValueKind value_kind = ValueKind::kBinary;
};

// Ordered question list plus named column subsets.
//
// Subsets are derived from the questions: every group name ("D", "A", "G"),
// every tag, "S0" (DP1 united with AP1) and "DATA" (everything). Subset members
// are question ids listed in catalog order.
class QuestionCatalog {
 public:
  QuestionCatalog() = default;
  explicit QuestionCatalog(std::vector<Question> questions);

  const std::vector<Question>& questions() const noexcept { return questions_; }
  std::size_t size() const noexcept { return questions_.size(); }
  const Question& operator[](std::size_t position) const { return questions_[position]; }

  const std::map<std::string, std::vector<std::size_t>>& named_subsets() const noexcept {
    return named_subsets_;
  }
  bool has_subset(std::string_view name) const;
  // Throws LookupError for unknown names.
  const std::vector<std::size_t>& subset(std::string_view name) const;

  std::optional<std::size_t> position_of_alias(std::string_view alias) const;
  std::optional<std::size_t> position_of_id(std::size_t id) const;

 private:
  std::vector<Question> questions_;
  std::map<std::string, std::vector<std::size_t>> named_subsets_;
  std::unordered_map<std::string, std::size_t> alias_index_;
  std::unordered_map<std::size_t, std::size_t> id_index_;
};

// Tags a question may carry, and the group each one belongs to.
const std::map<std::string, QuestionGroup>& known_subset_tags();

struct UserProfile {
  std::string user_id;
  std::vector<double> answers;
  // 0 privacy conservative, 1 unconcerned, 2 fence-sitter, 3 advanced user.
  std::optional<int> self_label;
  std::optional<int> assigned_label;
};

struct Dataset {
  QuestionCatalog catalog;
  std::vector<UserProfile> users;

  std::size_t n_users() const noexcept { return users.size(); }
  std::size_t width() const noexcept { return catalog.size(); }

  // Rows are users, columns follow catalog order.
  Eigen::MatrixXd answer_matrix() const;

  // Throws ValidationError / ConflictError on broken invariants.
  void validate() const;
};

QuestionCatalog parse_taxonomy(std::istream& in);
QuestionCatalog load_taxonomy(const std::filesystem::path& path);
void write_taxonomy(const QuestionCatalog& catalog, std::ostream& out);

// Path of the shipped taxonomy that reproduces the reference group sizes.
std::filesystem::path reference_taxonomy_path();
QuestionCatalog reference_catalog();

// Reads a user-per-row CSV whose header is `user_id`, an optional
// `self_label` column, then one column per taxonomy alias in any order.
// Numeric columns are min-max normalized to [0, 1] across users.
Dataset parse_dataset(std::istream& csv, const QuestionCatalog& catalog);
Dataset load_dataset(const std::filesystem::path& csv_path,
                     const std::filesystem::path& taxonomy_path);
Dataset load_dataset(const std::filesystem::path& csv_path, const QuestionCatalog& catalog);
void write_dataset(const Dataset& dataset, std::ostream& out);

// Splits "G+AP2" into {"G", "AP2"}.
std::vector<std::string> split_subset_expression(std::string_view expression);

// Column projection onto the union of the named subsets, in catalog order.
Dataset select_subset(const Dataset& dataset, std::span<const std::string> subset_names);
Dataset select_subset(const Dataset& dataset, std::string_view expression);

struct SyntheticData {
  Dataset dataset;
  std::vector<int> planted_labels;
};

struct SyntheticSpec {
  std::size_t n_users = 300;
  std::size_t catalog_width = 135;
  std::size_t n_planted = 3;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

// Planted-group generator: user i belongs to group i % n_planted, copies the
// group's random prototype and flips each bit with probability `noise`.
// The catalog is `catalog_width` binary generic questions s1..sW.
SyntheticData generate_synthetic(const SyntheticSpec& spec);
// Same generator over an existing catalog; numeric columns receive 0/1 draws too.
SyntheticData generate_synthetic(const QuestionCatalog& catalog, const SyntheticSpec& spec);

void write_planted_labels(const SyntheticData& data, std::ostream& out);

struct FoldSplit {
  std::vector<std::size_t> fold_of;
  std::size_t n_folds = 10;
  std::uint64_t seed = 0;

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

enum class StratifyBy { kNone, kSelfLabel, kAssignedLabel };

// Shuffled round-robin dealing; with strata the shuffled users are grouped by
// label before dealing, which keeps per-fold label counts within one of
// proportional.
FoldSplit kfold_split(std::size_t n_users, std::size_t n_folds, std::uint64_t seed,
                      std::span<const int> strata = {});
FoldSplit kfold_split(const Dataset& dataset, std::size_t n_folds, std::uint64_t seed,
                      StratifyBy stratify_by = StratifyBy::kNone);

struct MaskSplit {
  std::vector<std::size_t> query;
  std::vector<std::size_t> held_out;
};

// Reveals round(alpha * n) of the given setting indices (at least one on each
// side), chosen uniformly without replacement. Both parts are returned sorted.
MaskSplit mask_settings(std::span<const std::size_t> setting_indices, double alpha,
                        std::uint64_t seed);
MaskSplit mask_settings(const UserProfile& user, double alpha, std::uint64_t seed);

}  // namespace privprof
