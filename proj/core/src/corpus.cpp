#include "privprof/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "csv.hpp"
#include "privprof/error.hpp"
#include "privprof/rng.hpp"

namespace privprof {
namespace {

constexpr std::string_view kUserIdColumn = "user_id";
constexpr std::string_view kSelfLabelColumn = "self_label";

std::optional<QuestionGroup> parse_group(std::string_view s) {
  if (s == "D") return QuestionGroup::kDomain;
  if (s == "A") return QuestionGroup::kApp;
  if (s == "G") return QuestionGroup::kGeneric;
  return std::nullopt;
}

std::optional<ValueKind> parse_kind(std::string_view s) {
  if (s == "binary") return ValueKind::kBinary;
  if (s == "numeric") return ValueKind::kNumeric;
  return std::nullopt;
}

std::optional<double> parse_double(std::string_view s) {
  double value = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::string format_user_id(std::size_t index, std::size_t total) {
  const auto digits = std::to_string(total).size();
  std::string number = std::to_string(index + 1);
  return "u" + std::string(digits - std::min(digits, number.size()), '0') + number;
}

std::string format_double(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

}  // namespace

std::string_view to_string(QuestionGroup group) {
  switch (group) {
    case QuestionGroup::kDomain:
      return "D";
    case QuestionGroup::kApp:
      return "A";
    case QuestionGroup::kGeneric:
      return "G";
  }
  return "?";
}

std::string_view to_string(ValueKind kind) {
  return kind == ValueKind::kBinary ? "binary" : "numeric";
}

const std::map<std::string, QuestionGroup>& known_subset_tags() {
  static const std::map<std::string, QuestionGroup> tags = {
      {"DP1", QuestionGroup::kDomain},  {"AP1", QuestionGroup::kApp},
      {"AP2", QuestionGroup::kApp},     {"GP1", QuestionGroup::kGeneric},
      {"G1", QuestionGroup::kGeneric},  {"G2", QuestionGroup::kGeneric},
      {"G3", QuestionGroup::kGeneric},  {"G4", QuestionGroup::kGeneric},
      {"G5", QuestionGroup::kGeneric},
  };
  return tags;
}

QuestionCatalog::QuestionCatalog(std::vector<Question> questions) : questions_(std::move(questions)) {
  const auto& tags = known_subset_tags();
  for (const char* name : {"D", "A", "G", "S0", "DATA"}) {
    named_subsets_[name];
  }
  for (const auto& [tag, group] : tags) {
    named_subsets_[tag];
  }

  for (std::size_t pos = 0; pos < questions_.size(); ++pos) {
    const Question& q = questions_[pos];
    if (q.alias.empty()) {
      throw SchemaError("question at position " + std::to_string(pos) + " has an empty alias");
    }
    if (!alias_index_.emplace(q.alias, pos).second) {
      throw SchemaError("duplicate question alias: " + q.alias);
    }
    if (!id_index_.emplace(q.id, pos).second) {
      throw SchemaError("duplicate question id: " + std::to_string(q.id));
    }
    for (const auto& tag : q.subset_tags) {
      const auto it = tags.find(tag);
      if (it == tags.end()) {
        throw SchemaError("unknown subset tag '" + tag + "' on question " + q.alias);
      }
      if (it->second != q.group) {
        throw SchemaError("subset tag " + tag + " is not allowed on group " +
                          std::string(to_string(q.group)) + " question " + q.alias);
      }
    }
    const bool time_spent = q.subset_tags.contains("G2");
    if (time_spent != (q.value_kind == ValueKind::kNumeric)) {
      throw SchemaError("question " + q.alias + ": numeric values are reserved for G2 entries");
    }

    named_subsets_[std::string(to_string(q.group))].push_back(q.id);
    named_subsets_["DATA"].push_back(q.id);
    for (const auto& tag : q.subset_tags) {
      named_subsets_[tag].push_back(q.id);
    }
    if (q.subset_tags.contains("DP1") || q.subset_tags.contains("AP1")) {
      named_subsets_["S0"].push_back(q.id);
    }
  }
}

bool QuestionCatalog::has_subset(std::string_view name) const {
  return named_subsets_.find(std::string(name)) != named_subsets_.end();
}

const std::vector<std::size_t>& QuestionCatalog::subset(std::string_view name) const {
  const auto it = named_subsets_.find(std::string(name));
  if (it == named_subsets_.end()) {
    throw LookupError("unknown question subset: " + std::string(name));
  }
  return it->second;
}

std::optional<std::size_t> QuestionCatalog::position_of_alias(std::string_view alias) const {
  const auto it = alias_index_.find(std::string(alias));
  if (it == alias_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> QuestionCatalog::position_of_id(std::size_t id) const {
  const auto it = id_index_.find(id);
  if (it == id_index_.end()) return std::nullopt;
  return it->second;
}

Eigen::MatrixXd Dataset::answer_matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(users.size()), static_cast<Eigen::Index>(width()));
  for (std::size_t r = 0; r < users.size(); ++r) {
    for (std::size_t c = 0; c < width(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = users[r].answers[c];
    }
  }
  return m;
}

void Dataset::validate() const {
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < users.size(); ++r) {
    const auto& user = users[r];
    if (!seen.insert(user.user_id).second) {
      throw ConflictError("duplicate user_id: " + user.user_id);
    }
    if (user.answers.size() != catalog.size()) {
      throw ValidationError("user " + user.user_id + " has " + std::to_string(user.answers.size()) +
                            " answers, catalog has " + std::to_string(catalog.size()));
    }
    for (std::size_t c = 0; c < catalog.size(); ++c) {
      const double v = user.answers[c];
      const bool ok = catalog[c].value_kind == ValueKind::kBinary ? (v == 0.0 || v == 1.0)
                                                                  : (std::isfinite(v) && v >= 0.0);
      if (!ok) {
        throw ValueError("invalid value for " + catalog[c].alias + " of user " + user.user_id, r, c);
      }
    }
  }
}

QuestionCatalog parse_taxonomy(std::istream& in) {
  std::string line;
  if (!csv::read_line(in, line)) {
    throw SchemaError("taxonomy file is empty");
  }
  const auto header = csv::split_record(line);
  const std::vector<std::string> expected = {"alias", "group", "subsets", "kind", "text"};
  if (header.size() < 4 ||
      !std::equal(header.begin(), header.begin() + 4, expected.begin())) {
    throw SchemaError("taxonomy header must be: alias,group,subsets,kind,text");
  }

  std::vector<Question> questions;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    auto fields = csv::split_record(line);
    if (fields.size() < 4) {
      throw SchemaError("taxonomy line " + std::to_string(line_no) + ": expected at least 4 fields");
    }
    Question q;
    q.id = questions.size();
    q.alias = csv::trim(fields[0]);
    const auto group = parse_group(csv::trim(fields[1]));
    if (!group) {
      throw SchemaError("taxonomy line " + std::to_string(line_no) + ": unknown group '" + fields[1] + "'");
    }
    q.group = *group;
    std::stringstream tags(fields[2]);
    for (std::string tag; std::getline(tags, tag, ';');) {
      tag = csv::trim(tag);
      if (!tag.empty()) q.subset_tags.insert(tag);
    }
    const auto kind = parse_kind(csv::trim(fields[3]));
    if (!kind) {
      throw SchemaError("taxonomy line " + std::to_string(line_no) + ": unknown value kind '" + fields[3] + "'");
    }
    q.value_kind = *kind;
    if (fields.size() > 4) {
      q.text = fields[4];
      for (std::size_t i = 5; i < fields.size(); ++i) {
        q.text += "," + fields[i];
      }
    }
    questions.push_back(std::move(q));
  }
  return QuestionCatalog(std::move(questions));
}

QuestionCatalog load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw SchemaError("cannot open taxonomy file: " + path.string());
  }
  return parse_taxonomy(in);
}

void write_taxonomy(const QuestionCatalog& catalog, std::ostream& out) {
  out << "alias,group,subsets,kind,text\n";
  for (const auto& q : catalog.questions()) {
    std::string tags;
    for (const auto& tag : q.subset_tags) {
      if (!tags.empty()) tags += ';';
      tags += tag;
    }
    out << csv::escape(q.alias) << ',' << to_string(q.group) << ',' << tags << ','
        << to_string(q.value_kind) << ',' << csv::escape(q.text) << '\n';
  }
}

std::filesystem::path reference_taxonomy_path() {
  if (const char* env = std::getenv("PRIVPROF_TAXONOMY")) {
    return env;
  }
  return PRIVPROF_REFERENCE_TAXONOMY;
}

QuestionCatalog reference_catalog() { return load_taxonomy(reference_taxonomy_path()); }

Dataset parse_dataset(std::istream& in, const QuestionCatalog& catalog) {
  std::string line;
  if (!csv::read_line(in, line)) {
    throw SchemaError("dataset CSV is empty; a header row is required");
  }
  const auto header = csv::split_record(line);
  if (header.empty() || csv::trim(header[0]) != kUserIdColumn) {
    throw SchemaError("dataset CSV must start with a user_id column");
  }

  std::optional<std::size_t> self_label_column;
  // column_target[c] = catalog position for CSV column c, or npos.
  std::vector<std::size_t> column_target(header.size(), std::string::npos);
  std::vector<bool> covered(catalog.size(), false);
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto name = csv::trim(header[c]);
    if (name == kSelfLabelColumn) {
      self_label_column = c;
      continue;
    }
    const auto pos = catalog.position_of_alias(name);
    if (!pos) {
      throw SchemaError("column '" + name + "' is not defined in the taxonomy");
    }
    if (covered[*pos]) {
      throw SchemaError("column '" + name + "' appears more than once");
    }
    covered[*pos] = true;
    column_target[c] = *pos;
  }
  for (std::size_t pos = 0; pos < catalog.size(); ++pos) {
    if (!covered[pos]) {
      throw SchemaError("taxonomy question '" + catalog[pos].alias + "' has no column in the CSV");
    }
  }

  Dataset dataset{catalog, {}};
  std::unordered_set<std::string> seen;
  std::size_t row = 0;
  while (csv::read_line(in, line)) {
    ++row;
    const auto fields = csv::split_record(line);
    if (fields.size() != header.size()) {
      throw ValueError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(fields.size()),
                       row, fields.size());
    }
    UserProfile user;
    user.user_id = csv::trim(fields[0]);
    if (user.user_id.empty()) {
      throw ValueError("row " + std::to_string(row) + ": empty user_id", row, 0);
    }
    if (!seen.insert(user.user_id).second) {
      throw ConflictError("duplicate user_id '" + user.user_id + "' at row " + std::to_string(row));
    }
    user.answers.assign(catalog.size(), 0.0);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const auto cell = csv::trim(fields[c]);
      if (self_label_column && c == *self_label_column) {
        if (cell.empty()) continue;
        const auto label = parse_double(cell);
        if (!label || *label != std::floor(*label) || *label < 0 || *label > 3) {
          throw ValueError("row " + std::to_string(row) + " column " + std::to_string(c + 1) +
                               " (self_label): expected an integer in 0..3, got '" + cell + "'",
                           row, c);
        }
        user.self_label = static_cast<int>(*label);
        continue;
      }
      const std::size_t pos = column_target[c];
      const Question& q = catalog[pos];
      if (q.value_kind == ValueKind::kBinary) {
        if (cell != "0" && cell != "1") {
          throw ValueError("row " + std::to_string(row) + " column " + std::to_string(c + 1) + " (" +
                               q.alias + "): binary cell must be 0 or 1, got '" + cell + "'",
                           row, c);
        }
        user.answers[pos] = cell == "1" ? 1.0 : 0.0;
      } else {
        const auto value = parse_double(cell);
        if (!value || *value < 0.0) {
          throw ValueError("row " + std::to_string(row) + " column " + std::to_string(c + 1) + " (" +
                               q.alias + "): numeric cell must be a non-negative decimal, got '" +
                               cell + "'",
                           row, c);
        }
        user.answers[pos] = *value;
      }
    }
    dataset.users.push_back(std::move(user));
  }

  for (std::size_t pos = 0; pos < catalog.size(); ++pos) {
    if (catalog[pos].value_kind != ValueKind::kNumeric || dataset.users.empty()) continue;
    double lo = dataset.users.front().answers[pos];
    double hi = lo;
    for (const auto& user : dataset.users) {
      lo = std::min(lo, user.answers[pos]);
      hi = std::max(hi, user.answers[pos]);
    }
    for (auto& user : dataset.users) {
      user.answers[pos] = hi > lo ? (user.answers[pos] - lo) / (hi - lo) : 0.0;
    }
  }
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& taxonomy_path) {
  return load_dataset(csv_path, load_taxonomy(taxonomy_path));
}

Dataset load_dataset(const std::filesystem::path& csv_path, const QuestionCatalog& catalog) {
  std::ifstream in(csv_path);
  if (!in) {
    throw SchemaError("cannot open dataset file: " + csv_path.string());
  }
  return parse_dataset(in, catalog);
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  const bool with_labels = std::any_of(dataset.users.begin(), dataset.users.end(),
                                       [](const UserProfile& u) { return u.self_label.has_value(); });
  out << kUserIdColumn;
  if (with_labels) out << ',' << kSelfLabelColumn;
  for (const auto& q : dataset.catalog.questions()) {
    out << ',' << csv::escape(q.alias);
  }
  out << '\n';
  for (const auto& user : dataset.users) {
    out << csv::escape(user.user_id);
    if (with_labels) {
      out << ',';
      if (user.self_label) out << *user.self_label;
    }
    for (std::size_t c = 0; c < user.answers.size(); ++c) {
      out << ',';
      if (dataset.catalog[c].value_kind == ValueKind::kBinary) {
        out << (user.answers[c] != 0.0 ? '1' : '0');
      } else {
        out << format_double(user.answers[c]);
      }
    }
    out << '\n';
  }
}

std::vector<std::string> split_subset_expression(std::string_view expression) {
  std::vector<std::string> names;
  std::size_t start = 0;
  while (start <= expression.size()) {
    const auto end = std::min(expression.find('+', start), expression.size());
    auto name = csv::trim(expression.substr(start, end - start));
    if (name.empty()) {
      throw LookupError("empty subset name in expression '" + std::string(expression) + "'");
    }
    names.push_back(std::move(name));
    start = end + 1;
  }
  return names;
}

Dataset select_subset(const Dataset& dataset, std::span<const std::string> subset_names) {
  const auto& catalog = dataset.catalog;
  std::vector<bool> keep(catalog.size(), false);
  for (const auto& name : subset_names) {
    for (std::size_t id : catalog.subset(name)) {
      keep[*catalog.position_of_id(id)] = true;
    }
  }

  std::vector<std::size_t> positions;
  std::vector<Question> questions;
  for (std::size_t pos = 0; pos < catalog.size(); ++pos) {
    if (keep[pos]) {
      positions.push_back(pos);
      questions.push_back(catalog[pos]);
    }
  }

  Dataset projected{QuestionCatalog(std::move(questions)), {}};
  projected.users.reserve(dataset.users.size());
  for (const auto& user : dataset.users) {
    UserProfile p{user.user_id, {}, user.self_label, user.assigned_label};
    p.answers.reserve(positions.size());
    for (std::size_t pos : positions) {
      p.answers.push_back(user.answers[pos]);
    }
    projected.users.push_back(std::move(p));
  }
  return projected;
}

Dataset select_subset(const Dataset& dataset, std::string_view expression) {
  const auto names = split_subset_expression(expression);
  return select_subset(dataset, names);
}

SyntheticData generate_synthetic(const QuestionCatalog& catalog, const SyntheticSpec& spec) {
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0)) {
    throw ParameterError("noise must lie in [0, 1]");
  }
  if (spec.n_users == 0) {
    throw ParameterError("n_users must be positive");
  }
  if (spec.n_planted == 0 || spec.n_planted > spec.n_users) {
    throw ParameterError("n_planted must lie in 1..n_users");
  }
  if (catalog.size() == 0) {
    throw ParameterError("catalog must have at least one question");
  }

  const std::size_t width = catalog.size();
  Rng rng(spec.seed);
  std::vector<std::vector<double>> prototypes(spec.n_planted, std::vector<double>(width));
  for (auto& prototype : prototypes) {
    for (auto& bit : prototype) {
      bit = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
  }

  SyntheticData data{Dataset{catalog, {}}, {}};
  data.dataset.users.reserve(spec.n_users);
  data.planted_labels.reserve(spec.n_users);
  for (std::size_t i = 0; i < spec.n_users; ++i) {
    const auto group = i % spec.n_planted;
    UserProfile user;
    user.user_id = format_user_id(i, spec.n_users);
    user.answers = prototypes[group];
    for (auto& bit : user.answers) {
      if (rng.bernoulli(spec.noise)) {
        bit = 1.0 - bit;
      }
    }
    data.dataset.users.push_back(std::move(user));
    data.planted_labels.push_back(static_cast<int>(group));
  }
  return data;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.catalog_width == 0) {
    throw ParameterError("catalog_width must be positive");
  }
  std::vector<Question> questions;
  questions.reserve(spec.catalog_width);
  for (std::size_t i = 0; i < spec.catalog_width; ++i) {
    Question q;
    q.id = i;
    q.alias = "s" + std::to_string(i + 1);
    q.text = "Synthetic setting " + std::to_string(i + 1);
    q.group = QuestionGroup::kGeneric;
    questions.push_back(std::move(q));
  }
  return generate_synthetic(QuestionCatalog(std::move(questions)), spec);
}

void write_planted_labels(const SyntheticData& data, std::ostream& out) {
  out << "user_id,planted_label\n";
  for (std::size_t i = 0; i < data.planted_labels.size(); ++i) {
    out << csv::escape(data.dataset.users[i].user_id) << ',' << data.planted_labels[i] << '\n';
  }
}

std::vector<std::size_t> FoldSplit::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldSplit::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

FoldSplit kfold_split(std::size_t n_users, std::size_t n_folds, std::uint64_t seed,
                      std::span<const int> strata) {
  if (n_folds == 0 || n_folds > n_users) {
    throw ParameterError("n_folds must lie in 1..n_users (" + std::to_string(n_users) + ")");
  }
  if (!strata.empty() && strata.size() != n_users) {
    throw ParameterError("strata must have one label per user");
  }
  std::vector<std::size_t> order(n_users);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  if (!strata.empty()) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return strata[a] < strata[b]; });
  }
  FoldSplit split{std::vector<std::size_t>(n_users), n_folds, seed};
  for (std::size_t i = 0; i < n_users; ++i) {
    split.fold_of[order[i]] = i % n_folds;
  }
  return split;
}

FoldSplit kfold_split(const Dataset& dataset, std::size_t n_folds, std::uint64_t seed,
                      StratifyBy stratify_by) {
  if (stratify_by == StratifyBy::kNone) {
    return kfold_split(dataset.n_users(), n_folds, seed);
  }
  std::vector<int> strata;
  strata.reserve(dataset.n_users());
  for (const auto& user : dataset.users) {
    const auto& label = stratify_by == StratifyBy::kSelfLabel ? user.self_label : user.assigned_label;
    if (!label) {
      throw ParameterError("user " + user.user_id + " has no label to stratify by");
    }
    strata.push_back(*label);
  }
  return kfold_split(dataset.n_users(), n_folds, seed, strata);
}

MaskSplit mask_settings(std::span<const std::size_t> setting_indices, double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ParameterError("alpha must lie in the open interval (0, 1)");
  }
  const std::size_t n = setting_indices.size();
  if (n < 2) {
    throw ParameterError("masking needs at least two settings");
  }
  const auto rounded = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(n)));
  const std::size_t n_query = std::clamp<std::size_t>(rounded, 1, n - 1);

  std::vector<std::size_t> pool(setting_indices.begin(), setting_indices.end());
  Rng rng(seed);
  for (std::size_t i = 0; i < n_query; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(pool[i], pool[j]);
  }
  MaskSplit split;
  split.query.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_query));
  split.held_out.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_query), pool.end());
  std::sort(split.query.begin(), split.query.end());
  std::sort(split.held_out.begin(), split.held_out.end());
  return split;
}

MaskSplit mask_settings(const UserProfile& user, double alpha, std::uint64_t seed) {
  std::vector<std::size_t> indices(user.answers.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  return mask_settings(indices, alpha, seed);
}

}  // namespace privprof
