#include "volcano/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "volcano/errors.hpp"
#include "volcano/rng.hpp"

namespace volcano {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

bool is_missing(const std::string& text) { return text.empty() || text == "NA" || text == "?" || text == "nan"; }

// Ordered shuffled indices per class (or one group for regression).
std::vector<std::vector<std::size_t>> groups_of(const Dataset& d, bool by_class, Rng& rng) {
  std::vector<std::vector<std::size_t>> groups;
  if (by_class) {
    groups.resize(d.class_labels.size());
    for (std::size_t i = 0; i < d.rows(); ++i) groups[static_cast<std::size_t>(d.y[i])].push_back(i);
  } else {
    groups.emplace_back(d.rows());
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }
  for (auto& g : groups) {
    for (std::size_t i = g.size(); i > 1; --i) std::swap(g[i - 1], g[rng.index(i)]);
  }
  return groups;
}

// Largest-remainder allocation of `total` picks across groups, proportional to size.
std::vector<std::size_t> allocate(const std::vector<std::vector<std::size_t>>& groups, std::size_t total) {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  std::vector<std::size_t> quota(groups.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double exact = static_cast<double>(groups[i].size()) * static_cast<double>(total) / static_cast<double>(n);
    quota[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[i];
    remainders.emplace_back(-(exact - std::floor(exact)), i);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r) {
    const auto i = remainders[r].second;
    if (quota[i] < groups[i].size()) {
      ++quota[i];
      ++assigned;
    }
  }
  return quota;
}

}  // namespace

Dataset Dataset::take(std::span<const std::size_t> indices) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(indices[r]));
    out.y.push_back(y[indices[r]]);
  }
  out.column_names = column_names;
  out.column_kinds = column_kinds;
  out.class_labels = class_labels;
  out.task = task;
  return out;
}

Dataset concat_rows(const Dataset& a, const Dataset& b) {
  Dataset out = a;
  out.x.resize(a.x.rows() + b.x.rows(), a.x.cols());
  out.x << a.x, b.x;
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  return out;
}

Dataset parse_csv_dataset(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DatasetError("empty dataset: " + source);
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  const auto header = split_csv_line(line);
  if (header.size() < 2) throw DatasetError("dataset needs at least 2 columns (features + label): " + source);
  std::vector<std::vector<std::string>> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DatasetError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                         " fields, got " + std::to_string(fields.size()));
    cells.push_back(std::move(fields));
  }
  if (cells.empty()) throw DatasetError("empty dataset: " + source);

  const std::size_t n = cells.size();
  const std::size_t label_col = header.size() - 1;
  Dataset d;

  // Label column.
  bool label_numeric = true;
  for (const auto& row : cells)
    if (!parse_number(row[label_col])) label_numeric = false;
  std::set<double> distinct_numeric;
  bool label_integral = label_numeric;
  if (label_numeric) {
    for (const auto& row : cells) {
      const double v = *parse_number(row[label_col]);
      distinct_numeric.insert(v);
      if (v != std::floor(v)) label_integral = false;
    }
  }
  const bool classification = !label_numeric || (label_integral && distinct_numeric.size() <= 20);
  d.task = classification ? TaskKind::classification : TaskKind::regression;
  if (classification) {
    std::vector<std::string> raw;
    for (const auto& row : cells) raw.push_back(row[label_col]);
    if (label_numeric) {
      // Numeric class labels sort numerically.
      for (double v : distinct_numeric) {
        std::ostringstream s;
        s << v;
        d.class_labels.push_back(s.str());
      }
      for (const auto& row : cells) {
        const double v = *parse_number(row[label_col]);
        d.y.push_back(static_cast<double>(std::distance(distinct_numeric.begin(), distinct_numeric.find(v))));
      }
    } else {
      std::map<std::string, std::size_t> index;
      for (const auto& label : raw)
        if (!index.contains(label)) {
          index.emplace(label, d.class_labels.size());
          d.class_labels.push_back(label);
        }
      for (const auto& label : raw) d.y.push_back(static_cast<double>(index.at(label)));
    }
  } else {
    for (const auto& row : cells) d.y.push_back(*parse_number(row[label_col]));
  }

  // Feature columns.
  std::vector<std::vector<double>> expanded;
  for (std::size_t c = 0; c < label_col; ++c) {
    bool numeric = true;
    for (const auto& row : cells)
      if (!is_missing(row[c]) && !parse_number(row[c])) numeric = false;
    if (numeric) {
      std::vector<double> col(n);
      double sum = 0.0;
      std::size_t present = 0;
      bool integral = true;
      std::set<double> distinct;
      for (std::size_t r = 0; r < n; ++r) {
        if (auto v = parse_number(cells[r][c])) {
          col[r] = *v;
          sum += *v;
          ++present;
          distinct.insert(*v);
          if (*v != std::floor(*v)) integral = false;
        } else {
          col[r] = std::numeric_limits<double>::quiet_NaN();
        }
      }
      const double mean = present > 0 ? sum / static_cast<double>(present) : 0.0;
      for (auto& v : col)
        if (std::isnan(v)) v = mean;
      d.column_names.push_back(header[c]);
      d.column_kinds.push_back(integral && distinct.size() <= 20 ? FeatureKind::discrete : FeatureKind::continuous);
      expanded.push_back(std::move(col));
    } else {
      std::map<std::string, std::size_t> counts;
      std::vector<std::string> order;
      for (const auto& row : cells) {
        if (is_missing(row[c])) continue;
        if (counts[row[c]]++ == 0) order.push_back(row[c]);
      }
      std::string mode = order.empty() ? std::string() : order.front();
      for (const auto& cat : order)
        if (counts[cat] > counts[mode]) mode = cat;
      d.column_names.push_back(header[c]);
      d.column_kinds.push_back(FeatureKind::categorical);
      if (order.empty()) order.push_back(mode);
      for (const auto& cat : order) {
        std::vector<double> col(n);
        for (std::size_t r = 0; r < n; ++r) {
          const auto& v = is_missing(cells[r][c]) ? mode : cells[r][c];
          col[r] = v == cat ? 1.0 : 0.0;
        }
        expanded.push_back(std::move(col));
      }
    }
  }
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(expanded.size()));
  for (std::size_t c = 0; c < expanded.size(); ++c)
    for (std::size_t r = 0; r < n; ++r) d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = expanded[c][r];
  return d;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dataset '" + path.string() + "'");
  return parse_csv_dataset(in, path.string());
}

Splits split_train_valid_test(const Dataset& dataset, std::uint64_t seed) {
  const std::size_t n = dataset.rows();
  if (n < 10) throw DatasetError("dataset too small to split (" + std::to_string(n) + " rows, need >= 10)");
  Rng rng(mix_seed(seed, 0x5eed));
  bool stratified = dataset.task == TaskKind::classification;
  if (stratified) {
    std::vector<std::size_t> counts(dataset.class_labels.size(), 0);
    for (double label : dataset.y) ++counts[static_cast<std::size_t>(label)];
    for (auto c : counts)
      if (c > 0 && c < 3) stratified = false;
  }
  auto groups = groups_of(dataset, stratified, rng);
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * 0.2));
  const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n - n_test) * 0.25));
  const auto test_quota = allocate(groups, n_test);
  std::vector<std::size_t> test, valid, train;
  std::vector<std::vector<std::size_t>> rest(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    test.insert(test.end(), groups[g].begin(), groups[g].begin() + static_cast<std::ptrdiff_t>(test_quota[g]));
    rest[g].assign(groups[g].begin() + static_cast<std::ptrdiff_t>(test_quota[g]), groups[g].end());
  }
  const auto valid_quota = allocate(rest, n_valid);
  for (std::size_t g = 0; g < rest.size(); ++g) {
    valid.insert(valid.end(), rest[g].begin(), rest[g].begin() + static_cast<std::ptrdiff_t>(valid_quota[g]));
    train.insert(train.end(), rest[g].begin() + static_cast<std::ptrdiff_t>(valid_quota[g]), rest[g].end());
  }
  std::sort(test.begin(), test.end());
  std::sort(valid.begin(), valid.end());
  std::sort(train.begin(), train.end());
  return Splits{dataset.take(train), dataset.take(valid), dataset.take(test), stratified};
}

Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DomainError("subsample fraction must lie in (0, 1]");
  const std::size_t n = dataset.rows();
  const auto size = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  if (size < 2) throw DatasetError("subsample would keep fewer than 2 rows");
  if (size == n) return dataset;
  Rng rng(mix_seed(seed, 0x5ab5));
  auto groups = groups_of(dataset, dataset.task == TaskKind::classification, rng);
  const auto quota = allocate(groups, size);
  std::vector<std::size_t> keep;
  for (std::size_t g = 0; g < groups.size(); ++g)
    keep.insert(keep.end(), groups[g].begin(), groups[g].begin() + static_cast<std::ptrdiff_t>(quota[g]));
  std::sort(keep.begin(), keep.end());
  return dataset.take(keep);
}

}  // namespace volcano
