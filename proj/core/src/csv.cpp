#include "specrage/error.hpp"
#include "specrage/mvdata.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace specrage {

namespace fs = std::filesystem;

namespace {

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view cell, const fs::path& path, std::size_t line) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
    throw FormatError(where(path, line) + ": non-numeric cell '" + std::string(cell) + "'");
  if (!std::isfinite(value)) throw FormatError(where(path, line) + ": non-finite cell '" + std::string(cell) + "'");
  return value;
}

void append_number(std::string& out, double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

std::ofstream open_for_write(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

Matrix load_matrix_csv(const fs::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && options.skip_header) continue;
    if (trim(line).empty()) continue;
    Index count = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      values.push_back(parse_double(rest.substr(0, comma), path, line_no));
      ++count;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cols < 0) cols = count;
    else if (count != cols)
      throw FormatError(where(path, line_no) + ": expected " + std::to_string(cols) + " columns, got " +
                        std::to_string(count));
    ++rows;
  }
  if (rows == 0) throw FormatError(path.string() + ": empty file");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  return m;
}

void save_matrix_csv(const fs::path& path, const Matrix& m) {
  std::string text;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) text.push_back(',');
      append_number(text, m(r, c));
    }
    text.push_back('\n');
  }
  auto out = open_for_write(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

Labels load_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Labels labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cell = trim(line);
    if (cell.empty()) continue;
    int value = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size())
      throw FormatError(where(path, line_no) + ": label is not an integer: '" + std::string(cell) + "'");
    labels.push_back(value);
  }
  if (labels.empty()) throw FormatError(path.string() + ": empty file");
  return labels;
}

void save_labels(const fs::path& path, const Labels& labels) {
  std::string text;
  for (int l : labels) {
    text += std::to_string(l);
    text.push_back('\n');
  }
  auto out = open_for_write(path);
  out << text;
}

MultiViewDataset load_views_csv(std::span<const fs::path> paths, const std::optional<fs::path>& labels_path,
                                const CsvOptions& options) {
  MultiViewDataset ds;
  for (const auto& p : paths) {
    ds.views.push_back(load_matrix_csv(p, options));
    if (ds.views.back().rows() != ds.views.front().rows())
      throw FormatError(p.string() + ": has " + std::to_string(ds.views.back().rows()) + " rows but " +
                        paths.front().string() + " has " + std::to_string(ds.views.front().rows()));
  }
  if (labels_path) {
    ds.labels = load_labels(*labels_path);
    if (!ds.views.empty() && static_cast<Index>(ds.labels->size()) != ds.size())
      throw FormatError(labels_path->string() + ": has " + std::to_string(ds.labels->size()) +
                        " labels but views have " + std::to_string(ds.size()) + " rows");
  }
  return ds;
}

std::vector<fs::path> save_views_csv(const fs::path& dir, const MultiViewDataset& ds) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  for (Index v = 0; v < ds.num_views(); ++v) {
    paths.push_back(dir / ("view_" + std::to_string(v) + ".csv"));
    save_matrix_csv(paths.back(), ds.views[v]);
  }
  if (ds.labels) save_labels(dir / "labels.csv", *ds.labels);
  if (ds.contaminated_mask) save_matrix_csv(dir / "mask.csv", ds.contaminated_mask->cast<double>());
  return paths;
}

MultiViewDataset load_dataset_dir(const fs::path& dir) {
  std::vector<fs::path> paths;
  for (Index v = 0;; ++v) {
    auto p = dir / ("view_" + std::to_string(v) + ".csv");
    if (!fs::exists(p)) break;
    paths.push_back(std::move(p));
  }
  if (paths.empty()) throw IoError(dir.string() + ": no view_<v>.csv files found");
  std::optional<fs::path> labels;
  if (fs::exists(dir / "labels.csv")) labels = dir / "labels.csv";
  auto ds = load_views_csv(paths, labels);
  if (fs::exists(dir / "mask.csv")) {
    const Matrix mask = load_matrix_csv(dir / "mask.csv");
    if (mask.rows() != ds.size() || mask.cols() != ds.num_views())
      throw FormatError((dir / "mask.csv").string() + ": mask shape does not match n x V");
    ds.contaminated_mask = mask.array() > 0.5;
  }
  return ds;
}

}  // namespace specrage
