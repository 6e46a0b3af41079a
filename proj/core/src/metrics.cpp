#include "specrage/metrics.hpp"

#include "specrage/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace specrage {

std::vector<Index> solve_assignment(const Matrix& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n) throw ParameterError("solve_assignment: cost matrix must be square");
  if (n == 0) return {};
  // Potentials-based Hungarian method with 1-based sentinel column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> assignment(n);
  for (Index j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

namespace {

void check_lengths(std::span<const int> pred, std::span<const int> truth, const char* who) {
  if (pred.size() != truth.size())
    throw ParameterError(std::string(who) + ": label vectors differ in length (" + std::to_string(pred.size()) +
                         " vs " + std::to_string(truth.size()) + ")");
  if (pred.empty()) throw ParameterError(std::string(who) + ": empty labelings");
}

std::vector<int> distinct(std::span<const int> labels) {
  std::vector<int> out(labels.begin(), labels.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double entropy(const Vector& counts, double n) {
  double h = 0.0;
  for (Index i = 0; i < counts.size(); ++i)
    if (counts(i) > 0) h -= counts(i) / n * std::log(counts(i) / n);
  return h;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

Matrix contingency_table(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred, truth, "contingency_table");
  const auto p = distinct(pred);
  const auto t = distinct(truth);
  Matrix table = Matrix::Zero(static_cast<Index>(p.size()), static_cast<Index>(t.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto r = std::lower_bound(p.begin(), p.end(), pred[i]) - p.begin();
    const auto c = std::lower_bound(t.begin(), t.end(), truth[i]) - t.begin();
    table(r, c) += 1.0;
  }
  return table;
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth) {
  const Matrix table = contingency_table(pred, truth);
  const Index size = std::max(table.rows(), table.cols());
  Matrix cost = Matrix::Zero(size, size);
  cost.topLeftCorner(table.rows(), table.cols()) = -table;
  const auto assignment = solve_assignment(cost);
  double matched = 0.0;
  for (Index r = 0; r < table.rows(); ++r)
    if (assignment[r] < table.cols()) matched += table(r, assignment[r]);
  return matched / static_cast<double>(pred.size());
}

double nmi(std::span<const int> pred, std::span<const int> truth) {
  const Matrix table = contingency_table(pred, truth);
  const double n = static_cast<double>(pred.size());
  const Vector rows = table.rowwise().sum();
  const Vector cols = table.colwise().sum().transpose();
  const double hp = entropy(rows, n);
  const double ht = entropy(cols, n);
  if (table.rows() == 1 && table.cols() == 1) return 1.0;
  if (table.rows() == 1 || table.cols() == 1) return 0.0;
  double mi = 0.0;
  for (Index r = 0; r < table.rows(); ++r)
    for (Index c = 0; c < table.cols(); ++c) {
      const double nij = table(r, c);
      if (nij > 0) mi += nij / n * std::log(n * nij / (rows(r) * cols(c)));
    }
  return std::clamp(mi / std::sqrt(hp * ht), 0.0, 1.0);
}

double ari(std::span<const int> pred, std::span<const int> truth) {
  const Matrix table = contingency_table(pred, truth);
  const double n = static_cast<double>(pred.size());
  double sum_ij = 0.0;
  for (Index r = 0; r < table.rows(); ++r)
    for (Index c = 0; c < table.cols(); ++c) sum_ij += choose2(table(r, c));
  double sum_a = 0.0, sum_b = 0.0;
  for (Index r = 0; r < table.rows(); ++r) sum_a += choose2(table.row(r).sum());
  for (Index c = 0; c < table.cols(); ++c) sum_b += choose2(table.col(c).sum());
  const double total = choose2(n);
  const double expected = total > 0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  // Both labelings are all-singletons or both are one cluster: perfect agreement.
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

double relative_degradation(double clean_metric, double contaminated_metric) {
  if (!(clean_metric > 0.0)) throw ParameterError("relative_degradation: clean metric must be positive");
  return 100.0 * (clean_metric - contaminated_metric) / clean_metric;
}

namespace {

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <class T = double>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw FormatError("report: bad number for '" + key + "': '" + value + "'");
  return v;
}

}  // namespace

std::string EvalReport::serialize() const {
  std::ostringstream out;
  out << "acc " << format_number(acc) << "\n";
  out << "nmi " << format_number(nmi) << "\n";
  out << "ari " << format_number(ari) << "\n";
  if (grassmann_dist_sq) out << "grassmann_dist_sq " << format_number(*grassmann_dist_sq) << "\n";
  for (std::size_t v = 0; v < offdiag_ratios.size(); ++v)
    out << "offdiag_ratio." << v << " " << format_number(offdiag_ratios[v]) << "\n";
  if (degradation_pct) out << "degradation_pct " << format_number(*degradation_pct) << "\n";
  out << "seed " << seed << "\n";
  for (const auto& [k, v] : config) out << "config." << k << " " << v << "\n";
  return out.str();
}

EvalReport EvalReport::parse(const std::string& text) {
  EvalReport r;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::size_t, double> ratios;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto space = line.find(' ');
    if (space == std::string::npos) throw FormatError("report line " + std::to_string(line_no) + ": missing value");
    const std::string key = line.substr(0, space);
    const std::string value = line.substr(space + 1);
    if (key == "acc") r.acc = parse_number(key, value);
    else if (key == "nmi") r.nmi = parse_number(key, value);
    else if (key == "ari") r.ari = parse_number(key, value);
    else if (key == "grassmann_dist_sq") r.grassmann_dist_sq = parse_number(key, value);
    else if (key == "degradation_pct") r.degradation_pct = parse_number(key, value);
    else if (key == "seed") r.seed = parse_number<std::uint64_t>(key, value);
    else if (key.rfind("offdiag_ratio.", 0) == 0) ratios[parse_number<std::size_t>(key, key.substr(14))] = parse_number(key, value);
    else if (key.rfind("config.", 0) == 0) r.config[key.substr(7)] = value;
    else throw FormatError("report line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  for (const auto& [v, ratio] : ratios) {
    if (v != r.offdiag_ratios.size()) throw FormatError("report: offdiag_ratio indices are not contiguous");
    r.offdiag_ratios.push_back(ratio);
  }
  return r;
}

void EvalReport::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << serialize();
}

EvalReport EvalReport::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

EvalReport evaluate_embedding(const Matrix& embedding, std::span<const int> truth, Index num_clusters,
                              std::uint64_t seed, int restarts) {
  if (static_cast<Index>(truth.size()) != embedding.rows())
    throw ParameterError("evaluate_embedding: label count does not match embedding rows");
  KMeansOptions options;
  options.restarts = restarts;
  const auto clusters = kmeans(embedding, num_clusters, seed, options);
  EvalReport report;
  report.acc = clustering_accuracy(clusters.labels, truth);
  report.nmi = nmi(clusters.labels, truth);
  report.ari = ari(clusters.labels, truth);
  report.seed = seed;
  return report;
}

}  // namespace specrage
