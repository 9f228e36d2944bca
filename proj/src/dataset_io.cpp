#include "comt/dataset_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace comt {

namespace {

void append_double(std::string& out, double value) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) fail(ErrorCode::kIoError, "cannot format number");
  out.append(buf.data(), end);
}

double parse_double(std::string_view text, const std::string& where) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    fail(ErrorCode::kParseError, where + ": not a number '" + std::string(text) + "'");
  return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

}  // namespace

std::filesystem::path meta_path_for(const std::filesystem::path& csv) {
  auto p = csv;
  p += ".meta";
  return p;
}

void write_dataset_csv(const std::filesystem::path& path, const Matrix& features, const Vector& labels) {
  if (features.rows() != labels.size()) fail(ErrorCode::kDimensionMismatch, "features and labels differ in length");
  std::string text = "y";
  for (Eigen::Index j = 0; j < features.cols(); ++j) text += ",x" + std::to_string(j + 1);
  text += '\n';
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    append_double(text, labels[i]);
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      text += ',';
      append_double(text, features(i, j));
    }
    text += '\n';
  }
  auto out = open_out(path);
  out << text;
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

void read_dataset_csv(const std::filesystem::path& path, Matrix& features, Vector& labels) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kParseError, path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  if (header.empty() || header.front() != "y") fail(ErrorCode::kParseError, path.string() + ": header must start with y");
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  for (Eigen::Index j = 0; j < d; ++j)
    if (header[j + 1] != "x" + std::to_string(j + 1))
      fail(ErrorCode::kParseError, path.string() + ": unexpected header column '" + std::string(header[j + 1]) + "'");

  std::vector<double> values;
  std::size_t line_no = 1;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (static_cast<Eigen::Index>(cells.size()) != d + 1)
      fail(ErrorCode::kParseError, where + ": expected " + std::to_string(d + 1) + " columns");
    for (const auto cell : cells) values.push_back(parse_double(cell, where));
    ++rows;
  }
  labels.resize(rows);
  features.resize(rows, d);
  for (Eigen::Index i = 0; i < rows; ++i) {
    labels[i] = values[static_cast<std::size_t>(i * (d + 1))];
    for (Eigen::Index j = 0; j < d; ++j) features(i, j) = values[static_cast<std::size_t>(i * (d + 1) + 1 + j)];
  }
}

void write_meta(const std::filesystem::path& path, const DatasetMeta& meta) {
  std::string text = "[dataset]\n";
  text += "task=" + std::string(to_string(meta.task)) + "\n";
  text += "seed=" + std::to_string(meta.seed) + "\n";
  text += "n=" + std::to_string(meta.n) + "\n";
  text += "d=" + std::to_string(meta.d) + "\n";
  text += "[generator]\n";
  text += "n_clusters=" + std::to_string(meta.geometry.n_clusters) + "\n";
  text += "spacing=";
  append_double(text, meta.geometry.spacing);
  text += "\nstddev=";
  append_double(text, meta.geometry.stddev);
  text += "\n";
  if (meta.true_w.size() > 0) {
    text += "true_w=";
    for (Eigen::Index j = 0; j < meta.true_w.size(); ++j) {
      if (j > 0) text += ' ';
      append_double(text, meta.true_w[j]);
    }
    text += "\n";
  }
  auto out = open_out(path);
  out << text;
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

DatasetMeta read_meta(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ptree_error& e) {
    fail(ErrorCode::kParseError, e.what());
  }
  DatasetMeta meta;
  try {
    meta.task = parse_task(tree.get<std::string>("dataset.task"));
    meta.seed = tree.get<std::uint64_t>("dataset.seed");
    meta.n = tree.get<Eigen::Index>("dataset.n");
    meta.d = tree.get<Eigen::Index>("dataset.d");
    meta.geometry.n_clusters = tree.get<int>("generator.n_clusters");
    meta.geometry.spacing = tree.get<double>("generator.spacing");
    meta.geometry.stddev = tree.get<double>("generator.stddev");
    if (const auto w = tree.get_optional<std::string>("generator.true_w")) {
      std::vector<double> entries;
      std::istringstream ss(*w);
      for (std::string tok; ss >> tok;) entries.push_back(parse_double(tok, path.string() + ": true_w"));
      meta.true_w = Eigen::Map<const Vector>(entries.data(), static_cast<Eigen::Index>(entries.size()));
    }
  } catch (const pt::ptree_error& e) {
    fail(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  return meta;
}

LabeledData parse_libsvm(std::istream& in, TaskKind task, std::optional<Eigen::Index> dim) {
  struct Row {
    double label;
    std::vector<std::pair<Eigen::Index, double>> entries;
  };
  std::vector<Row> rows;
  Eigen::Index max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;
    Row row{parse_double(tok, where), {}};
    while (ss >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) fail(ErrorCode::kParseError, where + ": expected index:value, got '" + tok + "'");
      long long index = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + colon, index);
      if (ec != std::errc{} || ptr != tok.data() + colon)
        fail(ErrorCode::kParseError, where + ": bad index '" + tok.substr(0, colon) + "'");
      if (index <= 0) fail(ErrorCode::kIndexError, where + ": index must be positive, got " + std::to_string(index));
      const double value = parse_double(std::string_view(tok).substr(colon + 1), where);
      row.entries.emplace_back(static_cast<Eigen::Index>(index), value);
      max_index = std::max<Eigen::Index>(max_index, static_cast<Eigen::Index>(index));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorCode::kParseError, "no instances in LIBSVM input");
  const Eigen::Index width = dim.value_or(max_index);
  if (width < 1) fail(ErrorCode::kParseError, "LIBSVM input has no features");
  if (max_index > width)
    fail(ErrorCode::kIndexError, "feature index " + std::to_string(max_index) + " exceeds dimension " +
                                     std::to_string(width));

  LabeledData data;
  data.features = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), width);
  data.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    data.labels[r] = rows[i].label;
    for (const auto& [index, value] : rows[i].entries) data.features(r, index - 1) = value;
  }
  if (task == TaskKind::kBinaryClassification) {
    std::map<double, int> distinct;
    for (double y : data.labels) distinct[y] = 0;
    if (distinct.size() > 2) fail(ErrorCode::kLabelDomainError, "classification input has more than two label values");
    const double high = distinct.rbegin()->first;
    // A single label value keeps its sign.
    for (double& y : data.labels) y = distinct.size() == 2 ? (y == high ? 1.0 : -1.0) : (y > 0 ? 1.0 : -1.0);
  }
  return data;
}

LabeledData load_libsvm(const std::filesystem::path& path, TaskKind task, std::optional<Eigen::Index> dim) {
  auto in = open_in(path);
  try {
    return parse_libsvm(in, task, dim);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace comt
