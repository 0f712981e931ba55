#include "npresid/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace npresid {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t line, const std::string& column) {
  const std::string cell = trim(raw);
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw ValidationError("line " + std::to_string(line) + ", column '" + column +
                          "': cannot parse '" + cell + "' as a number");
  }
  if (!std::isfinite(v)) {
    throw ValidationError("line " + std::to_string(line) + ", column '" + column +
                          "': non-finite value '" + cell + "'");
  }
  return v;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in, bool require_y) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty CSV: header row x,y,z1..zd is required");
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);

  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!index.emplace(header[c], c).second) {
      throw ValidationError("schema error: duplicate column '" + header[c] + "'");
    }
  }
  std::vector<std::string> problems;
  if (!index.contains("x")) problems.push_back("missing column 'x'");
  if (require_y && !index.contains("y")) problems.push_back("missing column 'y'");
  std::size_t d = 0;
  while (index.contains("z" + std::to_string(d + 1))) ++d;
  if (d == 0) problems.push_back("missing column 'z1'");
  const bool has_y = index.contains("y");
  for (const auto& h : header) {
    const bool known = h == "x" || h == "y";
    bool is_z = false;
    for (std::size_t j = 1; j <= d; ++j) is_z |= (h == "z" + std::to_string(j));
    if (!known && !is_z) problems.push_back("unexpected column '" + h + "'");
  }
  if (!problems.empty()) {
    std::string msg = "schema error:";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : " ") + problems[i];
    throw ValidationError(msg + " (expected header x,y,z1..zd)");
  }

  std::vector<double> x, y;
  std::vector<std::vector<double>> z(d);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(cells.size()));
    }
    x.push_back(parse_cell(cells[index["x"]], line_no, "x"));
    if (has_y) y.push_back(parse_cell(cells[index["y"]], line_no, "y"));
    for (std::size_t j = 0; j < d; ++j) {
      const std::string name = "z" + std::to_string(j + 1);
      z[j].push_back(parse_cell(cells[index[name]], line_no, name));
    }
  }
  if (x.size() < 2) throw ValidationError("CSV needs at least 2 data rows");

  Matrix zm(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) zm(i, j) = z[j][i];
  }
  std::optional<std::vector<double>> yo;
  if (has_y) yo = std::move(y);
  return Dataset(std::move(x), std::move(yo), std::move(zm), default_column_names(d, has_y));
}

Dataset read_dataset_csv_file(const std::string& path, bool require_y) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_dataset_csv(in, require_y);
}

void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  out << "x";
  if (ds.has_y()) out << ",y";
  for (std::size_t j = 0; j < ds.dim(); ++j) out << ",z" << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << format_double(ds.x()[i]);
    if (ds.has_y()) out << ',' << format_double(ds.y()[i]);
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ',' << format_double(ds.z()(i, j));
    out << '\n';
  }
}

}  // namespace npresid
