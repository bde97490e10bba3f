#include "cfa/io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cfa {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
  for (int j = 0; j < data.p(); ++j) {
    if (j > 0) out << ',';
    out << data.variables[j];
  }
  out << '\n';
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.p(); ++j) {
      if (j > 0) out << ',';
      if (data.kinds[j] == VarKind::Ordinal)
        out << static_cast<long long>(data.values(i, j));
      else
        out << format_double(data.values(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing dataset CSV");
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("line 1: empty CSV input");

  Dataset data;
  {
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) data.variables.push_back(cell);
  }
  const std::size_t p = data.variables.size();
  if (p == 0) throw std::runtime_error("line 1: no columns");
  data.kinds.assign(p, VarKind::Continuous);
  data.categories.assign(p, 0);

  std::vector<double> cells;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t col = 0;
    std::size_t pos = 0;
    while (true) {
      auto comma = line.find(',', pos);
      std::string cell =
          comma == std::string::npos ? line.substr(pos) : line.substr(pos, comma - pos);
      const char* begin = cell.c_str();
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (cell.empty() || end != begin + cell.size())
        throw std::runtime_error("line " + std::to_string(line_no) + ": bad number '" +
                                 cell + "'");
      cells.push_back(v);
      ++col;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (col != p)
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(p) + " columns, got " + std::to_string(col));
  }
  const std::size_t n = cells.size() / p;
  if (n == 0) throw std::runtime_error("CSV has a header but no data rows");
  data.values.resize(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) data.values(i, j) = cells[i * p + j];
  return data;
}

void write_dataset_csv_file(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset_csv(data, out);
}

Dataset read_dataset_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_dataset_csv(in);
}

}  // namespace cfa
