#pragma once

// Tidy CSV output. The first line is a schema tag "# schema=<name>.v<k>";
// doubles are written with 17 significant digits so they parse back exactly.

#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mulann {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::string schema;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    if (row.size() != header.size())
      throw std::logic_error("csv: row has " + std::to_string(row.size()) + " fields, header has " +
                             std::to_string(header.size()));
    for (const auto& f : row)
      if (f.find_first_of(",\n\"") != std::string::npos) throw std::logic_error("csv: field needs quoting: " + f);
    rows.push_back(std::move(row));
  }

  std::string str() const {
    std::ostringstream os;
    os << "# schema=" << schema << "\n";
    auto line = [&os](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::out_of_range("csv: no column '" + name + "'");
  }
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ls(s);
    while (std::getline(ls, field, ',')) out.push_back(field);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.rfind("# schema=", 0) == 0) {
      t.schema = line.substr(9);
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (!have_header) {
      t.header = split(line);
      have_header = true;
    } else {
      auto r = split(line);
      if (r.size() != t.header.size()) throw std::runtime_error("csv: ragged row '" + line + "'");
      t.rows.push_back(std::move(r));
    }
  }
  return t;
}

}  // namespace mulann
