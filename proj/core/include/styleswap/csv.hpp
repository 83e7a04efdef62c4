#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <locale>
#include <sstream>
#include <string>
#include <vector>

#include "styleswap/error.hpp"

namespace styleswap {

/// Minimal CSV writer: header row, '.' decimal separator, '\n' line ends.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    line_.imbue(std::locale::classic());
    line_.precision(10);
    row(header);
  }

  template <typename... Cells>
  void add(const Cells&... cells) {
    static_assert(sizeof...(Cells) > 0);
    if (sizeof...(Cells) != columns_) throw ConfigError("CSV row has the wrong number of cells");
    bool first = true;
    ((line_ << (first ? "" : ",") << cells, first = false), ...);
    line_ << '\n';
  }

  std::string str() const { return line_.str(); }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << line_.str();
    if (!out) throw InputError("failed writing '" + path.string() + "'");
  }

 private:
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) line_ << (i ? "," : "") << cells[i];
    line_ << '\n';
  }

  std::size_t columns_;
  std::ostringstream line_;
};

}  // namespace styleswap
