#include <algorithm>
#include <fstream>
#include <sstream>

#include "latentiv/error.hpp"
#include "latentiv/ingest.hpp"

namespace latentiv::ingest {

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
  std::size_t pos = 0;
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) pos = 3;

  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> starts;
  std::vector<std::string> record;
  std::string field;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool in_quotes = false;
  bool pending = false;  // anything seen since the last record break

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    // Blank lines carry no data.
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
      starts.push_back(record_line);
    }
    record.clear();
    pending = false;
  };

  for (; pos < text.size(); ++pos) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          ++pos;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (!pending) record_line = line;
    pending = true;
    if (c == '"' && field.empty()) {
      in_quotes = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      end_record();
      ++line;
    } else if (c == '\r') {
      // CRLF or stray CR; the newline (if any) ends the record.
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::UnparseableValue,
                "unterminated quoted field starting on line " + std::to_string(record_line));
  }
  if (pending) end_record();

  CsvTable table;
  if (records.empty()) throw Error(ErrorCode::MissingColumn, "CSV has no header row");
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw Error(ErrorCode::UnparseableValue,
                  "line " + std::to_string(starts[r]) + ": expected " +
                      std::to_string(table.header.size()) + " fields, found " +
                      std::to_string(records[r].size()));
    }
    table.rows.push_back(std::move(records[r]));
    table.line_numbers.push_back(starts[r]);
  }
  return table;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::Io, "read failed for '" + path + "'");
  return buffer.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << contents;
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

}  // namespace latentiv::ingest
