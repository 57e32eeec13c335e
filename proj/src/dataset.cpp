#include "safereg/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "safereg/error.hpp"

namespace safereg {

ObservationDataset::ObservationDataset(std::vector<std::string> names,
                                       std::vector<Eigen::VectorXd> columns)
    : names_(std::move(names)), columns_(std::move(columns)) {
  if (names_.size() != columns_.size())
    throw Error(ErrorCode::SchemaMismatch, "column names and data disagree in count");
  if (names_.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no columns");
  std::set<std::string> seen;
  for (const auto& n : names_)
    if (!seen.insert(n).second) throw Error(ErrorCode::SchemaMismatch, "duplicate column '" + n + "'");
  rows_ = static_cast<std::size_t>(columns_.front().size());
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (static_cast<std::size_t>(columns_[i].size()) != rows_)
      throw Error(ErrorCode::SchemaMismatch, "column '" + names_[i] + "' has a different length");
  }
  if (rows_ == 0) throw Error(ErrorCode::EmptyDataset, "dataset has no rows");
}

bool ObservationDataset::has(std::string_view name) const noexcept {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const Eigen::VectorXd& ObservationDataset::column(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end())
    throw Error(ErrorCode::MissingColumn, "dataset has no column '" + std::string(name) + "'");
  return columns_[static_cast<std::size_t>(it - names_.begin())];
}

ObservationDataset ObservationDataset::select_rows(const std::vector<std::size_t>& rows) const {
  std::vector<Eigen::VectorXd> cols;
  cols.reserve(columns_.size());
  for (const auto& c : columns_) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      out(static_cast<Eigen::Index>(i)) = c(static_cast<Eigen::Index>(rows[i]));
    cols.push_back(std::move(out));
  }
  return ObservationDataset(names_, std::move(cols));
}

std::vector<std::vector<std::string>> split_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  bool at_line_start = true;

  auto end_record = [&] {
    if (field_started || !record.empty()) {
      record.push_back(std::move(field));
      records.push_back(std::move(record));
    }
    record.clear();
    field.clear();
    field_started = false;
    at_line_start = true;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (at_line_start && c == '#') {
      while (i < text.size() && text[i] != '\n') ++i;
      continue;
    }
    at_line_start = false;
    switch (c) {
      case '"':
        quoted = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) throw Error(ErrorCode::SchemaMismatch, "unterminated quoted field");
  end_record();
  return records;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

ObservationDataset parse_csv(std::string_view text, const std::vector<std::string>& schema) {
  const auto records = split_csv(text);
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "CSV has no header row");

  std::vector<std::string> header;
  for (const auto& h : records.front()) header.emplace_back(trim(h));
  for (const auto& required : schema) {
    if (std::find(header.begin(), header.end(), required) == header.end())
      throw Error(ErrorCode::SchemaMismatch, "row 1, column '" + required + "': missing from header");
  }

  const auto n = records.size() - 1;
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "CSV has a header but no data rows");
  std::vector<Eigen::VectorXd> columns(header.size(), Eigen::VectorXd(static_cast<Eigen::Index>(n)));
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size()) {
      throw Error(ErrorCode::SchemaMismatch, "row " + std::to_string(r + 1) + ": expected " +
                                                 std::to_string(header.size()) + " fields, got " +
                                                 std::to_string(rec.size()));
    }
    for (std::size_t c = 0; c < rec.size(); ++c) {
      double v = 0.0;
      if (!parse_double(rec[c], v)) {
        throw Error(ErrorCode::SchemaMismatch, "row " + std::to_string(r + 1) + ", column '" +
                                                   header[c] + "': cannot parse '" + rec[c] + "'");
      }
      columns[c](static_cast<Eigen::Index>(r - 1)) = v;
    }
  }
  return ObservationDataset(std::move(header), std::move(columns));
}

ObservationDataset load_csv(const std::string& path, const std::vector<std::string>& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  if (text.empty()) throw Error(ErrorCode::EmptyDataset, "'" + path + "' is empty");
  return parse_csv(text, schema);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_csv(const std::string& path, const ObservationDataset& data,
               std::string_view header_comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  const auto& names = data.names();
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << csv_escape(names[c]);
  out << '\n';
  std::array<char, 32> buf{};
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t c = 0; c < names.size(); ++c) {
      const double v = data.column(names[c])(static_cast<Eigen::Index>(r));
      auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
      out << (c ? "," : "") << std::string_view(buf.data(), static_cast<std::size_t>(ptr - buf.data()));
    }
    out << '\n';
  }
}

}  // namespace safereg
