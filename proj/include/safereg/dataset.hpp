#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace safereg {

/// Column store of passive observations; every column has the same length.
class ObservationDataset {
 public:
  ObservationDataset() = default;

  /// Throws SchemaMismatch on duplicate names or unequal lengths, EmptyDataset if n == 0.
  ObservationDataset(std::vector<std::string> names, std::vector<Eigen::VectorXd> columns);

  std::size_t rows() const noexcept { return rows_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  bool has(std::string_view name) const noexcept;

  /// Throws MissingColumn.
  const Eigen::VectorXd& column(std::string_view name) const;

  /// Rows selected by index, in the given order (repeats allowed).
  ObservationDataset select_rows(const std::vector<std::size_t>& rows) const;

 private:
  std::vector<std::string> names_;
  std::vector<Eigen::VectorXd> columns_;
  std::size_t rows_ = 0;
};

/// Reads a CSV with a header row (RFC-4180 quoting; leading '#' lines are skipped).
/// Every name in `schema` must appear in the header; extra columns are kept.
/// Throws IoError, EmptyDataset, SchemaMismatch (row/column named in the message).
ObservationDataset load_csv(const std::string& path, const std::vector<std::string>& schema = {});

ObservationDataset parse_csv(std::string_view text, const std::vector<std::string>& schema = {});

/// Splits one CSV document into records of fields.
std::vector<std::vector<std::string>> split_csv(std::string_view text);

std::string csv_escape(std::string_view field);

void write_csv(const std::string& path, const ObservationDataset& data, std::string_view header_comment = {});

}  // namespace safereg
