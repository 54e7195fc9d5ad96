#pragma once

#include "gmix/core_domain.hpp"
#include "gmix/tensor.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace gmix::io {

/// Shortest text that reads back to exactly the same double.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Position of a named column; DataError naming the file if absent.
  Index column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  std::string source;
};

/// Comma-separated, optional double quotes, first line is the header.
CsvTable read_csv(const std::filesystem::path& path);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t width_;
};

double parse_double(const std::string& text, const std::string& where);
long long parse_int(const std::string& text, const std::string& where);

/// Column names and files of a survey dataset directory (dataset.json).
struct DatasetSchema {
  AgeGrid grid;
  StrataSpace space;
  std::string population_file = "population.csv";
  std::string respondents_file = "respondents.csv";
  std::string contacts_complete_file = "contacts_complete.csv";  // empty when absent
  std::string contacts_partial_file = "contacts_partial.csv";
  std::string respondent_id_column = "respondent_id";
  std::string age_column = "age";
  std::string contact_age_column = "contact_age";
  std::string count_column = "count";
  std::string contact_prefix = "contact_";

  std::string to_json() const;
  static DatasetSchema from_json(const std::string& text);
};

struct Dataset {
  DatasetSchema schema;
  PopulationTable pop;
  std::vector<Respondent> respondents;
  std::vector<ContactRecord> records;
  Mode mode = Mode::Complete;

  SurveyTensor survey() const;
};

/// Reads dataset.json plus the population, respondent and contact files for `mode`.
Dataset read_dataset(const std::filesystem::path& dir, Mode mode);

/// Writes dataset.json, population.csv, respondents.csv and both contact files
/// (the partial file drops the contact strata of `complete_records`).
void write_dataset(const std::filesystem::path& dir, const DatasetSchema& schema, const PopulationTable& pop,
                   const std::vector<Respondent>& respondents, const std::vector<ContactRecord>& complete_records);

void write_population(const std::filesystem::path& path, const DatasetSchema& schema, const PopulationTable& pop);

/// Long format: stratum, contact_stratum (complete layout only), age, contact_age, value.
void write_tensor(const std::filesystem::path& path, const Tensor3& t, Mode layout, const StrataSpace& space,
                  const AgeGrid& grid);
/// An A×A matrix in long format: age, contact_age, value.
void write_matrix(const std::filesystem::path& path, const RowMatrix& m, const AgeGrid& grid);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// 64-bit FNV-1a hash rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace gmix::io
