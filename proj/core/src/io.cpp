#include "gmix/io.hpp"

#include "gmix/error.hpp"

#include "json.hpp"

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

namespace gmix::io {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Index CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Index>(i);
  throw DataError(source + ": missing column '" + name + "'");
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& h : header)
    if (h == name) return true;
  return false;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CsvTable t;
  t.source = path.string();
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  t.header = split_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (fields.size() != t.header.size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), path_(path), width_(header.size()) {
  if (!out_) throw DataError("cannot write " + path.string());
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != width_) throw DataError(path_.string() + ": row width does not match the header");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << quote(fields[i]);
  }
  out_ << '\n';
}

double parse_double(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": '" + text + "' is not a number");
  }
}

long long parse_int(const std::string& text, const std::string& where) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw DataError(where + ": '" + text + "' is not an integer");
  return v;
}

std::string DatasetSchema::to_json() const {
  json j;
  j["grid"] = {{"min_age", grid.min_age()}, {"max_age", grid.max_age()}};
  j["features"] = json::array();
  for (const auto& f : space.features()) j["features"].push_back({{"name", f.name}, {"categories", f.categories}});
  auto optional_file = [](const std::string& f) { return f.empty() ? json(nullptr) : json(f); };
  j["files"] = {{"population", population_file},
                {"respondents", respondents_file},
                {"contacts_complete", optional_file(contacts_complete_file)},
                {"contacts_partial", optional_file(contacts_partial_file)}};
  j["columns"] = {{"respondent_id", respondent_id_column},
                  {"age", age_column},
                  {"contact_age", contact_age_column},
                  {"count", count_column},
                  {"contact_prefix", contact_prefix}};
  return j.dump(2) + "\n";
}

DatasetSchema DatasetSchema::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset.json: ") + e.what());
  }
  auto need = [](const json& obj, const std::string& key, const std::string& path) -> const json& {
    if (!obj.is_object() || !obj.contains(key)) throw ConfigError("dataset.json: missing " + path + "." + key);
    return obj.at(key);
  };
  DatasetSchema s;
  try {
    const json& grid = need(j, "grid", "$");
    s.grid = AgeGrid(need(grid, "min_age", "$.grid").get<int>(), need(grid, "max_age", "$.grid").get<int>());
    std::vector<FeatureSpec> fs;
    if (j.contains("features")) {
      std::size_t i = 0;
      for (const auto& f : j.at("features")) {
        const std::string p = "$.features[" + std::to_string(i++) + "]";
        fs.emplace_back(need(f, "name", p).get<std::string>(),
                        need(f, "categories", p).get<std::vector<std::string>>());
      }
    }
    s.space = StrataSpace(fs);
    if (j.contains("files")) {
      const auto& f = j.at("files");
      s.population_file = f.value("population", s.population_file);
      s.respondents_file = f.value("respondents", s.respondents_file);
      // null marks a mode the dataset does not provide
      for (auto [key, field] : {std::pair{"contacts_complete", &s.contacts_complete_file},
                                std::pair{"contacts_partial", &s.contacts_partial_file}}) {
        if (!f.contains(key)) continue;
        *field = f.at(key).is_null() ? std::string() : f.at(key).get<std::string>();
      }
    }
    if (j.contains("columns")) {
      const auto& c = j.at("columns");
      s.respondent_id_column = c.value("respondent_id", s.respondent_id_column);
      s.age_column = c.value("age", s.age_column);
      s.contact_age_column = c.value("contact_age", s.contact_age_column);
      s.count_column = c.value("count", s.count_column);
      s.contact_prefix = c.value("contact_prefix", s.contact_prefix);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset.json: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("dataset.json: ") + e.what());
  }
  return s;
}

SurveyTensor Dataset::survey() const {
  return aggregate_survey(records, schema.space, schema.grid, respondents, mode);
}

namespace {

Index stratum_from_row(const CsvTable& t, const std::vector<std::string>& row, const StrataSpace& space,
                       const std::string& prefix, const std::string& where) {
  std::vector<int> tuple;
  for (const auto& f : space.features()) {
    const std::string& label = row[static_cast<std::size_t>(t.column(prefix + f.name))];
    try {
      tuple.push_back(f.index_of(label));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return space.index_of(tuple);
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& dir, Mode mode) {
  Dataset ds;
  ds.mode = mode;
  ds.schema = DatasetSchema::from_json(read_text(dir / "dataset.json"));
  const auto& sc = ds.schema;
  const auto& space = sc.space;
  const auto& grid = sc.grid;

  {
    const CsvTable t = read_csv(dir / sc.population_file);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(space.size(), grid.size());
    Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(space.size(), grid.size());
    const Index age_col = t.column(sc.age_column), count_col = t.column(sc.count_column);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string where = t.source + " row " + std::to_string(r + 2);
      const auto& row = t.rows[r];
      const int age = static_cast<int>(parse_int(row[static_cast<std::size_t>(age_col)], where));
      if (!grid.contains(age)) continue;  // populations may cover a wider range than the survey
      const Index s = stratum_from_row(t, row, space, "", where);
      const Index a = grid.index_of(age);
      counts(s, a) += parse_double(row[static_cast<std::size_t>(count_col)], where);
      seen(s, a) = 1;
    }
    if (seen.minCoeff() == 0) throw DataError(t.source + ": population missing for some stratum and age");
    ds.pop = PopulationTable(counts);
  }

  std::map<std::int64_t, std::size_t> by_id;
  {
    const CsvTable t = read_csv(dir / sc.respondents_file);
    const Index id_col = t.column(sc.respondent_id_column), age_col = t.column(sc.age_column);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string where = t.source + " row " + std::to_string(r + 2);
      const auto& row = t.rows[r];
      Respondent p;
      p.id = parse_int(row[static_cast<std::size_t>(id_col)], where);
      p.age = static_cast<int>(parse_int(row[static_cast<std::size_t>(age_col)], where));
      if (!grid.contains(p.age)) throw DataError(where + ": age " + std::to_string(p.age) + " outside the grid");
      p.stratum = stratum_from_row(t, row, space, "", where);
      if (!by_id.emplace(p.id, ds.respondents.size()).second)
        throw DataError(where + ": duplicate respondent id " + std::to_string(p.id));
      ds.respondents.push_back(p);
    }
  }

  {
    const auto& file = mode == Mode::Complete ? sc.contacts_complete_file : sc.contacts_partial_file;
    if (file.empty())
      throw DataError(std::string("dataset has no ") + to_string(mode) + "-mode contacts; use --mode " +
                      (mode == Mode::Complete ? "partial" : "complete"));
    const CsvTable t = read_csv(dir / file);
    if (mode == Mode::Partial)
      for (const auto& f : space.features())
        if (t.has_column(sc.contact_prefix + f.name))
          throw DataError(t.source + " records contact strata (complete-mode data); use --mode complete");
    const bool by_respondent = t.has_column(sc.respondent_id_column);
    const Index contact_age_col = t.column(sc.contact_age_column);
    if (mode == Mode::Complete)
      for (const auto& f : space.features()) t.column(sc.contact_prefix + f.name);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string where = t.source + " row " + std::to_string(r + 2);
      const auto& row = t.rows[r];
      ContactRecord c;
      if (by_respondent) {
        c.respondent = parse_int(row[static_cast<std::size_t>(t.column(sc.respondent_id_column))], where);
        const auto it = by_id.find(c.respondent);
        if (it == by_id.end()) throw DataError(where + ": unknown respondent id " + std::to_string(c.respondent));
        c.age = ds.respondents[it->second].age;
        c.stratum = ds.respondents[it->second].stratum;
      } else {
        c.age = static_cast<int>(parse_int(row[static_cast<std::size_t>(t.column(sc.age_column))], where));
        c.stratum = stratum_from_row(t, row, space, "", where);
      }
      c.contact_age = static_cast<int>(parse_int(row[static_cast<std::size_t>(contact_age_col)], where));
      if (!grid.contains(c.contact_age))
        throw DataError(where + ": contact age " + std::to_string(c.contact_age) + " outside the grid");
      if (mode == Mode::Complete) c.contact_stratum = stratum_from_row(t, row, space, sc.contact_prefix, where);
      ds.records.push_back(c);
    }
  }
  return ds;
}

void write_population(const std::filesystem::path& path, const DatasetSchema& schema, const PopulationTable& pop) {
  std::vector<std::string> header{schema.age_column};
  for (const auto& f : schema.space.features()) header.push_back(f.name);
  header.push_back(schema.count_column);
  CsvWriter w(path, header);
  for (Index a = 0; a < schema.grid.size(); ++a)
    for (Index s = 0; s < schema.space.size(); ++s) {
      std::vector<std::string> row{std::to_string(schema.grid.age(a))};
      const auto tuple = schema.space.tuple_of(s);
      for (std::size_t j = 0; j < tuple.size(); ++j)
        row.push_back(schema.space.features()[j].categories[static_cast<std::size_t>(tuple[j])]);
      row.push_back(format_double(pop(s, a)));
      w.row(row);
    }
}

void write_dataset(const std::filesystem::path& dir, const DatasetSchema& schema, const PopulationTable& pop,
                   const std::vector<Respondent>& respondents, const std::vector<ContactRecord>& complete_records) {
  std::filesystem::create_directories(dir);
  write_text(dir / "dataset.json", schema.to_json());
  write_population(dir / schema.population_file, schema, pop);
  const auto& space = schema.space;
  auto labels = [&space](Index s) {
    std::vector<std::string> out;
    const auto tuple = space.tuple_of(s);
    for (std::size_t j = 0; j < tuple.size(); ++j)
      out.push_back(space.features()[j].categories[static_cast<std::size_t>(tuple[j])]);
    return out;
  };
  {
    std::vector<std::string> header{schema.respondent_id_column, schema.age_column};
    for (const auto& f : space.features()) header.push_back(f.name);
    CsvWriter w(dir / schema.respondents_file, header);
    for (const auto& r : respondents) {
      std::vector<std::string> row{std::to_string(r.id), std::to_string(r.age)};
      for (auto& l : labels(r.stratum)) row.push_back(l);
      w.row(row);
    }
  }
  {
    std::vector<std::string> header{schema.respondent_id_column, schema.contact_age_column};
    for (const auto& f : space.features()) header.push_back(schema.contact_prefix + f.name);
    CsvWriter wc(dir / schema.contacts_complete_file, header);
    CsvWriter wp(dir / schema.contacts_partial_file, {schema.respondent_id_column, schema.contact_age_column});
    for (const auto& c : complete_records) {
      std::vector<std::string> row{std::to_string(c.respondent), std::to_string(c.contact_age)};
      wp.row(row);
      for (auto& l : labels(c.contact_stratum.value())) row.push_back(l);
      wc.row(row);
    }
  }
}

void write_tensor(const std::filesystem::path& path, const Tensor3& t, Mode layout, const StrataSpace& space,
                  const AgeGrid& grid) {
  const Index K = space.size();
  const bool complete = layout == Mode::Complete;
  std::vector<std::string> header{"stratum"};
  if (complete) header.push_back("contact_stratum");
  header.insert(header.end(), {"age", "contact_age", "value"});
  CsvWriter w(path, header);
  for (Index i = 0; i < t.slices(); ++i)
    for (Index a = 0; a < t.ages(); ++a)
      for (Index b = 0; b < t.ages(); ++b) {
        std::vector<std::string> row{space.label(complete ? i / K : i)};
        if (complete) row.push_back(space.label(i % K));
        row.insert(row.end(), {std::to_string(grid.age(a)), std::to_string(grid.age(b)), format_double(t(i, a, b))});
        w.row(row);
      }
}

void write_matrix(const std::filesystem::path& path, const RowMatrix& m, const AgeGrid& grid) {
  CsvWriter w(path, {"age", "contact_age", "value"});
  for (Index a = 0; a < m.rows(); ++a)
    for (Index b = 0; b < m.cols(); ++b)
      w.row({std::to_string(grid.age(a)), std::to_string(grid.age(b)), format_double(m(a, b))});
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gmix::io
