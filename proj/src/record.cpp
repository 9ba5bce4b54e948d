#include "qpe/record.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qpe/errors.hpp"

namespace qpe {

namespace {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix64_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

bool parse_double(std::string_view text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

[[noreturn]] void format_error(std::size_t line_no, const std::string& what) {
  throw FormatError("line " + std::to_string(line_no) + ": " + what);
}

ParamMap param_map_from_json(const nlohmann::json& j, const char* key) {
  ParamMap out;
  if (j.is_null()) return out;
  if (!j.is_object()) {
    throw FormatError(std::string("header key '") + key +
                      "' must be an object");
  }
  for (const auto& [name, value] : j.items()) {
    if (!value.is_number()) {
      throw FormatError(std::string("header key '") + key + "." + name +
                        "' is not a number");
    }
    out[name] = value.get<double>();
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base_seed,
                          std::uint64_t stream_index) {
  return splitmix64_finalize(base_seed + (stream_index + 1) * kGoldenGamma);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void TrajectoryRecord::validate() const {
  if (times.size() != currents.size()) {
    throw FormatError("times/currents length mismatch: " +
                      std::to_string(times.size()) + " vs " +
                      std::to_string(currents.size()));
  }
  if (truth && truth->size() != currents.size()) {
    throw FormatError("truth channel length " + std::to_string(truth->size()) +
                      " != " + std::to_string(currents.size()));
  }
  if (meta.n != currents.size()) {
    throw FormatError("header n = " + std::to_string(meta.n) + " but " +
                      std::to_string(currents.size()) + " samples");
  }
  for (std::size_t j = 0; j < currents.size(); ++j) {
    if (!std::isfinite(currents[j])) {
      throw FormatError("non-finite current at sample " + std::to_string(j));
    }
    if (j > 0 && std::abs(times[j] - times[j - 1] - meta.dt) > 1e-12) {
      throw FormatError("non-uniform time step at sample " +
                        std::to_string(j));
    }
  }
}

nlohmann::json record_header(const RecordMeta& meta) {
  nlohmann::json h;
  h["model"] = meta.model;
  h["params"] = nlohmann::json::object();
  for (const auto& [k, v] : meta.params) h["params"][k] = v;
  h["fixed"] = nlohmann::json::object();
  for (const auto& [k, v] : meta.fixed) h["fixed"][k] = v;
  h["dt"] = meta.dt;
  h["tau"] = meta.tau;
  h["n"] = meta.n;
  h["seed"] = meta.seed;
  h["dim"] = meta.dim;
  h["kappa"] = meta.kappa;
  h["eta"] = meta.eta;
  h["version"] = meta.version;
  return h;
}

RecordMeta record_meta_from_header(const nlohmann::json& h) {
  if (!h.is_object()) throw FormatError("line 1: header is not a JSON object");
  for (const char* key : {"model", "params", "fixed", "dt", "tau", "n", "seed",
                          "dim", "kappa", "eta", "version"}) {
    if (!h.contains(key)) {
      throw FormatError(std::string("line 1: header missing key '") + key +
                        "'");
    }
  }
  RecordMeta meta;
  try {
    meta.version = h.at("version").get<int>();
    if (meta.version != kRecordFormatVersion) {
      throw FormatError("line 1: unknown format version " +
                        std::to_string(meta.version));
    }
    meta.model = h.at("model").get<std::string>();
    meta.params = param_map_from_json(h.at("params"), "params");
    meta.fixed = param_map_from_json(h.at("fixed"), "fixed");
    meta.dt = h.at("dt").get<double>();
    meta.tau = h.at("tau").get<double>();
    meta.n = h.at("n").get<std::size_t>();
    meta.seed = h.at("seed").get<std::uint64_t>();
    meta.dim = h.at("dim").get<int>();
    meta.kappa = h.at("kappa").get<double>();
    meta.eta = h.at("eta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("line 1: bad header value: ") + e.what());
  }
  return meta;
}

void write_record(const TrajectoryRecord& rec, std::ostream& out) {
  rec.validate();
  out << record_header(rec.meta).dump() << '\n';
  for (std::size_t j = 0; j < rec.size(); ++j) {
    out << format_double(rec.times[j]) << ',' << format_double(rec.currents[j]);
    if (rec.truth) out << ',' << format_double((*rec.truth)[j]);
    out << '\n';
  }
  if (!out) throw IoError("write failed");
}

void write_record(const TrajectoryRecord& rec,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_record(rec, out);
}

TrajectoryRecord read_record(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) format_error(1, "empty file, expected header");
  strip_cr(line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    format_error(1, std::string("header is not valid JSON: ") + e.what());
  }
  TrajectoryRecord rec;
  rec.meta = record_meta_from_header(header);
  rec.times.reserve(rec.meta.n);
  rec.currents.reserve(rec.meta.n);

  std::size_t line_no = 1;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) format_error(line_no, "blank line");
    if (rec.times.size() == rec.meta.n) {
      format_error(line_no, "more rows than header n = " +
                                std::to_string(rec.meta.n));
    }
    const auto fields = split_commas(line);
    if (width == 0) {
      width = fields.size();
      if (width != 2 && width != 3) {
        format_error(line_no, "expected 2 or 3 fields, got " +
                                  std::to_string(width));
      }
      if (width == 3) {
        rec.truth.emplace();
        rec.truth->reserve(rec.meta.n);
      }
    } else if (fields.size() != width) {
      format_error(line_no, "expected " + std::to_string(width) +
                                " fields, got " + std::to_string(fields.size()));
    }
    double values[3];
    for (std::size_t k = 0; k < width; ++k) {
      if (!parse_double(fields[k], values[k])) {
        format_error(line_no, "cannot parse '" + std::string(fields[k]) + "'");
      }
    }
    rec.times.push_back(values[0]);
    rec.currents.push_back(values[1]);
    if (width == 3) rec.truth->push_back(values[2]);
  }
  if (rec.times.size() != rec.meta.n) {
    format_error(line_no + 1, "unexpected end of file: header n = " +
                                  std::to_string(rec.meta.n) + ", read " +
                                  std::to_string(rec.times.size()) + " rows");
  }
  rec.validate();
  return rec;
}

TrajectoryRecord read_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_record(in);
}

void write_table(const Table& table, std::ostream& out) {
  nlohmann::json header = table.header;
  header["columns"] = table.columns;
  out << header.dump() << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out << ',';
      out << format_double(row[k]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed");
}

void write_table(const Table& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_table(table, out);
}

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) format_error(1, "empty table");
  strip_cr(line);
  Table table;
  try {
    table.header = nlohmann::json::parse(line);
    table.columns = table.header.at("columns").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    format_error(1, std::string("bad table header: ") + e.what());
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    const auto fields = split_commas(line);
    if (fields.size() != table.columns.size()) {
      format_error(line_no, "expected " + std::to_string(table.columns.size()) +
                                " fields");
    }
    std::vector<double> row(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (!parse_double(fields[k], row[k])) {
        format_error(line_no, "cannot parse '" + std::string(fields[k]) + "'");
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace qpe
