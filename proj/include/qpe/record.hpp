#pragma once

// Measurement records D = {(t_j, I_j)} and the `.qpetraj` text format:
//
//   line 1      JSON object with keys
//               model, params, fixed, dt, tau, n, seed, dim, kappa, eta, version
//   lines 2..   CSV rows "t,I" or "t,I,x_truth", one per sample
//
// Floats are written with 17 significant digits so a write/read cycle is
// bit-exact.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace qpe {

using ParamMap = std::map<std::string, double>;

inline constexpr int kRecordFormatVersion = 1;

struct RecordMeta {
  std::string model;
  // True parameter values; empty when withheld.
  ParamMap params;
  ParamMap fixed;
  double dt = 0.0;
  double tau = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  int dim = 0;
  double kappa = 0.0;
  double eta = 0.0;
  int version = kRecordFormatVersion;

  bool operator==(const RecordMeta&) const = default;
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<double> currents;
  // Noise-free conditional mean; only synthetic records carry it.
  std::optional<std::vector<double>> truth;
  RecordMeta meta;

  std::size_t size() const { return currents.size(); }
  bool has_truth() const { return truth.has_value(); }

  // Throws FormatError on length mismatches, non-uniform times or
  // non-finite currents.
  void validate() const;

  bool operator==(const TrajectoryRecord&) const = default;
};

// splitmix64 finalizer applied to base + (index + 1) * golden gamma.
// derive_seed(0, 0) == 0xE220A8397B1DCDAF (first splitmix64 output for
// state 0).
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t stream_index);

nlohmann::json record_header(const RecordMeta& meta);
RecordMeta record_meta_from_header(const nlohmann::json& header);

void write_record(const TrajectoryRecord& rec, std::ostream& out);
void write_record(const TrajectoryRecord& rec,
                  const std::filesystem::path& path);
TrajectoryRecord read_record(std::istream& in);
TrajectoryRecord read_record(const std::filesystem::path& path);

// Shortest-exact decimal form used by every text output ("%.17g").
std::string format_double(double v);

// Generic CSV-with-JSON-header table shared by all analysis outputs.
struct Table {
  nlohmann::json header;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

void write_table(const Table& table, std::ostream& out);
void write_table(const Table& table, const std::filesystem::path& path);
Table read_table(const std::filesystem::path& path);

}  // namespace qpe
