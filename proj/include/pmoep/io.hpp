#ifndef PMOEP_IO_HPP
#define PMOEP_IO_HPP

#include "pmoep/bench.hpp"
#include "pmoep/em.hpp"
#include "pmoep/mixture.hpp"
#include "pmoep/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pmoep {

using Json = nlohmann::json;

// Plain CSV: one matrix row per line, no header. The tokens nan / NaN read as
// missing values.
MatrixXd read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const MatrixXd& values);
// 0/1 matrix, same layout.
Mask read_mask_csv(const std::filesystem::path& path);
// Columns of equal length written side by side.
void write_columns_csv(const std::filesystem::path& path, const std::vector<const std::vector<double>*>& columns);

/// Y from a CSV with nan for missing entries, or with an explicit mask file.
ObservedMatrix load_observed(const std::filesystem::path& values, const std::optional<std::filesystem::path>& mask);

/// Comma-separated positive reals, e.g. "0.5,1,1.5,2".
std::vector<double> parse_real_list(const std::string& text);

Json to_json(const MoEPModel& model);
MoEPModel model_from_json(const Json& j);
Json to_json(const EmConfig& config);
EmConfig em_config_from_json(const Json& j);
Json to_json(const EmDiagnostics& d);
Json to_json(const EmResult& result);  // traces, model, status; no factors
Json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const Json& j);

struct RunManifest {
  std::string command;
  std::string version;
  std::uint64_t seed = 0;
  Json config = Json::object();
  Json results = Json::object();
  std::map<std::string, double> timings;  // seconds

  Json to_json() const;
  static RunManifest from_json(const Json& j);
  bool operator==(const RunManifest&) const = default;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace pmoep

#endif  // PMOEP_IO_HPP
