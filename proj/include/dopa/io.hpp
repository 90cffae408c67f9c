#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dopa/mdp_decomposed.hpp"
#include "dopa/mdp_full.hpp"
#include "dopa/simulate.hpp"
#include "dopa/steady.hpp"
#include "dopa/types.hpp"

namespace dopa {

inline constexpr const char* kVersion = "0.1.0";

/// One experiment description. Defaults reproduce the reference
/// two-stream 2x2 scenario (lambda*tau = 0.02, 200-bit packets, N = 4,
/// 1% target SER, beta = (1,10)).
struct RunConfig {
  std::string scenario = "default";
  PhyConfig phy;
  double tau = 1.0;
  std::vector<StreamProfile> streams = {{1.0, 0.02, 200.0}, {10.0, 0.02, 200.0}};
  int buffer = 4;
  std::optional<double> gamma;
  std::optional<double> p0;
  std::string mode = "decomposed";  ///< full | decomposed | both
  std::size_t cache_rows = 100000;
  std::uint64_t cache_seed = 7;
  long slots = 1000000;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "out";
  std::size_t state_cap = 1000000;
  std::string calib = "rootfind";  ///< rootfind | sweep
  int calib_points = 20;
  double gamma_lo = 1e-4;
  double gamma_hi = 1.0;

  ChainParams chain(double gamma_value) const;
  void validate() const;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& json_text);
std::string dump_config(const RunConfig& cfg);

/// FNV-1a hash of the canonical config dump; stamped into every output
/// file for provenance.
std::string config_hash(const RunConfig& cfg);

/// Cache directory resolution: DOPA_CACHE_DIR env var, else out_dir.
std::filesystem::path cache_dir(const RunConfig& cfg);

/// Load the eigenvalue cache for this config from the cache directory,
/// generating and saving it on first use.
EigenSampleCache load_or_generate_cache(const RunConfig& cfg);
EigenSampleCache load_or_generate_cache(const RunConfig& cfg, const PhyConfig& phy);

void save_full_solution(const FullSolution& sol, const std::string& cfg_hash,
                        const std::filesystem::path& path);
FullSolution load_full_solution(const std::filesystem::path& path);

void save_stream_solutions(const std::vector<StreamSolution>& sols, const ChainParams& params,
                           const std::string& cfg_hash, const std::filesystem::path& path);
std::vector<StreamSolution> load_stream_solutions(const std::filesystem::path& path);

void save_sim_report_json(const SimReport& rep, const std::string& cfg_hash,
                          const std::filesystem::path& path);
void save_sim_report_csv(const SimReport& rep, const std::string& cfg_hash,
                         const std::filesystem::path& path);

/// Per-stream occupancy histogram (empirical fractions, with analytic
/// stationary probabilities alongside when available).
void save_histogram_csv(const SimReport& rep, const SteadyState* analytic,
                        const std::string& cfg_hash, const std::filesystem::path& path);

void save_calibration_csv(const CalibrationResult& res, const std::string& cfg_hash,
                          const std::filesystem::path& path);

/// Generic CSV writer with provenance header lines.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& cfg_hash,
            const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& cells);
  static std::string num(double v);

 private:
  std::ofstream out_;
  std::size_t n_cols_;
};

}  // namespace dopa
