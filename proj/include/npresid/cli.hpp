#pragma once

#include "npresid/citest.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace npresid::cli {

/// Stable process exit codes.
enum ExitCode : int { kSuccess = 0, kInternalError = 1, kUserError = 2 };

/// Axes and budget of a replicated simulation experiment, read from a JSON
/// file whose keys mirror the field names.
struct ExperimentConfig {
  std::string scenario = "gaussian-latent";
  std::vector<double> sigma_w{0.0};
  std::vector<std::size_t> dims{1};
  double sigma_e = kDefaultSigmaE;
  double sigma_z = kDefaultSigmaZ;
  std::size_t n = 200;
  std::size_t replications = 100;
  std::size_t B = 199;
  double alpha = 0.05;
  BandwidthMethod bandwidth = BandwidthMethod::RuleOfThumb;
  bool refit_bandwidths = true;
  std::optional<std::uint64_t> seed;
  std::string out;
  HistogramMethod method = HistogramMethod::FullTest;
  std::size_t permutations = 999;

  void validate() const;
};

/// Desk-scale preset values.
inline constexpr std::size_t kDeskN = 200, kDeskB = 199, kDeskReplications = 100;
/// Paper-scale preset values.
inline constexpr std::size_t kPaperN = 500, kPaperB = 1000, kPaperReplications = 500;

/// Parses the JSON config. Keys absent from the file take the desk-scale
/// defaults, or the paper-scale ones when `paper_scale` is set. Unknown keys
/// are reported together in one ValidationError.
ExperimentConfig parse_experiment_config(const std::string& json_text, bool paper_scale = false);

struct PowerRow {
  std::size_t d = 1;
  double sigma_w = 0.0;
  std::size_t n = 0;
  std::size_t replications = 0;
  double rejection_rate = 0.0;
  double mean_p_value = 0.0;
  std::uint64_t seed = 0;
};

std::string power_table_header();
std::string format_power_row(const PowerRow& row);

/// Runs every (d, sigma_w) grid point not already present in `existing`,
/// calling `emit` after each so the table can be written incrementally.
/// The seed must be resolved.
std::vector<PowerRow> run_power(const ExperimentConfig& config,
                                const std::vector<PowerRow>& existing,
                                const std::function<void(const PowerRow&)>& emit);

/// Parses a power table written by format_power_row (header required).
std::vector<PowerRow> read_power_table(std::istream& in);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace npresid::cli
