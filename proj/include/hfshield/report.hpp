#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hfshield/image.hpp"

namespace hfshield {

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // population std
};

// mean and population std; empty input rejected
Stat summarize(const std::vector<double>& xs);

// Per-identity samples for one (arm, purifier) cell of the experiment grid.
// A metric that does not apply to the cell stays empty (retention needs a
// nonzero delta, so the clean arm leaves it out); all nonempty vectors must
// share one length, the identity count.
struct ConditionSamples {
  std::string arm;
  std::string purifier;
  std::vector<double> delta_l1;
  std::vector<double> delta_linf;
  std::vector<double> retention;
  std::vector<double> psnr_attacked;
  std::vector<double> gen_mse;
  std::vector<double> gen_hf;
};

struct ReportRow {
  std::string arm;
  std::string purifier;
  std::size_t n = 0;
  std::optional<Stat> delta_l1;
  std::optional<Stat> delta_linf;
  std::optional<Stat> retention;
  std::optional<Stat> psnr_attacked;
  std::optional<Stat> gen_mse;
  std::optional<Stat> gen_hf;
};

struct MetricsReport {
  std::vector<ReportRow> rows;  // input order preserved
};

MetricsReport build_report(const std::vector<ConditionSamples>& conditions);

// One row per condition; stable column order and number formatting so equal
// reports serialize to identical bytes. Missing stats serialize as "na".
std::string to_csv(const MetricsReport& report);

// Aligned, human-readable "mean +/- std" table.
std::string to_table(const MetricsReport& report);

// Row-major tile grid (all tiles one shape) composited and saved as one PNG.
void write_grid_png(const std::filesystem::path& path, const std::vector<Image>& tiles,
                    std::size_t columns);

}  // namespace hfshield
