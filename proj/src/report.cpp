#include "hfshield/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace hfshield {

Stat summarize(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("summarize: no samples");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return Stat{mean, std::sqrt(var)};
}

namespace {

// n = 0 means "no applicable metric seen yet"
void fold_metric(const std::vector<double>& xs, std::optional<Stat>& out, std::size_t& n,
                 const char* cell) {
  if (xs.empty()) return;
  if (n == 0) {
    n = xs.size();
  } else if (xs.size() != n) {
    throw std::invalid_argument(std::string("build_report: ragged sample lists in ") + cell);
  }
  out = summarize(xs);
}

std::string fmt_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt_stat_csv(const std::optional<Stat>& s) {
  if (!s) return "na,na";
  return fmt_num(s->mean) + "," + fmt_num(s->stddev);
}

std::string fmt_stat_table(const std::optional<Stat>& s) {
  if (!s) return "n/a";
  char buf[96];
  if (std::isinf(s->mean)) {
    std::snprintf(buf, sizeof(buf), "%s +/- %.4f", s->mean > 0 ? "inf" : "-inf", s->stddev);
  } else {
    std::snprintf(buf, sizeof(buf), "%.4f +/- %.4f", s->mean, s->stddev);
  }
  return buf;
}

}  // namespace

MetricsReport build_report(const std::vector<ConditionSamples>& conditions) {
  if (conditions.empty()) throw std::invalid_argument("build_report: no conditions");
  MetricsReport rep;
  rep.rows.reserve(conditions.size());
  for (const auto& c : conditions) {
    std::string cell = c.arm + "/" + c.purifier;
    ReportRow row;
    row.arm = c.arm;
    row.purifier = c.purifier;
    fold_metric(c.delta_l1, row.delta_l1, row.n, cell.c_str());
    fold_metric(c.delta_linf, row.delta_linf, row.n, cell.c_str());
    fold_metric(c.retention, row.retention, row.n, cell.c_str());
    fold_metric(c.psnr_attacked, row.psnr_attacked, row.n, cell.c_str());
    fold_metric(c.gen_mse, row.gen_mse, row.n, cell.c_str());
    fold_metric(c.gen_hf, row.gen_hf, row.n, cell.c_str());
    if (row.n == 0) {
      throw std::invalid_argument("build_report: condition " + cell + " has no samples");
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::string to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "arm,purifier,n_identities,"
         "delta_l1_mean,delta_l1_std,delta_linf_mean,delta_linf_std,"
         "retention_mean,retention_std,psnr_mean,psnr_std,"
         "gen_mse_mean,gen_mse_std,gen_hf_mean,gen_hf_std\n";
  for (const auto& r : report.rows) {
    out << r.arm << ',' << r.purifier << ',' << r.n << ','
        << fmt_stat_csv(r.delta_l1) << ',' << fmt_stat_csv(r.delta_linf) << ','
        << fmt_stat_csv(r.retention) << ',' << fmt_stat_csv(r.psnr_attacked) << ','
        << fmt_stat_csv(r.gen_mse) << ',' << fmt_stat_csv(r.gen_hf) << '\n';
  }
  return out.str();
}

std::string to_table(const MetricsReport& report) {
  const char* headers[] = {"arm",       "purifier", "n",      "delta_l1", "delta_linf",
                           "retention", "psnr",     "gen_mse", "gen_hf"};
  constexpr std::size_t ncols = 9;
  std::vector<std::vector<std::string>> cells;
  cells.emplace_back(headers, headers + ncols);
  for (const auto& r : report.rows) {
    cells.push_back({r.arm, r.purifier, std::to_string(r.n), fmt_stat_table(r.delta_l1),
                     fmt_stat_table(r.delta_linf), fmt_stat_table(r.retention),
                     fmt_stat_table(r.psnr_attacked), fmt_stat_table(r.gen_mse),
                     fmt_stat_table(r.gen_hf)});
  }
  std::size_t widths[ncols] = {};
  for (const auto& row : cells) {
    for (std::size_t j = 0; j < ncols; ++j) widths[j] = std::max(widths[j], row[j].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = 0; j < ncols; ++j) {
      out << cells[i][j] << std::string(widths[j] - cells[i][j].size(), ' ');
      out << (j + 1 < ncols ? "  " : "\n");
    }
    if (i == 0) {
      std::size_t total = 2 * (ncols - 1);
      for (std::size_t w : widths) total += w;
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

void write_grid_png(const std::filesystem::path& path, const std::vector<Image>& tiles,
                    std::size_t columns) {
  if (tiles.empty()) throw std::invalid_argument("write_grid_png: no tiles");
  if (columns == 0) throw std::invalid_argument("write_grid_png: columns must be >= 1");
  std::size_t th = tiles[0].height(), tw = tiles[0].width();
  for (const auto& t : tiles) {
    if (t.channels() != 3 || t.height() != th || t.width() != tw) {
      throw std::invalid_argument("write_grid_png: tiles must all be RGB with one shape");
    }
  }
  std::size_t rows = (tiles.size() + columns - 1) / columns;
  Image grid(3, rows * th, columns * tw);  // unused cells stay black
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    std::size_t oy = (i / columns) * th, ox = (i % columns) * tw;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < th; ++y) {
        for (std::size_t x = 0; x < tw; ++x) {
          grid.at(c, oy + y, ox + x) = tiles[i].at(c, y, x);
        }
      }
    }
  }
  save_png(grid, path);
}

}  // namespace hfshield
