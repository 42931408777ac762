#pragma once

#include <string>
#include <utility>
#include <vector>

#include "innodpc/bench.hpp"
#include "innodpc/types.hpp"

namespace innodpc {

// Plain-string CSV with a header row. Cells are written verbatim except that
// commas in free-text cells are replaced by semicolons, so the files stay
// trivially parseable.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Shortest stable decimal rendering used across all reports (round-trips
// doubles at %.12g precision; inf/nan spelled out).
std::string format_number(double v);

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// ---------------------------------------------------------------------------
// Self-contained SVG figures
// ---------------------------------------------------------------------------

struct BoxGroup {
  std::string label;
  std::vector<double> values;
};

// Median / quartile boxes (linear-interpolation quantiles), whiskers at the
// most extreme samples within 1.5 IQR of the box, outliers as dots.
std::string boxplot_svg(const std::string& title,
                        const std::vector<BoxGroup>& groups,
                        const std::string& y_label);

// Line traces over a shared integer x axis; log_abs_y plots log10 |value|.
std::string trace_svg(
    const std::string& title,
    const std::vector<std::pair<std::string, std::vector<double>>>& series,
    const std::string& y_label, bool log_abs_y = false);

// Quantile helper shared with the summaries (p in [0, 1], linear
// interpolation between order statistics).
double quantile(std::vector<double> values, double p);

// ---------------------------------------------------------------------------
// Study report emitters: rows as CSV, figures as SVG, and a text summary,
// all under out_dir (created if missing).
// ---------------------------------------------------------------------------

void emit_prediction_report(const PredictionStudyResult& res,
                            const std::string& out_dir);
void emit_control_report(const ControlStudyResult& res,
                         const std::string& out_dir);
void emit_demo_report(const DemoResult& res, const std::string& out_dir);

}  // namespace innodpc
