#include <cstdio>

#include "json.hpp"
#include "lowmt/metrics.hpp"
#include "lowmt/util.hpp"

namespace lowmt::metrics {
namespace {

using nlohmann::ordered_json;

std::string mark(bool best) { return best ? "*" : ""; }

std::string signed_fixed(double v, int decimals) {
  const auto s = format_fixed(v, decimals);
  return s[0] == '-' || s.find_first_not_of("0.") == std::string::npos ? s : "+" + s;
}

}  // namespace

std::string report_tsv(std::span<const ScoreReport> reports, std::span<const Direction> columns,
                       std::string_view test_set) {
  std::vector<ScoreReport> rows;
  for (const auto& r : reports) {
    ScoreReport ordered = r;
    ordered.scores.clear();
    for (const auto& d : columns) {
      const auto* s = r.find(d);
      if (!s) throw DataError("report: row '" + r.label + "' has no score for " + d.str());
      ordered.scores.push_back(*s);
    }
    rows.push_back(std::move(ordered));
  }
  const auto cmp = rows.empty() ? Comparison{} : compare(rows, 0);
  std::string out;
  for (int table = 0; table < 2; ++table) {
    const bool is_bleu = table == 0;
    out += is_bleu ? "# BLEU\n" : "# chrF\n";
    out += "model";
    for (const auto& d : columns) out += "\t" + d.str();
    out += is_bleu ? "\tBLEU_low\n" : "\tCHRF_low\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out += rows[i].label;
      for (std::size_t c = 0; c < columns.size(); ++c) {
        const auto& s = rows[i].scores[c];
        out += "\t" + (is_bleu ? format_fixed(s.bleu, 1) : format_fixed(s.chrf, 3)) +
               mark((is_bleu ? cmp.best_bleu[c] : cmp.best_chrf[c]) == i);
      }
      const auto& agg = is_bleu ? rows[i].bleu_low : rows[i].chrf_low;
      const auto& best = is_bleu ? cmp.best_bleu_low : cmp.best_chrf_low;
      out += "\t" + (agg ? format_fixed(*agg, is_bleu ? 1 : 3) + mark(best && *best == i) : std::string("-")) + "\n";
    }
    out += "\n";
  }
  if (!columns.empty()) {
    out += "# signatures\n";
    out += bleu_signature(columns.front(), test_set) + "\n";
    out += chrf_signature(columns.front(), test_set) + "\n";
  }
  return out;
}

std::string report_json(std::span<const ScoreReport> reports, std::span<const Direction> columns,
                        std::string_view test_set) {
  ordered_json j;
  j["test_set"] = std::string(test_set);
  ordered_json dirs = ordered_json::array();
  for (const auto& d : columns) {
    dirs.push_back({{"direction", d.str()},
                    {"bleu_signature", bleu_signature(d, test_set)},
                    {"chrf_signature", chrf_signature(d, test_set)}});
  }
  j["directions"] = dirs;
  ordered_json rows = ordered_json::array();
  for (const auto& r : reports) {
    ordered_json row;
    row["label"] = r.label;
    ordered_json scores = ordered_json::array();
    for (const auto& d : columns) {
      const auto* s = r.find(d);
      if (!s) throw DataError("report: row '" + r.label + "' has no score for " + d.str());
      scores.push_back({{"direction", d.str()},
                        {"bleu", s->bleu},
                        {"chrf", s->chrf},
                        {"bleu_display", format_fixed(s->bleu, 1)},
                        {"chrf_display", format_fixed(s->chrf, 3)}});
    }
    row["scores"] = scores;
    row["bleu_low"] = r.bleu_low ? ordered_json(*r.bleu_low) : ordered_json(nullptr);
    row["chrf_low"] = r.chrf_low ? ordered_json(*r.chrf_low) : ordered_json(nullptr);
    row["bleu_low_display"] = r.bleu_low ? format_fixed(*r.bleu_low, 1) : "";
    row["chrf_low_display"] = r.chrf_low ? format_fixed(*r.chrf_low, 3) : "";
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

std::vector<ScoreReport> reports_from_json(std::string_view text) {
  std::vector<ScoreReport> out;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& row : j.at("rows")) {
      ScoreReport r;
      r.label = row.at("label").get<std::string>();
      for (const auto& s : row.at("scores")) {
        r.scores.push_back({Direction::parse(s.at("direction").get<std::string>()), s.at("bleu").get<double>(),
                            s.at("chrf").get<double>()});
      }
      if (!row.at("bleu_low").is_null()) r.bleu_low = row.at("bleu_low").get<double>();
      if (!row.at("chrf_low").is_null()) r.chrf_low = row.at("chrf_low").get<double>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return out;
}

std::string comparison_tsv(const Comparison& c) {
  std::string out = "# BLEU delta\nmodel";
  for (const auto& d : c.directions) out += "\t" + d.str();
  out += "\tBLEU_low\n";
  for (std::size_t i = 0; i < c.rows.size(); ++i) {
    out += c.rows[i].label;
    for (std::size_t k = 0; k < c.directions.size(); ++k) {
      out += "\t" + signed_fixed(c.rows[i].deltas[k].bleu, 1) + mark(c.best_bleu[k] == i);
    }
    out += "\t" + (c.rows[i].bleu_low ? signed_fixed(*c.rows[i].bleu_low, 1) + mark(c.best_bleu_low == i) : "-") + "\n";
  }
  out += "\n# chrF delta\nmodel";
  for (const auto& d : c.directions) out += "\t" + d.str();
  out += "\tCHRF_low\n";
  for (std::size_t i = 0; i < c.rows.size(); ++i) {
    out += c.rows[i].label;
    for (std::size_t k = 0; k < c.directions.size(); ++k) {
      out += "\t" + signed_fixed(c.rows[i].deltas[k].chrf, 3) + mark(c.best_chrf[k] == i);
    }
    out += "\t" + (c.rows[i].chrf_low ? signed_fixed(*c.rows[i].chrf_low, 3) + mark(c.best_chrf_low == i) : "-") + "\n";
  }
  return out;
}

}  // namespace lowmt::metrics
