#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "occage/core/error.hpp"

namespace occage::ev {

struct MetricReport {
  std::string dataset;
  std::string occlusion;  // eyes | mouth | none
  std::string regime;     // original | occluded | reconstructed
  std::optional<double> psnr;
  std::optional<double> ssim;
  std::optional<double> mae;
  std::size_t samples = 0;

  bool operator==(const MetricReport& o) const {
    auto same = [](const std::optional<double>& a, const std::optional<double>& b) {
      if (a.has_value() != b.has_value()) return false;
      return !a || *a == *b || (std::isnan(*a) && std::isnan(*b));
    };
    return dataset == o.dataset && occlusion == o.occlusion && regime == o.regime && same(psnr, o.psnr) &&
           same(ssim, o.ssim) && same(mae, o.mae) && samples == o.samples;
  }
};

inline int occlusion_rank(const std::string& o) { return o == "none" ? 0 : o == "eyes" ? 1 : o == "mouth" ? 2 : 3; }
inline int regime_rank(const std::string& r) { return r == "original" ? 0 : r == "occluded" ? 1 : r == "reconstructed" ? 2 : 3; }

// By dataset, then occlusion (none, eyes, mouth), then regime.
inline void sort_reports(std::vector<MetricReport>& r) {
  std::stable_sort(r.begin(), r.end(), [](const MetricReport& a, const MetricReport& b) {
    if (a.dataset != b.dataset) return a.dataset < b.dataset;
    if (occlusion_rank(a.occlusion) != occlusion_rank(b.occlusion)) return occlusion_rank(a.occlusion) < occlusion_rank(b.occlusion);
    if (a.occlusion != b.occlusion) return a.occlusion < b.occlusion;
    return regime_rank(a.regime) < regime_rank(b.regime);
  });
}

namespace detail {

inline nlohmann::json metric_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  if (std::isnan(*v)) return "nan";
  return *v;
}

inline std::optional<double> metric_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ValidationError("report: bad metric value '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json{{"dataset", r.dataset},
                     {"occlusion", r.occlusion},
                     {"regime", r.regime},
                     {"psnr", detail::metric_json(r.psnr)},
                     {"ssim", detail::metric_json(r.ssim)},
                     {"mae", detail::metric_json(r.mae)},
                     {"samples", r.samples}};
}

inline void from_json(const nlohmann::json& j, MetricReport& r) {
  try {
    r.dataset = j.at("dataset").get<std::string>();
    r.occlusion = j.at("occlusion").get<std::string>();
    r.regime = j.value("regime", "");
    r.psnr = detail::metric_from(j.value("psnr", nlohmann::json()));
    r.ssim = detail::metric_from(j.value("ssim", nlohmann::json()));
    r.mae = detail::metric_from(j.value("mae", nlohmann::json()));
    r.samples = j.at("samples").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report: malformed entry: ") + e.what());
  }
}

inline void validate(const std::vector<MetricReport>& r) {
  if (r.empty()) throw ValidationError("report: no entries");
  for (const auto& e : r) {
    if (e.samples == 0) throw ValidationError("report: entry with zero samples");
    if (e.ssim && !(*e.ssim >= -1.0 && *e.ssim <= 1.0)) throw ValidationError("report: ssim outside [-1, 1]");
  }
}

inline nlohmann::json reports_json(std::vector<MetricReport> r) {
  validate(r);
  sort_reports(r);
  return nlohmann::json(r);
}

inline std::vector<MetricReport> reports_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("report: expected a JSON array");
  return j.get<std::vector<MetricReport>>();
}

inline std::string format_table(std::vector<MetricReport> r) {
  validate(r);
  sort_reports(r);
  auto cell = [](const std::optional<double>& v, int prec) {
    if (!v) return std::string("-");
    if (std::isinf(*v)) return std::string(*v > 0 ? "inf" : "-inf");
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << *v;
    return s.str();
  };
  std::vector<std::vector<std::string>> rows{{"dataset", "occlusion", "regime", "psnr_db", "ssim", "mae_years", "n"}};
  for (const auto& e : r)
    rows.push_back({e.dataset, e.occlusion, e.regime, cell(e.psnr, 2), cell(e.ssim, 4), cell(e.mae, 3), std::to_string(e.samples)});
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << "  ";
      if (c < 3)
        out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      else
        out << std::right << std::setw(static_cast<int>(width[c])) << row[c];
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace occage::ev
