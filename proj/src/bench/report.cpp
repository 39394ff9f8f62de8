#include "replanvlm/bench/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace replanvlm::bench {

using nlohmann::json;

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string percent(std::optional<double> v) { return v ? fixed(*v * 100.0, 1) + "%" : "-"; }

std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

const char* kCsvHeader =
    "task,episodes,successes,injected,detected,corrected,backend_failures,total_steps,"
    "success_rate,detection_rate,correction_rate,mean_steps";

std::string csv_rate(std::optional<double> v) { return v ? fixed(*v, 6) : ""; }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

json opt(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::optional<ExportFormat> export_format_from_string(const std::string& s) {
  if (s == "text" || s == "txt") return ExportFormat::Text;
  if (s == "csv") return ExportFormat::Csv;
  if (s == "json") return ExportFormat::Json;
  return std::nullopt;
}

std::string to_text(const MetricsTable& m) {
  std::ostringstream out;
  if (!m.label.empty()) out << m.label << "\n";
  out << pad("Task", 8, true) << pad("Success", 10) << pad("Detection", 11) << pad("Correction", 12)
      << pad("Steps", 8) << pad("Episodes", 10) << pad("Backend", 9) << "\n";
  if (m.rows.empty()) return out.str();
  for (const auto& r : m.rows) {
    out << pad("Task " + std::to_string(r.task_id), 8, true) << pad(percent(r.success_rate()), 10)
        << pad(percent(r.detection_rate()), 11) << pad(percent(r.correction_rate()), 12)
        << pad(fixed(r.mean_steps(), 1), 8) << pad(std::to_string(r.episodes), 10)
        << pad(std::to_string(r.backend_failures), 9) << "\n";
  }
  std::size_t episodes = 0;
  for (const auto& r : m.rows) episodes += r.episodes;
  out << pad("Average", 8, true) << pad(percent(m.average_success()), 10) << pad(percent(m.average_detection()), 11)
      << pad(percent(m.average_correction()), 12) << pad(fixed(m.average_steps(), 1), 8)
      << pad(std::to_string(episodes), 10) << pad(std::to_string(m.backend_failures()), 9) << "\n";
  return out.str();
}

std::string to_csv(const MetricsTable& m) {
  std::ostringstream out;
  out << kCsvHeader << "\n";
  if (m.rows.empty()) return out.str();
  TaskMetrics sum;
  for (const auto& r : m.rows) {
    out << r.task_id << "," << r.episodes << "," << r.successes << "," << r.injected << "," << r.detected << ","
        << r.corrected << "," << r.backend_failures << "," << r.total_steps << "," << fixed(r.success_rate(), 6) << ","
        << csv_rate(r.detection_rate()) << "," << csv_rate(r.correction_rate()) << "," << fixed(r.mean_steps(), 6)
        << "\n";
    sum.episodes += r.episodes;
    sum.successes += r.successes;
    sum.injected += r.injected;
    sum.detected += r.detected;
    sum.corrected += r.corrected;
    sum.backend_failures += r.backend_failures;
    sum.total_steps += r.total_steps;
  }
  out << "Average," << sum.episodes << "," << sum.successes << "," << sum.injected << "," << sum.detected << ","
      << sum.corrected << "," << sum.backend_failures << "," << sum.total_steps << "," << fixed(m.average_success(), 6)
      << "," << csv_rate(m.average_detection()) << "," << csv_rate(m.average_correction()) << ","
      << fixed(m.average_steps(), 6) << "\n";
  return out.str();
}

MetricsTable metrics_from_csv(const std::string& csv, const std::string& label) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::invalid_argument("metrics csv: unexpected header");
  MetricsTable m;
  m.label = label;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 12) throw std::invalid_argument("metrics csv: expected 12 fields in '" + line + "'");
    if (f[0] == "Average") continue;
    try {
      TaskMetrics r;
      r.task_id = std::stoi(f[0]);
      r.episodes = std::stoul(f[1]);
      r.successes = std::stoul(f[2]);
      r.injected = std::stoul(f[3]);
      r.detected = std::stoul(f[4]);
      r.corrected = std::stoul(f[5]);
      r.backend_failures = std::stoul(f[6]);
      r.total_steps = std::stoul(f[7]);
      m.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("metrics csv: bad number in '" + line + "'");
    }
  }
  return m;
}

json to_json(const MetricsTable& m) {
  json rows = json::array();
  for (const auto& r : m.rows) {
    rows.push_back({{"task", r.task_id},
                    {"episodes", r.episodes},
                    {"successes", r.successes},
                    {"injected", r.injected},
                    {"detected", r.detected},
                    {"corrected", r.corrected},
                    {"backend_failures", r.backend_failures},
                    {"total_steps", r.total_steps},
                    {"success_rate", r.success_rate()},
                    {"detection_rate", opt(r.detection_rate())},
                    {"correction_rate", opt(r.correction_rate())},
                    {"mean_steps", r.mean_steps()}});
  }
  json j{{"label", m.label}, {"rows", rows}};
  if (!m.rows.empty()) {
    j["average"] = {{"success_rate", m.average_success()},
                    {"detection_rate", opt(m.average_detection())},
                    {"correction_rate", opt(m.average_correction())},
                    {"mean_steps", m.average_steps()},
                    {"backend_failures", m.backend_failures()}};
  }
  return j;
}

MetricsTable metrics_from_json(const json& j) {
  MetricsTable m;
  m.label = j.value("label", "");
  for (const auto& r : j.at("rows")) {
    TaskMetrics t;
    t.task_id = r.at("task").get<int>();
    t.episodes = r.at("episodes").get<std::size_t>();
    t.successes = r.at("successes").get<std::size_t>();
    t.injected = r.at("injected").get<std::size_t>();
    t.detected = r.at("detected").get<std::size_t>();
    t.corrected = r.at("corrected").get<std::size_t>();
    t.backend_failures = r.at("backend_failures").get<std::size_t>();
    t.total_steps = r.at("total_steps").get<std::size_t>();
    m.rows.push_back(t);
  }
  return m;
}

std::string render(const MetricsTable& m, ExportFormat f) {
  switch (f) {
    case ExportFormat::Text: return to_text(m);
    case ExportFormat::Csv: return to_csv(m);
    case ExportFormat::Json: return to_json(m).dump(2) + "\n";
  }
  return {};
}

void export_metrics(const MetricsTable& m, ExportFormat f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SuiteError("cannot write " + path.string());
  out << render(m, f);
  if (!out) throw SuiteError("write failed: " + path.string());
}

std::string ablation_table(const AblationResult& r) {
  std::ostringstream out;
  if (r.variants.empty()) return out.str();
  const auto& first = r.variants.front().metrics;
  out << pad("Method", 11, true);
  for (const auto& row : first.rows) out << pad("Task " + std::to_string(row.task_id), 9);
  out << pad("Average", 9) << "\n";
  for (const auto& v : r.variants) {
    out << pad(v.metrics.label, 11, true);
    for (const auto& row : v.metrics.rows) out << pad(percent(row.success_rate()), 9);
    out << pad(percent(v.metrics.average_success()), 9) << "\n";
  }
  return out.str();
}

}  // namespace replanvlm::bench
