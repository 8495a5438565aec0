#include "fr3e/telemetry.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fr3e {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct MetricAccessor {
  const char* name;
  double (*get)(const StepStats&);
};

const MetricAccessor kMetrics[] = {
    {"loss", [](const StepStats& s) { return s.loss; }},
    {"mean_token_entropy", [](const StepStats& s) { return s.mean_token_entropy; }},
    {"adv_mean", [](const StepStats& s) { return s.adv_mean; }},
    {"adv_std", [](const StepStats& s) { return s.adv_std; }},
    {"clip_fraction", [](const StepStats& s) { return s.clip_fraction; }},
    {"mean_ratio", [](const StepStats& s) { return s.mean_ratio; }},
    {"mean_response_length",
     [](const StepStats& s) { return s.mean_response_length; }},
    {"all_right_count",
     [](const StepStats& s) { return static_cast<double>(s.all_right_count); }},
    {"all_wrong_count",
     [](const StepStats& s) { return static_cast<double>(s.all_wrong_count); }},
    {"solve_rate", [](const StepStats& s) { return s.solve_rate; }},
};

std::string csv_row(const StepStats& s) {
  std::ostringstream row;
  row << s.step << ',' << format_double(s.loss) << ','
      << format_double(s.mean_token_entropy) << ',' << format_double(s.adv_mean)
      << ',' << format_double(s.adv_std) << ','
      << format_double(s.clip_fraction) << ',' << format_double(s.mean_ratio)
      << ',' << format_double(s.mean_response_length) << ','
      << s.all_right_count << ',' << s.all_wrong_count << ','
      << format_double(s.solve_rate);
  return row.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace

std::vector<std::string> step_stats_columns() {
  std::vector<std::string> cols = {"step"};
  for (const MetricAccessor& m : kMetrics) cols.push_back(m.name);
  return cols;
}

std::pair<int64_t, int64_t> count_group_extremes(
    const std::vector<RolloutGroup>& groups) {
  int64_t all_right = 0;
  int64_t all_wrong = 0;
  for (const RolloutGroup& g : groups) {
    if (g.rewards.empty())
      throw std::invalid_argument("count_group_extremes: empty group");
    bool any_right = false;
    bool any_wrong = false;
    for (int r : g.rewards) (r == 1 ? any_right : any_wrong) = true;
    if (any_right && !any_wrong) ++all_right;
    if (any_wrong && !any_right) ++all_wrong;
  }
  return {all_right, all_wrong};
}

double batch_entropy(const std::vector<ExplorationRecord>& records) {
  double sum = 0.0;
  double count = 0.0;
  for (const ExplorationRecord& rec : records) {
    for (double h : rec.profile.values) {
      sum += h;
      count += 1.0;
    }
  }
  if (count == 0.0)
    throw std::invalid_argument("batch_entropy: no profiled tokens");
  return sum / count;
}

void export_metrics(const MetricsHistory& history, const std::string& dir) {
  if (history.steps.empty())
    throw std::invalid_argument("export_metrics: empty history");

  fs::create_directories(fs::path(dir) / "series");

  {
    std::ofstream out(fs::path(dir) / "metrics.csv", std::ios::binary);
    if (!out) throw std::runtime_error("export_metrics: cannot open metrics.csv");
    std::vector<std::string> cols = step_stats_columns();
    for (size_t i = 0; i < cols.size(); ++i)
      out << (i > 0 ? "," : "") << cols[i];
    out << '\n';
    for (const StepStats& s : history.steps) out << csv_row(s) << '\n';
    if (!out) throw std::runtime_error("export_metrics: metrics.csv write failed");
  }

  {
    json meta;
    meta["algorithm"] = history.meta.algorithm;
    meta["seed"] = history.meta.seed;
    meta["config_hash"] = history.meta.config_hash;
    meta["suite_hash"] = history.meta.suite_hash;
    std::ofstream out(fs::path(dir) / "metadata.json", std::ios::binary);
    if (!out)
      throw std::runtime_error("export_metrics: cannot open metadata.json");
    out << meta.dump(2) << '\n';
  }

  for (const MetricAccessor& m : kMetrics) {
    std::ofstream out(fs::path(dir) / "series" / (std::string(m.name) + ".dat"),
                      std::ios::binary);
    if (!out) throw std::runtime_error("export_metrics: cannot open series file");
    for (const StepStats& s : history.steps)
      out << s.step << ' ' << format_double(m.get(s)) << '\n';
  }
}

MetricsHistory load_metrics(const std::string& dir) {
  MetricsHistory history;

  {
    std::ifstream in(fs::path(dir) / "metadata.json", std::ios::binary);
    if (!in) throw std::runtime_error("load_metrics: cannot open metadata.json");
    json meta = json::parse(in);
    history.meta.algorithm = meta.at("algorithm").get<std::string>();
    history.meta.seed = meta.at("seed").get<uint64_t>();
    history.meta.config_hash = meta.at("config_hash").get<std::string>();
    history.meta.suite_hash = meta.at("suite_hash").get<std::string>();
  }

  std::ifstream in(fs::path(dir) / "metrics.csv", std::ios::binary);
  if (!in) throw std::runtime_error("load_metrics: cannot open metrics.csv");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_metrics: empty metrics.csv");

  std::vector<std::string> expected = step_stats_columns();
  std::vector<std::string> header = split_csv(line);
  if (header != expected)
    throw std::runtime_error("load_metrics: unexpected metrics.csv header");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv(line);
    if (fields.size() != expected.size())
      throw std::runtime_error("load_metrics: malformed metrics row: " + line);
    StepStats s;
    s.step = std::stoll(fields[0]);
    s.loss = std::strtod(fields[1].c_str(), nullptr);
    s.mean_token_entropy = std::strtod(fields[2].c_str(), nullptr);
    s.adv_mean = std::strtod(fields[3].c_str(), nullptr);
    s.adv_std = std::strtod(fields[4].c_str(), nullptr);
    s.clip_fraction = std::strtod(fields[5].c_str(), nullptr);
    s.mean_ratio = std::strtod(fields[6].c_str(), nullptr);
    s.mean_response_length = std::strtod(fields[7].c_str(), nullptr);
    s.all_right_count = std::stoll(fields[8]);
    s.all_wrong_count = std::stoll(fields[9]);
    s.solve_rate = std::strtod(fields[10].c_str(), nullptr);
    history.steps.push_back(s);
  }
  return history;
}

Comparison compare(const MetricsHistory& a, const MetricsHistory& b) {
  Comparison cmp;
  cmp.fairness_warning = a.meta.seed != b.meta.seed ||
                         a.meta.suite_hash != b.meta.suite_hash;

  std::map<int64_t, const StepStats*> b_by_step;
  for (const StepStats& s : b.steps) b_by_step[s.step] = &s;

  for (const StepStats& s : a.steps) {
    auto it = b_by_step.find(s.step);
    if (it == b_by_step.end()) continue;
    cmp.steps.push_back(s.step);
    cmp.a.push_back(s);
    cmp.b.push_back(*it->second);
  }
  cmp.partial_alignment = cmp.steps.size() != a.steps.size() ||
                          cmp.steps.size() != b.steps.size();
  if (cmp.steps.empty()) return cmp;

  // Final window: the last 10% of aligned steps, never fewer than one.
  size_t window = std::max<size_t>(1, cmp.steps.size() / 10);
  size_t begin = cmp.steps.size() - window;
  for (const MetricAccessor& m : kMetrics) {
    MetricSummary summary;
    summary.name = m.name;
    for (size_t i = begin; i < cmp.steps.size(); ++i) {
      summary.final_a += m.get(cmp.a[i]);
      summary.final_b += m.get(cmp.b[i]);
    }
    summary.final_a /= static_cast<double>(window);
    summary.final_b /= static_cast<double>(window);
    summary.delta = summary.final_a - summary.final_b;
    cmp.summary.push_back(std::move(summary));
  }
  return cmp;
}

void write_comparison(const Comparison& comparison, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_comparison: cannot open " + path);
  out << "step";
  for (const MetricAccessor& m : kMetrics)
    out << ',' << m.name << "_a," << m.name << "_b," << m.name << "_delta";
  out << '\n';
  for (size_t i = 0; i < comparison.steps.size(); ++i) {
    out << comparison.steps[i];
    for (const MetricAccessor& m : kMetrics) {
      double va = m.get(comparison.a[i]);
      double vb = m.get(comparison.b[i]);
      out << ',' << format_double(va) << ',' << format_double(vb) << ','
          << format_double(va - vb);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_comparison: write failed: " + path);
}

std::string comparison_summary_text(const Comparison& comparison) {
  std::ostringstream out;
  if (comparison.fairness_warning)
    out << "warning: runs differ in seed or task suite; comparison is not "
           "like-for-like\n";
  if (comparison.partial_alignment)
    out << "warning: step ranges differ; only common steps were aligned\n";
  out << "aligned steps: " << comparison.steps.size() << '\n';
  out << "final-window means (last 10% of aligned steps):\n";
  for (const MetricSummary& s : comparison.summary) {
    out << "  " << s.name << ": a=" << format_double(s.final_a)
        << " b=" << format_double(s.final_b)
        << " delta=" << format_double(s.delta) << '\n';
  }
  return out.str();
}

}  // namespace fr3e
