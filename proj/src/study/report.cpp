#include "cfbench/study/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace cfbench::study {

using metrics::format_double;

std::string source_label(const std::string& source) {
  if (source == "minedit") return "Min-Edit";
  if (source == "cem") return "CEM";
  if (source == "vlk") return "VLK";
  if (source == "revise") return "Revise";
  if (source == kGroundTruthSource) return "GroundTruth";
  return source;
}

const std::vector<std::string>& per_item_metrics() {
  static const std::vector<std::string> m{"mc_mean", "mc_std", "im1", "lof10", "grad_cos", "l1", "l2"};
  return m;
}

double metric_value(const metrics::MetricRecord& r, const std::string& metric) {
  if (metric == "l1") return r.l1;
  if (metric == "l2") return r.l2;
  if (metric == "mc_mean") return r.mc_mean;
  if (metric == "mc_std") return r.mc_std;
  if (metric == "im1") return r.im1;
  if (metric == "lof10") return r.lof10;
  if (metric == "grad_cos") return r.grad_cos;
  throw Error("report: unknown metric '" + metric + "'");
}

namespace {

std::size_t item_position(const ReportInput& in, const std::string& item_id) {
  const auto it = std::find(in.item_ids.begin(), in.item_ids.end(), item_id);
  if (it == in.item_ids.end()) throw Error("report: record for unknown item " + item_id);
  return static_cast<std::size_t>(it - in.item_ids.begin());
}

// Records of one source ordered by item position.
std::vector<const metrics::MetricRecord*> source_records(const ReportInput& in, const std::string& source) {
  std::vector<std::pair<std::size_t, const metrics::MetricRecord*>> tmp;
  for (const auto& r : in.records)
    if (r.source == source) tmp.emplace_back(item_position(in, r.item_id), &r);
  std::sort(tmp.begin(), tmp.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<const metrics::MetricRecord*> out;
  for (const auto& [pos, r] : tmp) out.push_back(r);
  return out;
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Bar {
  std::string label;
  double mean = 0.0;
  double sem = 0.0;
  bool present = false;
};

// Minimal grouped bar chart with SEM whiskers.
std::string svg_bars(const std::string& title, const std::vector<Bar>& bars) {
  const double width = 120.0 * static_cast<double>(bars.size()) + 80.0, height = 320.0;
  const double top = 40.0, bottom = 260.0, left = 60.0;
  double hi = 0.0, lo = 0.0;
  for (const Bar& b : bars)
    if (b.present) {
      hi = std::max(hi, b.mean + b.sem);
      lo = std::min(lo, b.mean - b.sem);
    }
  if (hi - lo <= 0.0) hi = lo + 1.0;
  auto y = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\"" << fixed(height, 0)
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<text x=\"" << fixed(width / 2, 1) << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  s << "<line x1=\"" << fixed(left, 1) << "\" y1=\"" << fixed(y(0.0), 1) << "\" x2=\"" << fixed(width - 10, 1)
    << "\" y2=\"" << fixed(y(0.0), 1) << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << fixed(left - 6, 1) << "\" y=\"" << fixed(top + 4, 1) << "\" text-anchor=\"end\">"
    << fixed(hi) << "</text>\n";
  s << "<text x=\"" << fixed(left - 6, 1) << "\" y=\"" << fixed(bottom + 4, 1) << "\" text-anchor=\"end\">"
    << fixed(lo) << "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const Bar& b = bars[i];
    const double x = left + 20.0 + 120.0 * static_cast<double>(i);
    const bool gt = b.label == "GroundTruth";
    if (b.present) {
      const double y0 = y(0.0), y1 = y(b.mean);
      s << "<rect x=\"" << fixed(x, 1) << "\" y=\"" << fixed(std::min(y0, y1), 1) << "\" width=\"80\" height=\""
        << fixed(std::abs(y1 - y0), 1) << "\" fill=\"" << (gt ? "#c0504d" : "#4f81bd") << "\"/>\n";
      const double cx = x + 40.0;
      s << "<line x1=\"" << fixed(cx, 1) << "\" y1=\"" << fixed(y(b.mean - b.sem), 1) << "\" x2=\"" << fixed(cx, 1)
        << "\" y2=\"" << fixed(y(b.mean + b.sem), 1) << "\" stroke=\"black\"/>\n";
      s << "<text x=\"" << fixed(cx, 1) << "\" y=\"" << fixed(std::min(y0, y1) - 4, 1) << "\" text-anchor=\"middle\">"
        << fixed(b.mean) << "</text>\n";
    }
    s << "<text x=\"" << fixed(x + 40.0, 1) << "\" y=\"" << fixed(bottom + 20, 1) << "\" text-anchor=\"middle\">"
      << b.label << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

Bar bar_for(const ReportInput& in, const std::string& source, const std::string& metric) {
  Bar b;
  b.label = source_label(source);
  const auto v = metric_values(in, source, metric);
  if (!v.empty()) {
    b.present = true;
    b.mean = mean(v);
    b.sem = v.size() >= 2 ? sem(v) : 0.0;
  }
  return b;
}

}  // namespace

std::vector<double> metric_values(const ReportInput& in, const std::string& source, const std::string& metric) {
  std::vector<double> out;
  for (const auto* r : source_records(in, source))
    if (r->covered) out.push_back(metric_value(*r, metric));
  return out;
}

std::vector<double> block_means(const ReportInput& in, const std::string& source, const std::string& metric) {
  const std::size_t n = in.item_ids.size();
  const auto blocks = static_cast<std::size_t>(std::max(1, in.blocks));
  std::vector<double> sum(blocks, 0.0);
  std::vector<int> count(blocks, 0);
  for (const auto* r : source_records(in, source)) {
    if (!r->covered) continue;
    const std::size_t b = item_position(in, r->item_id) * blocks / std::max<std::size_t>(n, 1);
    sum[b] += metric_value(*r, metric);
    ++count[b];
  }
  std::vector<double> out;
  for (std::size_t b = 0; b < blocks; ++b)
    if (count[b] > 0) out.push_back(sum[b] / count[b]);
  return out;
}

std::vector<std::pair<std::string, StatResult>> compute_stats(const ReportInput& in) {
  std::vector<std::pair<std::string, StatResult>> out;
  std::vector<std::string> labels;
  for (const auto& s : in.sources) labels.push_back(source_label(s));
  const auto gt = std::find(in.sources.begin(), in.sources.end(), kGroundTruthSource);

  for (const auto& metric : per_item_metrics()) {
    for (const char* aggregation : {"per_item", "block_means"}) {
      std::vector<std::vector<double>> groups;
      for (const auto& s : in.sources)
        groups.push_back(std::string(aggregation) == "per_item" ? metric_values(in, s, metric)
                                                                : block_means(in, s, metric));
      const std::string tag = metric + "/" + aggregation;
      try {
        out.emplace_back(tag, one_way_anova(groups, labels));
      } catch (const Error& e) {
        StatResult r;
        r.test = "one_way_anova";
        r.groups = labels;
        r.p = r.p_adjusted = std::nan("");
        r.warning = std::string("not computed: ") + e.what();
        out.emplace_back(tag, r);
      }
      if (std::string(aggregation) != "per_item" || gt == in.sources.end()) continue;
      try {
        for (auto& r : pairwise_tests_holm(groups, labels, static_cast<std::size_t>(gt - in.sources.begin()), in.welch))
          out.emplace_back(tag, r);
      } catch (const Error& e) {
        StatResult r;
        r.test = in.welch ? "welch_t" : "student_t";
        r.groups = labels;
        r.p = r.p_adjusted = std::nan("");
        r.warning = std::string("not computed: ") + e.what();
        out.emplace_back(tag, r);
      }
    }
  }
  return out;
}

std::map<std::string, std::string> render_report(const ReportInput& in) {
  std::map<std::string, std::string> files;
  const std::string& ds = in.dataset;

  {
    std::ostringstream t;
    t << "source";
    for (const char* m : {"mc_mean", "mc_std", "im1", "lof10", "r_sub", "grad_cos", "l1", "l2"}) t << ',' << ds << '.' << m;
    t << ',' << ds << ".coverage\n";
    for (const auto& s : in.sources) {
      t << source_label(s);
      auto cell = [&](const std::string& metric) {
        const auto v = metric_values(in, s, metric);
        t << ',' << (v.empty() ? "" : format_double(mean(v)));
      };
      cell("mc_mean");
      cell("mc_std");
      cell("im1");
      cell("lof10");
      const auto sub = in.substitutability.find(s);
      t << ',' << (sub == in.substitutability.end() ? "" : opt(sub->second));
      cell("grad_cos");
      cell("l1");
      cell("l2");
      const auto recs = source_records(in, s);
      const auto covered = std::count_if(recs.begin(), recs.end(), [](const auto* r) { return r->covered; });
      t << ',' << covered << '/' << recs.size() << '\n';
    }
    files["table1.csv"] = t.str();
  }

  {
    std::ostringstream f;
    f << "dataset,metric,source,n,mean,sd,sem\n";
    for (const char* metric : {"l1", "l2", "grad_cos"})
      for (const auto& s : in.sources) {
        const auto v = metric_values(in, s, metric);
        f << ds << ',' << metric << ',' << source_label(s) << ',' << v.size() << ',';
        if (!v.empty()) f << format_double(mean(v));
        f << ',';
        if (v.size() >= 2) f << format_double(std::sqrt(sample_variance(v)));
        f << ',';
        if (v.size() >= 2) f << format_double(sem(v));
        f << '\n';
      }
    files["fig4_bars.csv"] = f.str();
  }

  {
    std::ostringstream c;
    c << "dataset,source,items,covered,failures,coverage,failed_items\n";
    for (const auto& s : in.sources) {
      const auto recs = source_records(in, s);
      std::size_t covered = 0;
      std::string failed;
      for (const auto* r : recs) {
        if (r->covered) {
          ++covered;
        } else {
          if (!failed.empty()) failed += ';';
          failed += r->item_id;
        }
      }
      c << ds << ',' << source_label(s) << ',' << recs.size() << ',' << covered << ',' << recs.size() - covered << ','
        << (recs.empty() ? "" : format_double(static_cast<double>(covered) / static_cast<double>(recs.size()))) << ','
        << failed << '\n';
    }
    files["coverage.csv"] = c.str();
  }

  {
    std::ostringstream st;
    st << "metric,aggregation,test,group_a,group_b,statistic,df1,df2,p,p_adjusted,warning\n";
    for (const auto& [tag, r] : compute_stats(in)) {
      const auto slash = tag.find('/');
      const bool pair = r.test != "one_way_anova";
      st << tag.substr(0, slash) << ',' << tag.substr(slash + 1) << ',' << r.test << ','
         << (pair && r.groups.size() == 2 ? r.groups[0] : "all") << ','
         << (pair && r.groups.size() == 2 ? r.groups[1] : "") << ',' << format_double(r.statistic) << ','
         << format_double(r.df1) << ',' << format_double(r.df2) << ',' << format_double(r.p) << ','
         << format_double(r.p_adjusted) << ',' << csv_escape(r.warning) << '\n';
    }
    files["stats.csv"] = st.str();
  }

  {
    std::ostringstream rc;
    rc << "dataset," << metrics::csv_header() << '\n';
    for (const auto& s : in.sources)
      for (const auto* r : source_records(in, s)) rc << ds << ',' << metrics::to_csv_row(*r) << '\n';
    files["records.csv"] = rc.str();
  }

  for (const auto& [metric, name, title] :
       std::vector<std::tuple<std::string, std::string, std::string>>{
           {"l1", "fig4_l1.svg", "Mean L1 distance to query (SEM)"},
           {"l2", "fig4_l2.svg", "Mean L2 distance to query (SEM)"},
           {"grad_cos", "fig6_grad_cos.svg", "Mean Grad-Cos to target-class prototypes (SEM)"}}) {
    std::vector<Bar> bars;
    for (const auto& s : in.sources) bars.push_back(bar_for(in, s, metric));
    files[name] = svg_bars(ds + ": " + title, bars);
  }

  nlohmann::json cfg = in.config;
  cfg["reference_accuracy"] = in.reference_accuracy;
  files["config.json"] = cfg.dump(2) + "\n";
  return files;
}

}  // namespace cfbench::study
