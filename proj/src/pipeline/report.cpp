#include "auggen/pipeline/report.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "auggen/error.hpp"
#include "auggen/pipeline/format.hpp"

namespace auggen::pipeline {

namespace fs = std::filesystem;

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string Table::to_csv() const {
  std::string out = csv_row(header);
  for (const auto& r : rows) out += csv_row(r);
  return out;
}

std::string Table::to_text() const {
  std::vector<std::vector<std::string>> all{header};
  all.insert(all.end(), rows.begin(), rows.end());
  return text_table(all);
}

std::vector<std::string> tar_columns(const std::string& benchmark, const std::vector<double>& fpr_targets) {
  std::vector<std::string> out;
  for (double f : fpr_targets) out.push_back(benchmark + "-" + evalbench::fpr_key(f));
  return out;
}

std::vector<std::string> score_cells(const std::vector<const evalbench::EvalReport*>& reports,
                                     const std::vector<double>& fpr_targets) {
  std::vector<std::string> out;
  for (double f : fpr_targets) {
    std::vector<double> v;
    for (const auto* r : reports)
      if (auto t = r->tar_at(f)) v.push_back(*t);
    out.push_back(percent_cell(v));
  }
  std::vector<double> cv, r1;
  for (const auto* r : reports) {
    cv.push_back(r->cv.mean);
    if (r->rank1) r1.push_back(*r->rank1);
  }
  out.push_back(percent_cell(cv));
  out.push_back(r1.empty() ? "N/A" : percent_cell(r1));
  return out;
}

namespace {

std::vector<const evalbench::EvalReport*> by_model(const ReportInputs& in, const std::string& id) {
  std::vector<const evalbench::EvalReport*> out;
  for (const auto& r : in.eval)
    if (r.model_id == id) out.push_back(&r);
  return out;
}

evalbench::FeatureDynamics mean_dynamics(const std::vector<const evalbench::EvalReport*>& rs) {
  evalbench::FeatureDynamics m;
  int n = 0;
  for (const auto* r : rs) {
    if (!r->dynamics) continue;
    m.m_inter += r->dynamics->m_inter;
    m.m_intra += r->dynamics->m_intra;
    m.s_intra += r->dynamics->s_intra;
    ++n;
  }
  if (n) {
    m.m_inter /= n;
    m.m_intra /= n;
    m.s_intra /= n;
  }
  return m;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// (x, y) from columns xi and yi of a CSV with a header row.
std::vector<std::pair<double, double>> csv_points(const std::string& csv, std::size_t xi, std::size_t yi) {
  std::vector<std::pair<double, double>> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    if (f.size() <= std::max(xi, yi)) continue;
    out.emplace_back(std::stod(f[xi]), std::stod(f[yi]));
  }
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

Table comparison_table(const ReportInputs& in) {
  Table t;
  t.header = {"Method/Data", "Aux", "n^s", "n^r"};
  for (auto& c : tar_columns(in.benchmark, in.fpr_targets)) t.header.push_back(c);
  t.header.push_back("CV");
  t.header.push_back("TR1");
  auto row = [&](const std::string& name, const std::string& aux, long ns, const std::string& id) {
    std::vector<std::string> r{name, aux, format_count(ns), format_count(in.orig_count)};
    for (auto& c : score_cells(by_model(in, id), in.fpr_targets)) r.push_back(c);
    t.rows.push_back(r);
  };
  row("D^orig", "N/A", 0, "M_orig");
  row("D^orig + D^aug (Ours)", "N", in.aug_count, "M_mix");
  return t;
}

Table dynamics_table(const ReportInputs& in) {
  Table t;
  t.header = {"Dataset/Method", "n^s", "n^r", "M-Inter", "M-Intra", "S-Intra"};
  auto row = [&](const std::string& name, long ns, const std::string& id) {
    const auto cells = split(evalbench::format_dynamics_row(mean_dynamics(by_model(in, id))), ',');
    std::vector<std::string> r{name, format_count(ns), format_count(in.orig_count)};
    r.insert(r.end(), cells.begin(), cells.end());
    t.rows.push_back(r);
  };
  row("Baseline", 0, "M_orig");
  row("AugGen", in.aug_count, "M_mix");
  return t;
}

Table gen_metrics_table(const ReportInputs& in) {
  Table t;
  t.header = {"Dataset", "Extractor", "k", "FD", "Precision", "Recall", "Coverage"};
  for (const auto& g : in.gen)
    t.rows.push_back({g.dataset_id, g.extractor_id, std::to_string(g.k), fmt("%.4f", g.fd), fmt("%.4f", g.precision),
                      fmt("%.4f", g.recall), fmt("%.4f", g.coverage)});
  return t;
}

std::string direction_summary(const ReportInputs& in) {
  std::map<std::uint64_t, const evalbench::EvalReport*> orig, mix;
  for (const auto& r : in.eval) (r.model_id == "M_orig" ? orig : mix)[r.seed] = &r;
  std::ostringstream o;
  for (double f : in.fpr_targets) {
    std::vector<double> d;
    int up = 0;
    for (auto [s, r] : orig)
      if (mix.count(s)) {
        const double delta = mix[s]->tar_at(f).value_or(0) - r->tar_at(f).value_or(0);
        d.push_back(delta);
        up += delta > 0;
      }
    const auto m = mean_std(d);
    o << "TAR@" << evalbench::fpr_key(f) << " M_mix - M_orig: " << fmt("%+.2f", 100 * m.mean) << "±"
      << fmt("%.2f", 100 * m.std) << " points, higher in " << up << "/" << d.size() << " seeds\n";
  }
  int inter = 0, intra = 0, n = 0;
  for (auto [s, r] : orig)
    if (mix.count(s) && r->dynamics && mix[s]->dynamics) {
      ++n;
      inter += mix[s]->dynamics->m_inter < r->dynamics->m_inter;
      intra += mix[s]->dynamics->m_intra > r->dynamics->m_intra;
    }
  if (n) o << "M-Inter lower in " << inter << "/" << n << " seeds, M-Intra higher in " << intra << "/" << n << " seeds\n";
  return o.str();
}

void write_report(const ReportInputs& in, const std::vector<std::string>& formats, const fs::path& dir) {
  const std::set<std::string> f(formats.begin(), formats.end());
  fs::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << text;
  };
  const Table cmp = comparison_table(in), dyn = dynamics_table(in), gen = gen_metrics_table(in);

  if (f.count("csv")) {
    put("comparison.csv", cmp.to_csv());
    put("dynamics.csv", dyn.to_csv());
    put("gen_metrics.csv", gen.to_csv());
  }
  if (f.count("txt")) {
    std::ostringstream o;
    o << "Verification on held-out identities (mean±std over seeds, percent)\n\n" << cmp.to_text() << "\n";
    o << direction_summary(in) << "\n";
    o << "Feature dynamics on the probe mixed classes\n\n" << dyn.to_text() << "\n";
    o << "Generative metrics against D^orig\n\n" << gen.to_text() << "\n";
    o << "Grid search: selected (" << fmt("%.2f", in.grid.selected.first) << ", "
      << fmt("%.2f", in.grid.selected.second) << "), policy " << mixsearch::to_string(in.grid.policy) << "\n";
    o << "D^aug weights: " << in.weights;
    o << "Reproduction fidelity (oracle accuracy on D^repro): " << fmt("%.4f", in.fidelity) << "\n";
    put("report.txt", o.str());
  }
  if (f.count("svg")) {
    put("heatmap.svg", mixsearch::heatmap_svg(in.grid));

    PlotSpec diag{"Grid search diagonal", "alpha = beta", "measure", false, {}};
    Series total{"m_total", {}}, md{"m_d", {}}, ms{"m_s", {}};
    for (const auto& c : in.grid.diagonal()) {
      total.points.emplace_back(c.alpha, c.m_total);
      md.points.emplace_back(c.alpha, c.m_d_mean);
      ms.points.emplace_back(c.alpha, c.m_s_mean);
    }
    diag.series = {total, md, ms};
    put("grid_diagonal.svg", line_plot_svg(diag));

    PlotSpec roc{"ROC on held-out identities", "FPR", "TAR", true, {}};
    std::map<std::string, Series> by;
    std::vector<std::string> order;
    std::istringstream rin(in.roc_tsv);
    std::string line;
    std::getline(rin, line);
    while (std::getline(rin, line)) {
      const auto p = split(line, '\t');
      if (p.size() < 4) continue;
      const std::string key = p[0] + " s" + p[1];
      if (!by.count(key)) order.push_back(key);
      by[key].name = key;
      by[key].points.emplace_back(std::stod(p[2]), std::stod(p[3]));
    }
    for (const auto& k : order) roc.series.push_back(by[k]);
    put("roc.svg", line_plot_svg(roc));

    PlotSpec curves{"Discriminator training loss", "epoch", "loss", false, {}};
    for (const auto& c : in.curves) curves.series.push_back({c.name, csv_points(c.csv, 0, 2)});
    put("curves.svg", line_plot_svg(curves));

    PlotSpec g{"Generator training loss", "step", "weighted loss", false, {{"loss", csv_points(in.generator_curve, 0, 2)}}};
    put("generator_curve.svg", line_plot_svg(g));
  }
}

}  // namespace auggen::pipeline
