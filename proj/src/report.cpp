#include "rpna/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>

#include "json_io.hpp"
#include "rpna/error.hpp"
#include "rpna/svg.hpp"

namespace rpna {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_number(double value, std::optional<int> decimals) {
  if (!std::isfinite(value)) return "";
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  if (decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", *decimals, value);
    std::string s = buf;
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
    return s;
  }
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string similarity_csv(const SimilarityMatrix& matrix) {
  std::string out;
  for (const auto& label : matrix.labels) out += "," + csv_field(label);
  out += "\n";
  for (std::size_t i = 0; i < matrix.labels.size(); ++i) {
    out += csv_field(matrix.labels[i]);
    for (std::size_t j = 0; j < matrix.labels.size(); ++j) {
      out += "," + format_number(matrix.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out += "\n";
  }
  return out;
}

namespace {

class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) {}

  void text(const std::string& name, std::string_view content) {
    write_text_file(dir_ / name, content);
    written_.push_back(dir_ / name);
  }
  void svg(const std::string& name, const SvgDocument& doc) { text(name, doc.str()); }

  std::vector<fs::path> done() { return std::move(written_); }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
};

template <typename T, typename Key>
std::vector<std::string> first_appearance(const std::vector<T>& rows, Key key) {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), key(r)) == out.end()) out.push_back(key(r));
  }
  return out;
}

std::string accuracy_csv(const RunArtifacts& a) {
  std::string out = "model,condition,accuracy,n,unparsed\n";
  for (const auto& r : a.accuracy) {
    out += csv_field(r.model) + "," + csv_field(r.condition) + "," +
           format_number(r.accuracy, r.decimals) + "," + std::to_string(r.n) + "," +
           std::to_string(r.unparsed) + "\n";
  }
  return out;
}

std::string accuracy_table_csv(const RunArtifacts& a) {
  std::vector<ModelInfo> models = a.models;
  for (const auto& name : first_appearance(a.accuracy, [](const AccuracyRow& r) { return r.model; })) {
    if (std::none_of(models.begin(), models.end(), [&](const ModelInfo& m) { return m.name == name; })) {
      models.push_back({name, ""});
    }
  }
  std::vector<std::string> conditions = a.conditions;
  for (const auto& c : first_appearance(a.accuracy, [](const AccuracyRow& r) { return r.condition; })) {
    if (std::find(conditions.begin(), conditions.end(), c) == conditions.end()) conditions.push_back(c);
  }
  std::map<std::pair<std::string, std::string>, const AccuracyRow*> cells;
  for (const auto& r : a.accuracy) cells[{r.model, r.condition}] = &r;

  std::string out = "model,architecture";
  for (const auto& c : conditions) out += "," + csv_field(c);
  out += "\n";
  for (const auto& m : models) {
    out += csv_field(m.name) + "," + csv_field(m.architecture);
    for (const auto& c : conditions) {
      out += ",";
      if (auto it = cells.find({m.name, c}); it != cells.end()) {
        out += format_number(it->second->accuracy, it->second->decimals);
      }
    }
    out += "\n";
  }
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string ablation_csv(const RunArtifacts& a) {
  std::string out =
      "condition,unmasked,role_diff,random,random_min,random_max,role_diff_lo,role_diff_hi,random_lo,random_hi\n";
  for (const auto& r : a.ablation) {
    double lo = 0.0, hi = 0.0;
    if (!r.random.empty()) {
      const auto [mn, mx] = std::minmax_element(r.random.begin(), r.random.end());
      lo = r.unmasked - *mx;
      hi = r.unmasked - *mn;
    }
    out += csv_field(r.condition) + "," + format_number(r.unmasked) + "," +
           format_number(r.role_diff_drop.delta) + "," + format_number(r.unmasked - mean(r.random)) + "," +
           format_number(lo) + "," + format_number(hi) + "," + format_number(r.role_diff_drop.lo) + "," +
           format_number(r.role_diff_drop.hi) + "," + format_number(r.random_drop.lo) + "," +
           format_number(r.random_drop.hi) + "\n";
  }
  return out;
}

// Plot frame shared by the figures: margins and a value-to-pixel mapping.
struct Frame {
  double left = 60, top = 30, width = 420, height = 260;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double x(double v) const { return left + (x1 == x0 ? 0.5 : (v - x0) / (x1 - x0)) * width; }
  double y(double v) const { return top + height - (y1 == y0 ? 0.5 : (v - y0) / (y1 - y0)) * height; }

  void axes(SvgDocument& doc, const std::string& xlabel, const std::string& ylabel) const {
    doc.line(left, top + height, left + width, top + height);
    doc.line(left, top, left, top + height);
    for (int i = 0; i <= 4; ++i) {
      const double v = y0 + (y1 - y0) * i / 4.0;
      doc.line(left - 4, y(v), left, y(v));
      doc.text(left - 6, y(v) + 3, format_number(std::round(v * 1000.0) / 1000.0), 9, "end");
    }
    doc.text(left + width / 2, top + height + 32, xlabel, 11, "middle");
    doc.text(16, top + height / 2, ylabel, 11, "middle", -90);
  }
};

void legend(SvgDocument& doc, double x, double y, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double yy = y + 14.0 * static_cast<double>(i);
    doc.rect(x, yy - 8, 10, 10, palette_color(i));
    doc.text(x + 14, yy, names[i], 9);
  }
}

SvgDocument ablation_svg(const RunArtifacts& a) {
  Frame f;
  f.width = std::max(200.0, 60.0 * static_cast<double>(a.ablation.size()));
  double top = 0.0;
  for (const auto& r : a.ablation) {
    top = std::max({top, r.role_diff_drop.delta, r.unmasked - mean(r.random)});
  }
  f.y1 = top > 0.0 ? top * 1.1 : 1.0;
  SvgDocument doc(f.left + f.width + 120, f.top + f.height + 90);
  f.axes(doc, "condition", "accuracy drop");
  const double slot = f.width / static_cast<double>(a.ablation.size());
  for (std::size_t i = 0; i < a.ablation.size(); ++i) {
    const auto& r = a.ablation[i];
    const double bx = f.left + slot * static_cast<double>(i) + slot * 0.15;
    const double bw = slot * 0.35;
    const double drops[2] = {r.role_diff_drop.delta, r.unmasked - mean(r.random)};
    for (int s = 0; s < 2; ++s) {
      const double v = std::max(0.0, drops[s]);
      doc.rect(bx + bw * s, f.y(v), bw, f.y(0) - f.y(v), palette_color(static_cast<std::size_t>(s)));
    }
    doc.text(bx + bw, f.top + f.height + 14, r.condition, 8, "middle");
  }
  legend(doc, f.left + f.width + 16, f.top + 10, {"role_diff", "random"});
  return doc;
}

std::string cross_csv(const RunArtifacts& a) {
  std::string out = "source,target,accuracy,drop\n";
  for (const auto& c : a.cross_role) {
    out += csv_field(c.source) + "," + csv_field(c.target) + "," + format_number(c.accuracy) + "," +
           format_number(c.drop) + "\n";
  }
  return out;
}

std::string sweep_csv(const RunArtifacts& a) {
  std::string out = "condition,top_layers,fraction,accuracy,drop\n";
  for (const auto& s : a.sweep) {
    out += csv_field(a.sweep_condition) + "," + std::to_string(s.top_layers) + "," +
           format_number(s.fraction) + "," + format_number(s.accuracy) + "," + format_number(s.drop) + "\n";
  }
  return out;
}

std::string sensitivity_csv(const RunArtifacts& a) {
  std::size_t layers = 0;
  for (const auto& s : a.salience) layers = std::max(layers, s.profile.layer_sensitivity.size());
  std::string out = "condition,n_samples";
  for (std::size_t l = 1; l <= layers; ++l) out += ",layer_" + std::to_string(l);
  out += "\n";
  for (const auto& s : a.salience) {
    out += csv_field(s.condition) + "," + std::to_string(s.profile.n_samples);
    for (double v : s.profile.layer_sensitivity) out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

SvgDocument heatmap_svg(const SimilarityMatrix& m, const std::string& title) {
  const double cell = 36.0, left = 170.0, top = 40.0;
  const double n = static_cast<double>(m.labels.size());
  SvgDocument doc(left + cell * n + 20, top + cell * n + 150);
  doc.text(left, 20, title, 12);
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    const double yy = top + cell * static_cast<double>(i);
    doc.text(left - 6, yy + cell / 2 + 3, m.labels[i], 9, "end");
    const double xx = left + cell * static_cast<double>(i) + cell / 2;
    doc.text(xx, top + cell * n + 10, m.labels[i], 9, "end", -60);
    for (std::size_t j = 0; j < m.labels.size(); ++j) {
      const double v = m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double cx = left + cell * static_cast<double>(j);
      doc.rect(cx, yy, cell, cell, heat_color(v), "#fff");
      char buf[16];
      std::snprintf(buf, sizeof buf, "%.2f", v);
      doc.text(cx + cell / 2, yy + cell / 2 + 3, buf, 8, "middle");
    }
  }
  return doc;
}

std::string pca_csv(const RunArtifacts& a) {
  std::string out = "condition,pc1,pc2\n";
  for (Eigen::Index i = 0; i < a.pca->points.rows(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out += csv_field(idx < a.pca_labels.size() ? a.pca_labels[idx] : "") + "," +
           format_number(a.pca->points(i, 0)) + "," + format_number(a.pca->points(i, 1)) + "\n";
  }
  return out;
}

SvgDocument pca_svg(const RunArtifacts& a) {
  const auto& p = *a.pca;
  Frame f;
  f.height = f.width = 320;
  f.x0 = p.points.col(0).minCoeff();
  f.x1 = p.points.col(0).maxCoeff();
  f.y0 = p.points.col(1).minCoeff();
  f.y1 = p.points.col(1).maxCoeff();
  SvgDocument doc(f.left + f.width + 190, f.top + f.height + 60);
  char xl[64], yl[64];
  std::snprintf(xl, sizeof xl, "PC1 (%.1f%%)", 100.0 * p.explained_variance[0]);
  std::snprintf(yl, sizeof yl, "PC2 (%.1f%%)", 100.0 * p.explained_variance[1]);
  f.axes(doc, xl, yl);
  const auto groups = first_appearance(a.pca_labels, [](const std::string& s) { return s; });
  for (Eigen::Index i = 0; i < p.points.rows(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto g = idx < a.pca_labels.size()
                       ? static_cast<std::size_t>(std::find(groups.begin(), groups.end(), a.pca_labels[idx]) - groups.begin())
                       : 0;
    doc.circle(f.x(p.points(i, 0)), f.y(p.points(i, 1)), 3, palette_color(g));
  }
  legend(doc, f.left + f.width + 16, f.top + 10, groups);
  return doc;
}

std::string silhouette_csv(const RunArtifacts& a) {
  std::string out = "grouping,group,silhouette,n\n";
  auto emit = [&](const char* grouping, const SilhouetteReport& s) {
    std::size_t total = 0;
    for (const auto& g : s.per_group) {
      out += std::string(grouping) + "," + csv_field(g.name) + "," + format_number(g.mean) + "," +
             std::to_string(g.count) + "\n";
      total += g.count;
    }
    out += std::string(grouping) + ",overall," + format_number(s.overall) + "," + std::to_string(total) + "\n";
  };
  if (a.silhouette) emit("condition", *a.silhouette);
  if (a.kmeans_silhouette) emit("kmeans", *a.kmeans_silhouette);
  return out;
}

std::string jsd_csv(const RunArtifacts& a) {
  std::size_t layers = 0;
  for (const auto& c : a.jsd) layers = std::max(layers, c.profile.values.size());
  std::string out = "condition,reference";
  for (std::size_t l = 1; l <= layers; ++l) out += ",layer_" + std::to_string(l);
  out += "\n";
  for (const auto& c : a.jsd) {
    out += csv_field(c.condition) + "," + csv_field(c.reference);
    for (double v : c.profile.values) out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

SvgDocument jsd_svg(const RunArtifacts& a) {
  Frame f;
  std::size_t layers = 1;
  double top = 0.0;
  for (const auto& c : a.jsd) {
    layers = std::max(layers, c.profile.values.size());
    for (double v : c.profile.values) top = std::max(top, v);
  }
  f.x0 = 1;
  f.x1 = static_cast<double>(layers);
  f.y1 = top > 0.0 ? top * 1.1 : 1.0;
  SvgDocument doc(f.left + f.width + 260, f.top + f.height + 60);
  f.axes(doc, "layer", "mean JSD (bits)");
  for (std::size_t l = 1; l <= layers; ++l) {
    doc.text(f.x(static_cast<double>(l)), f.top + f.height + 14, std::to_string(l), 9, "middle");
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < a.jsd.size(); ++i) {
    const auto& c = a.jsd[i];
    std::vector<std::pair<double, double>> pts;
    for (std::size_t l = 0; l < c.profile.values.size(); ++l) {
      pts.emplace_back(f.x(static_cast<double>(l + 1)), f.y(c.profile.values[l]));
    }
    doc.polyline(pts, palette_color(i));
    names.push_back(c.condition + " vs " + c.reference);
  }
  legend(doc, f.left + f.width + 16, f.top + 10, names);
  return doc;
}

std::string stats_csv(const RunArtifacts& a) {
  std::string out = "comparison,statistic,df,p,p_holm\n";
  for (const auto& s : a.stats) {
    out += csv_field(s.comparison) + "," + format_number(s.result.statistic) + "," +
           (s.result.df ? std::to_string(*s.result.df) : "") + "," + format_number(s.result.p_value) + "," +
           (s.p_holm ? format_number(*s.p_holm) : "") + "\n";
  }
  return out;
}

std::string deltas_csv(const RunArtifacts& a) {
  std::string out = "comparison,delta,lo,hi\n";
  for (const auto& d : a.deltas) {
    out += csv_field(d.name) + "," + format_number(d.interval.delta) + "," + format_number(d.interval.lo) +
           "," + format_number(d.interval.hi) + "\n";
  }
  return out;
}

json summary_record(const RunArtifacts& a, const std::vector<fs::path>& files) {
  json s;
  s["run_id"] = a.run_id;
  s["model"] = a.model;
  s["n_items"] = a.n_items;
  s["calibration_n"] = a.calibration_n;
  json acc = json::array();
  for (const auto& r : a.accuracy) {
    acc.push_back({{"model", r.model}, {"condition", r.condition}, {"accuracy", r.accuracy}});
  }
  s["accuracy"] = std::move(acc);
  for (const auto& st : a.stats) {
    if (st.result.method == "cochran-q") {
      s["cochran_q"] = {{"comparison", st.comparison}, {"statistic", st.result.statistic},
                        {"df", st.result.df ? json(*st.result.df) : json(nullptr)}, {"p", st.result.p_value}};
      break;
    }
  }
  json ab = json::array();
  for (const auto& r : a.ablation) {
    ab.push_back({{"condition", r.condition}, {"role_diff_drop", r.role_diff_drop.delta},
                  {"random_drop", r.unmasked - mean(r.random)}});
  }
  s["ablation"] = std::move(ab);
  s["sweep_cells"] = a.sweep.size();
  if (a.silhouette) s["silhouette_overall"] = a.silhouette->overall;
  if (a.kmeans_ari) s["kmeans_ari"] = *a.kmeans_ari;
  json names = json::array();
  for (const auto& f : files) names.push_back(f.filename().string());
  s["files"] = std::move(names);
  return s;
}

}  // namespace

std::vector<fs::path> emit_report(const RunArtifacts& a, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw DataError("cannot create report directory " + out_dir.string());

  Writer w(out_dir);
  if (!a.accuracy.empty()) {
    w.text("accuracy.csv", accuracy_csv(a));
    w.text("accuracy_table.csv", accuracy_table_csv(a));
  }
  if (!a.deltas.empty()) w.text("deltas.csv", deltas_csv(a));
  if (!a.ablation.empty()) {
    w.text("ablation_drop.csv", ablation_csv(a));
    w.svg("ablation_drop.svg", ablation_svg(a));
  }
  if (!a.cross_role.empty()) w.text("cross_role.csv", cross_csv(a));
  if (!a.sweep.empty()) w.text("sweep.csv", sweep_csv(a));
  if (!a.salience.empty()) w.text("layer_sensitivity.csv", sensitivity_csv(a));

  const auto& chosen = a.cka_layers == CkaLayers::Last ? a.cka_last : a.cka_mean_all;
  if (chosen) {
    w.text("cka.csv", similarity_csv(*chosen));
    w.svg("cka_heatmap.svg",
          heatmap_svg(*chosen, a.cka_layers == CkaLayers::Last ? "Linear CKA (last layer)"
                                                              : "Linear CKA (mean over layers)"));
  }
  if (a.cka_last) w.text("cka_last.csv", similarity_csv(*a.cka_last));
  if (a.cka_mean_all) w.text("cka_mean_all.csv", similarity_csv(*a.cka_mean_all));
  if (a.pca) {
    w.text("pca.csv", pca_csv(a));
    w.svg("pca.svg", pca_svg(a));
  }
  if (a.silhouette || a.kmeans_silhouette) w.text("silhouette.csv", silhouette_csv(a));
  if (!a.jsd.empty()) {
    w.text("jsd.csv", jsd_csv(a));
    w.svg("jsd.svg", jsd_svg(a));
  }
  if (!a.stats.empty()) w.text("stats.csv", stats_csv(a));

  auto files = w.done();
  const fs::path summary = out_dir / "summary.json";
  write_text_file(summary, dump_json(summary_record(a, files), 2) + "\n");
  files.push_back(summary);
  return files;
}

}  // namespace rpna
