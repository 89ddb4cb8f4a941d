#include "abnode/studies.hpp"

#include "abnode/kvfile.hpp"
#include "abnode/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace abnode {

std::vector<double> StudyResult::losses(const std::string& model, const std::string& variant) const {
  std::vector<double> out;
  for (const auto& c : cells) {
    if (c.failed || c.model != model) continue;
    if (!variant.empty() && c.variant != variant) continue;
    out.push_back(c.loss);
  }
  return out;
}

std::size_t StudyResult::failed_count() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const StudyCell& c) { return c.failed; }));
}

const Summary& StudyResult::summary(const std::string& key) const {
  for (const auto& s : summaries) {
    if (s.key == key) return s.summary;
  }
  throw Error(ErrorCode::kInvalidArgument, "no summary named '" + key + "'");
}

double StudyResult::percent_value(const std::string& key) const {
  for (const auto& p : percent) {
    if (p.key == key) return p.value;
  }
  throw Error(ErrorCode::kInvalidArgument, "no percent field named '" + key + "'");
}

Weights config_weights(const Dataset& data, int config_id) {
  const auto train = data.select(config_id, Role::kTrain);
  return weight_matrix(train);
}

namespace {

const Trajectory& test_trial(const Dataset& data, int config_id) {
  const auto test = data.select(config_id, Role::kTest);
  if (test.empty()) {
    throw Error(ErrorCode::kEmptyData, "config " + std::to_string(config_id) + " has no test trajectory");
  }
  return *test.front();
}

bool recoverable(ErrorCode code) {
  return code == ErrorCode::kNonFinite || code == ErrorCode::kUnstable || code == ErrorCode::kGimbalLock ||
         code == ErrorCode::kSingularMass;
}

// Runs fn and stores its loss in the cell; divergence marks the cell failed.
template <class Fn>
StudyCell run_cell(std::string model, int config_id, std::string variant, Fn&& fn) {
  StudyCell c;
  c.model = std::move(model);
  c.config_id = config_id;
  c.variant = std::move(variant);
  try {
    c.loss = fn();
    if (!std::isfinite(c.loss)) throw Error(ErrorCode::kNonFinite, "loss is not finite");
  } catch (const Error& e) {
    if (!recoverable(e.code())) throw;
    c.failed = true;
    c.loss = std::numeric_limits<double>::quiet_NaN();
    c.error = e.what();
  }
  return c;
}

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "nan" : "inf"); }

std::string cell_table(const std::vector<StudyCell>& cells) {
  std::ostringstream os;
  os << "model,config,variant,loss,status\n";
  for (const auto& c : cells) {
    os << c.model << "," << c.config_id << "," << c.variant << "," << fmt(c.loss) << ","
       << (c.failed ? "failed" : "ok") << "\n";
  }
  return os.str();
}

std::string summary_table(const std::vector<NamedSummary>& sums) {
  std::ostringstream os;
  os << "model,count,failed,mean,median,q1,q3,iqr,stddev,min,max\n";
  for (const auto& n : sums) {
    const Summary& s = n.summary;
    os << n.key << "," << s.count << "," << n.failed << "," << fmt(s.mean) << "," << fmt(s.median) << ","
       << fmt(s.q1) << "," << fmt(s.q3) << "," << fmt(s.iqr) << "," << fmt(s.stddev) << "," << fmt(s.min)
       << "," << fmt(s.max) << "\n";
  }
  return os.str();
}

NamedSummary summarize_model(const std::vector<StudyCell>& cells, const std::string& model) {
  NamedSummary n;
  n.key = model;
  std::vector<double> v;
  for (const auto& c : cells) {
    if (c.model != model) continue;
    if (c.failed) {
      ++n.failed;
    } else {
      v.push_back(c.loss);
    }
  }
  if (!v.empty()) {
    n.summary = summarize(v);
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    n.summary = {0, nan, nan, nan, nan, nan, nan, nan, nan};
  }
  return n;
}

// Percent reduction of each model's mean against every other model's mean.
void add_reductions(StudyResult& r, const std::vector<std::string>& names, const std::string& table_name) {
  std::ostringstream os;
  os << "model";
  for (const auto& b : names) os << "," << b;
  os << "\n";
  for (const auto& a : names) {
    os << a;
    for (const auto& b : names) {
      const double ma = r.summary(a).mean;
      const double mb = r.summary(b).mean;
      double red = std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(ma) && std::isfinite(mb) && mb != 0.0) red = -percent_change(mb, ma);
      r.percent.push_back({"reduction:" + a + ":" + b, red});
      os << "," << fmt(red);
    }
    os << "\n";
  }
  r.tables.push_back({table_name, os.str()});
}

std::string config_tag(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%03d", id);
  return buf;
}

std::string heatmap_grid(const Dataset& data, const std::vector<StudyCell>& cells, const std::string& model) {
  const auto thrust = grid_thrusts();
  std::set<double> deltas;
  for (const auto& c : data.configs) deltas.insert(c.delta_rx_cm);
  std::map<int, const StudyCell*> by_id;
  for (const auto& c : cells) {
    if (c.model == model) by_id[c.config_id] = &c;
  }
  std::ostringstream os;
  os << "delta_rx_cm";
  for (const auto& t : thrust) os << "," << format_double(t.first) << "/" << format_double(t.second);
  os << ",linear\n";
  for (double d : deltas) {
    std::vector<std::string> row(thrust.size() + 1);
    for (const auto& c : data.configs) {
      if (c.delta_rx_cm != d) continue;
      const auto it = by_id.find(c.id);
      if (it == by_id.end()) continue;
      const std::string v = it->second->failed ? "failed" : fmt(it->second->loss);
      if (c.kind == MotionKind::kLinear) {
        row.back() = v;
      } else if (c.grid_col >= 0 && c.grid_col < static_cast<int>(thrust.size())) {
        row[static_cast<std::size_t>(c.grid_col)] = v;
      }
    }
    os << format_double(d);
    for (const auto& v : row) os << "," << v;
    os << "\n";
  }
  return os.str();
}

struct JobOutput {
  std::vector<StudyCell> cells;
  std::vector<StudyTable> tables;
};

std::vector<StudyCell> flatten(std::vector<JobOutput>& outs, std::vector<StudyTable>& tables) {
  std::vector<StudyCell> cells;
  for (auto& o : outs) {
    for (auto& c : o.cells) cells.push_back(std::move(c));
    for (auto& t : o.tables) tables.push_back(std::move(t));
  }
  return cells;
}

std::string series_name(const std::string& model, int config_id) {
  return "series_" + model + "_" + config_tag(config_id) + ".dat";
}

}  // namespace

StudyResult heatmap_study(const Dataset& data, const std::vector<ModelKind>& models, const ModelSource& source,
                          const StudyOptions& opt, bool include_truth) {
  if (models.empty()) throw Error(ErrorCode::kInvalidArgument, "heatmap study needs at least one model");
  if (data.configs.empty()) throw Error(ErrorCode::kEmptyData, "dataset has no configurations");
  std::vector<ModelKind> kinds = models;
  if (include_truth) kinds.push_back(ModelKind::kTruth);
  const bool want_lambda =
      std::count(models.begin(), models.end(), ModelKind::kFirstPrinciple) &&
      std::count(models.begin(), models.end(), ModelKind::kBnode) &&
      std::count(models.begin(), models.end(), ModelKind::kAbnode);

  const std::size_t nc = data.configs.size();
  std::vector<JobOutput> outs(kinds.size() * nc);
  parallel_for(outs.size(), opt.jobs, [&](std::size_t job) {
    const ModelKind kind = kinds[job / nc];
    const MotionConfig& cfg = data.configs[job % nc];
    const std::string name = model_name(kind);
    const Trajectory& test = test_trial(data, cfg.id);
    const Weights w = config_weights(data, cfg.id);
    const bool series = std::count(opt.series_configs.begin(), opt.series_configs.end(), cfg.id) > 0;
    JobOutput& out = outs[job];
    Model model;
    out.cells.push_back(run_cell(name, cfg.id, "", [&] {
      model = kind == ModelKind::kTruth ? truth_model(data.truth, ResidualSpec{test.provenance.residual_cv,
                                                                                test.provenance.residual_cw})
                                        : source(kind, cfg.id);
      const Evaluation ev = evaluate_model(model, test, w, 1, opt.eval_max_samples);
      if (series) out.tables.push_back({series_name(name, cfg.id), format_series(ev.times, ev.mse)});
      return ev.loss;
    }));
    if (kind == ModelKind::kAbnode && want_lambda) {
      // First-principle model at the phase-1 parameters eta*.
      out.cells.push_back(run_cell("fp_phase1", cfg.id, "", [&] {
        if (out.cells.front().failed) throw Error(ErrorCode::kNonFinite, "ABNODE cell failed");
        Model tuned;
        tuned.kind = ModelKind::kFirstPrinciple;
        tuned.params = model.params;
        return evaluate_model(tuned, test, w, 1, opt.eval_max_samples).loss;
      }));
    }
  });

  StudyResult r;
  r.kind = "heatmap";
  r.cells = flatten(outs, r.tables);
  std::vector<std::string> names;
  for (ModelKind k : kinds) names.push_back(model_name(k));
  for (const auto& n : names) r.summaries.push_back(summarize_model(r.cells, n));
  if (want_lambda) r.summaries.push_back(summarize_model(r.cells, "fp_phase1"));

  std::ostringstream means;
  means << "model,mean_loss,configs,failed\n";
  for (const auto& s : r.summaries) {
    means << s.key << "," << fmt(s.summary.mean) << "," << s.summary.count << "," << s.failed << "\n";
  }
  std::vector<StudyTable> head;
  head.push_back({"heatmap_cells.csv", cell_table(r.cells)});
  head.push_back({"heatmap_means.csv", means.str()});
  for (const auto& n : names) head.push_back({"heatmap_" + n + ".csv", heatmap_grid(data, r.cells, n)});
  std::vector<std::string> compared;
  for (ModelKind k : models) compared.push_back(model_name(k));

  if (want_lambda) {
    std::map<std::pair<std::string, int>, const StudyCell*> at;
    for (const auto& c : r.cells) at[{c.model, c.config_id}] = &c;
    std::ostringstream os;
    os << "config,l_phy,l_phase1,l_bnode,l_abnode,lambda1,lambda2,lambda3\n";
    for (const auto& cfg : data.configs) {
      const StudyCell* l[4] = {at[{"fp", cfg.id}], at[{"fp_phase1", cfg.id}], at[{"bnode", cfg.id}],
                               at[{"abnode", cfg.id}]};
      if (std::any_of(std::begin(l), std::end(l), [](const StudyCell* c) { return !c || c->failed; })) continue;
      const LambdaIndices li = lambda_indices(l[0]->loss, l[1]->loss, l[2]->loss, l[3]->loss);
      os << cfg.id << "," << fmt(l[0]->loss) << "," << fmt(l[1]->loss) << "," << fmt(l[2]->loss) << ","
         << fmt(l[3]->loss) << "," << fmt(li.lambda1) << "," << fmt(li.lambda2) << "," << fmt(li.lambda3) << "\n";
    }
    const LambdaIndices lm = lambda_indices(r.summary("fp").mean, r.summary("fp_phase1").mean,
                                            r.summary("bnode").mean, r.summary("abnode").mean);
    os << "mean," << fmt(r.summary("fp").mean) << "," << fmt(r.summary("fp_phase1").mean) << ","
       << fmt(r.summary("bnode").mean) << "," << fmt(r.summary("abnode").mean) << "," << fmt(lm.lambda1) << ","
       << fmt(lm.lambda2) << "," << fmt(lm.lambda3) << "\n";
    r.percent.push_back({"lambda1", 100.0 * lm.lambda1});
    r.percent.push_back({"lambda2", 100.0 * lm.lambda2});
    r.percent.push_back({"lambda3", 100.0 * lm.lambda3});
    head.push_back({"lambda.csv", os.str()});
  }
  r.tables.insert(r.tables.begin(), head.begin(), head.end());
  add_reductions(r, compared, "heatmap_reductions.csv");
  return r;
}

std::vector<GridHub> grid_hubs(const std::vector<MotionConfig>& configs) {
  std::map<std::pair<int, int>, int> grid;
  for (const auto& c : configs) {
    if (c.kind == MotionKind::kSpiral && c.grid_row >= 0 && c.grid_col >= 0) grid[{c.grid_row, c.grid_col}] = c.id;
  }
  std::vector<GridHub> hubs;
  for (const auto& [rc, id] : grid) {
    const auto [r, c] = rc;
    GridHub h;
    h.hub = id;
    for (const auto& n : {std::pair{r - 1, c}, std::pair{r + 1, c}, std::pair{r, c - 1}, std::pair{r, c + 1}}) {
      const auto it = grid.find(n);
      if (it != grid.end()) h.neighbors.push_back(it->second);
    }
    if (h.neighbors.size() == 4) hubs.push_back(h);
  }
  if (hubs.empty()) {
    throw Error(ErrorCode::kGridTooSmall, "no spiral configuration has four grid neighbors (" +
                                              std::to_string(grid.size()) + " grid cells present)");
  }
  return hubs;
}

StudyResult generalization_study(const Dataset& data, const std::vector<ModelKind>& models,
                                 const ModelSource& source, const StudyOptions& opt) {
  if (models.empty()) throw Error(ErrorCode::kInvalidArgument, "generalization study needs at least one model");
  const auto hubs = grid_hubs(data.configs);
  std::vector<JobOutput> outs(models.size() * hubs.size());
  parallel_for(outs.size(), opt.jobs, [&](std::size_t job) {
    const ModelKind kind = models[job / hubs.size()];
    const GridHub& hub = hubs[job % hubs.size()];
    const std::string name = model_name(kind);
    Model model;
    bool loaded = false;
    for (int nb : hub.neighbors) {
      outs[job].cells.push_back(run_cell(name, nb, "hub=" + std::to_string(hub.hub), [&] {
        if (!loaded) {
          model = source(kind, hub.hub);
          loaded = true;
        }
        return evaluate_model(model, test_trial(data, nb), config_weights(data, nb), 1, opt.eval_max_samples)
            .loss;
      }));
    }
  });

  StudyResult r;
  r.kind = "generalization";
  r.cells = flatten(outs, r.tables);
  std::vector<std::string> names;
  for (ModelKind k : models) names.push_back(model_name(k));
  for (const auto& n : names) r.summaries.push_back(summarize_model(r.cells, n));
  std::ostringstream hub_table;
  hub_table << "hub,up,down,left,right\n";
  for (const auto& h : hubs) {
    hub_table << h.hub;
    for (int n : h.neighbors) hub_table << "," << n;
    hub_table << "\n";
  }
  r.tables.push_back({"generalization_summary.csv", summary_table(r.summaries)});
  r.tables.push_back({"generalization_cells.csv", cell_table(r.cells)});
  r.tables.push_back({"generalization_hubs.csv", hub_table.str()});
  add_reductions(r, names, "generalization_reductions.csv");
  return r;
}

StudyResult robustness_study(const Dataset& data, const RobustnessOptions& ropt, const StudyOptions& opt) {
  std::vector<double> levels = ropt.levels;
  levels.push_back(1.0);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  for (double l : levels) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorCode::kConfig, "robustness levels must be >= 0");
  }
  std::vector<int> ids;
  for (const auto& c : data.configs) {
    if (c.delta_rx_cm == ropt.delta_rx_cm) ids.push_back(c.id);
  }
  if (ids.empty()) {
    throw Error(ErrorCode::kEmptyData,
                "no configuration with gondola displacement " + format_double(ropt.delta_rx_cm) + " cm");
  }

  const std::size_t n = levels.size() * ids.size();
  std::vector<JobOutput> outs(n);
  parallel_for(n, opt.jobs, [&](std::size_t job) {
    const double level = levels[job / ids.size()];
    const int id = ids[job % ids.size()];
    const std::string variant = "level=" + format_double(level);
    PhysParams eta0 = data.eta0;
    eta0.eta.segment<3>(eta_ix::kDamping) *= level;
    const Trajectory& test = test_trial(data, id);
    const Weights w = config_weights(data, id);
    JobOutput& out = outs[job];
    out.cells.push_back(run_cell("fp", id, variant, [&] {
      Model fp;
      fp.params = eta0;
      return evaluate_model(fp, test, w, 1, opt.eval_max_samples).loss;
    }));
    out.cells.push_back(run_cell("abnode", id, variant, [&] {
      const auto train = data.select(id, Role::kTrain);
      TrainInput in = make_train_input(train, eta0, ropt.fit.train.max_samples);
      // Relative eta steps keep the unscaled magnitudes so a zeroed
      // coefficient can still move.
      in.eta_scale = data.eta0.eta;
      const TrainReport rep = train_abnode(in, ropt.fit.train);
      Model m;
      m.kind = ModelKind::kAbnode;
      m.params = eta0;
      m.params.eta = rep.eta_star;
      m.dims = default_dims(6);
      m.norm = in.norm;
      m.theta = rep.theta_star;
      return evaluate_model(m, test, w, 1, opt.eval_max_samples).loss;
    }));
  });

  StudyResult r;
  r.kind = "robustness";
  r.cells = flatten(outs, r.tables);
  const std::vector<std::string> names = {"fp", "abnode"};
  std::map<std::string, std::vector<double>> mean_at;
  for (const auto& m : names) {
    for (double level : levels) {
      // A level with any diverged rollout has unbounded loss.
      const std::string variant = "level=" + format_double(level);
      std::vector<double> v;
      bool failed = false;
      for (const auto& c : r.cells) {
        if (c.model != m || c.variant != variant) continue;
        if (c.failed) failed = true;
        v.push_back(c.loss);
      }
      double mean = std::numeric_limits<double>::infinity();
      if (!failed) mean = summarize(v).mean;
      mean_at[m].push_back(mean);
      NamedSummary ns = summarize_model({}, "");
      ns.key = m + ":" + variant;
      if (!failed) ns.summary = summarize(v);
      ns.failed = static_cast<std::size_t>(std::count_if(r.cells.begin(), r.cells.end(), [&](const StudyCell& c) {
        return c.model == m && c.variant == variant && c.failed;
      }));
      r.summaries.push_back(ns);
    }
  }
  const auto base_ix = static_cast<std::size_t>(std::find(levels.begin(), levels.end(), 1.0) - levels.begin());
  std::ostringstream os;
  os << "model";
  for (double l : levels) os << "," << format_double(l);
  os << "\n";
  for (const auto& m : names) {
    os << m;
    for (double v : mean_at[m]) os << "," << fmt(v);
    os << "\n";
  }
  for (const auto& m : names) {
    os << m << "_growth";
    double worst = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const double g = mean_at[m][i] / mean_at[m][base_ix];
      os << "," << fmt(g);
      if (i != base_ix) {
        r.percent.push_back({"growth:" + m + ":" + format_double(levels[i]), g});
        worst = std::max(worst, g);
      }
    }
    os << "\n";
    r.percent.push_back({"max_growth:" + m, worst});
  }
  r.tables.push_back({"robustness.csv", os.str()});
  r.tables.push_back({"robustness_cells.csv", cell_table(r.cells)});
  return r;
}

StudyResult timestep_study(const Dataset& data, const ModelSource& source, const TimestepOptions& topt,
                           const StudyOptions& opt) {
  if (topt.horizons_s.empty()) throw Error(ErrorCode::kConfig, "timestep study needs at least one horizon");
  for (int s : topt.strides) {
    if (s < 1) throw Error(ErrorCode::kConfig, "timestep strides must be >= 1");
  }
  for (int s : topt.cycle) {
    if (s < 1) throw Error(ErrorCode::kConfig, "timestep cycle entries must be >= 1");
  }
  auto samples_for = [](double h) { return static_cast<std::size_t>(std::llround(h * 60.0)) + 1; };
  const double longest = *std::max_element(topt.horizons_s.begin(), topt.horizons_s.end());
  const std::size_t needed = samples_for(longest);
  std::vector<int> ids;
  std::size_t best = 0;
  for (const auto& c : data.configs) {
    const std::size_t len = test_trial(data, c.id).states.size();
    best = std::max(best, len);
    if (len >= needed) ids.push_back(c.id);
  }
  if (ids.empty()) {
    throw Error(ErrorCode::kSequenceTooShort, "timestep study needs a test sequence of at least " +
                                                  format_double(longest) + " s (" + std::to_string(needed) +
                                                  " samples); longest available has " + std::to_string(best));
  }

  std::vector<std::string> variants;
  for (int s : topt.strides) variants.push_back("step=" + std::to_string(s));
  if (!topt.cycle.empty()) {
    std::string v = "cycle=";
    for (std::size_t i = 0; i < topt.cycle.size(); ++i) v += (i ? "-" : "") + std::to_string(topt.cycle[i]);
    variants.push_back(v);
  }

  std::vector<JobOutput> outs(ids.size());
  parallel_for(ids.size(), opt.jobs, [&](std::size_t job) {
    const int id = ids[job];
    const Trajectory& test = test_trial(data, id);
    const Weights w = config_weights(data, id);
    const Model model = source(ModelKind::kAbnode, id);
    for (double h : topt.horizons_s) {
      const std::size_t ns = samples_for(h);
      const std::string hs = ",h=" + format_double(h);
      outs[job].cells.push_back(run_cell("abnode", id, "step=1" + hs, [&] {
        return evaluate_model(model, make_sequence(test, ns, 1), w).loss;
      }));
      for (int s : topt.strides) {
        outs[job].cells.push_back(run_cell("abnode", id, "step=" + std::to_string(s) + hs, [&] {
          return evaluate_model(model, make_sequence(test, ns, static_cast<std::size_t>(s)), w).loss;
        }));
      }
      if (!topt.cycle.empty()) {
        outs[job].cells.push_back(run_cell("abnode", id, variants.back() + hs, [&] {
          return evaluate_model(model, make_cycle_sequence(test, topt.cycle, ns), w).loss;
        }));
      }
    }
  });

  StudyResult r;
  r.kind = "timestep";
  r.cells = flatten(outs, r.tables);
  std::map<std::pair<int, std::string>, const StudyCell*> at;
  for (const auto& c : r.cells) at[{c.config_id, c.variant}] = &c;

  std::ostringstream pct;
  std::ostringstream abs;
  pct << "variant";
  abs << "variant";
  for (double h : topt.horizons_s) {
    pct << "," << format_double(h);
    abs << "," << format_double(h);
  }
  pct << "\n";
  abs << "\n";
  std::vector<std::string> all = {"step=1"};
  all.insert(all.end(), variants.begin(), variants.end());
  for (const auto& v : all) {
    pct << v;
    abs << v;
    for (double h : topt.horizons_s) {
      const std::string hs = ",h=" + format_double(h);
      std::vector<double> changes;
      std::vector<double> losses;
      bool failed = false;
      for (int id : ids) {
        const StudyCell* base = at[{id, "step=1" + hs}];
        const StudyCell* cell = at[{id, v + hs}];
        if (base->failed || cell->failed) {
          failed = true;
          continue;
        }
        changes.push_back(percent_change(base->loss, cell->loss));
        losses.push_back(cell->loss);
      }
      const double inf = std::numeric_limits<double>::infinity();
      const double mean_change = failed ? inf : summarize(changes).mean;
      const double mean_loss = failed ? inf : summarize(losses).mean;
      if (v != "step=1") r.percent.push_back({v + hs, mean_change});
      NamedSummary ns = summarize_model({}, "");
      ns.key = v + hs;
      if (!failed) ns.summary = summarize(losses);
      r.summaries.push_back(ns);
      pct << "," << fmt(mean_change);
      abs << "," << fmt(mean_loss);
    }
    pct << "\n";
    abs << "\n";
  }
  std::ostringstream used;
  used << "config,test_samples\n";
  for (int id : ids) used << id << "," << test_trial(data, id).states.size() << "\n";
  r.tables.push_back({"timestep_percent.csv", pct.str()});
  r.tables.push_back({"timestep_loss.csv", abs.str()});
  r.tables.push_back({"timestep_configs.csv", used.str()});
  r.tables.push_back({"timestep_cells.csv", cell_table(r.cells)});
  return r;
}

}  // namespace abnode
