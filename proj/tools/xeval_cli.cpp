/*
 * Copyright 2026 The xeval Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// xeval command-line front end: train, explain, evaluate, aggregate, ava.

#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xeval/xeval.hpp"

namespace {

using nlohmann::json;
using namespace xeval;

struct RunConfig {
  std::string subcommand;
  std::string data;
  std::string label_col = "label";
  std::string model;
  std::string out;
  std::string report;
  std::string dump;
  std::vector<std::string> explainers;
  std::vector<std::string> criteria;
  std::string baseline = "zero";
  double radius = 1.0;
  std::string rho = "linf";
  std::string metric_d = "l2";
  std::size_t subset_size = 0;
  std::size_t num_subsets = 100;
  std::size_t k = 0;  // 0: per-command default
  std::string method = "mean";
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  bool normalize = true;
  bool unit_normalize = true;

  std::size_t epochs = 200;
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::vector<std::size_t> hidden_layers = {16};
  std::string activation = "leaky_relu";
  double slope = 0.01;
  double l2_penalty = 0.0;

  double step_size = 0.01;
  std::size_t max_steps = 10000;
  std::size_t iterations = 10;
  std::size_t kept_points = 0;
  std::size_t line_grid = 1001;

  bool normalize_weights = true;
  bool cache = true;
  std::string ava_pool = "dataset";  // dataset: every loaded row; train: the training split
  std::size_t retrain_seeds = 5;

  std::size_t threads = 0;  // 0: hardware concurrency; not echoed
};

json ToJson(const RunConfig& c) {
  return {{"subcommand", c.subcommand},
          {"data", c.data},
          {"label_col", c.label_col},
          {"model", c.model},
          {"out", c.out},
          {"report", c.report},
          {"dump", c.dump},
          {"explainers", c.explainers},
          {"criteria", c.criteria},
          {"baseline", c.baseline},
          {"radius", c.radius},
          {"rho", c.rho},
          {"metric_d", c.metric_d},
          {"subset_size", c.subset_size},
          {"num_subsets", c.num_subsets},
          {"k", c.k},
          {"method", c.method},
          {"seed", c.seed},
          {"test_fraction", c.test_fraction},
          {"normalize", c.normalize},
          {"unit_normalize", c.unit_normalize},
          {"train",
           {{"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"hidden_layers", c.hidden_layers},
            {"activation", c.activation},
            {"slope", c.slope},
            {"l2_penalty", c.l2_penalty}}},
          {"lowering",
           {{"step_size", c.step_size},
            {"max_steps", c.max_steps},
            {"iterations", c.iterations},
            {"kept_points", c.kept_points},
            {"line_grid", c.line_grid}}},
          {"ava", {{"normalize_weights", c.normalize_weights}, {"cache", c.cache}, {"pool", c.ava_pool}}},
          {"retrain", {{"num_seeds", c.retrain_seeds}}}};
}

template <typename T>
void Take(const json& doc, const char* key, T& field) {
  if (doc.contains(key)) field = doc.at(key).get<T>();
}

void ApplyJson(RunConfig& c, const json& doc) {
  Require(doc.is_object(), ErrorCode::kParseError, "config file must hold an object");
  Take(doc, "data", c.data);
  Take(doc, "label_col", c.label_col);
  Take(doc, "model", c.model);
  Take(doc, "out", c.out);
  Take(doc, "report", c.report);
  Take(doc, "dump", c.dump);
  Take(doc, "explainers", c.explainers);
  Take(doc, "criteria", c.criteria);
  Take(doc, "baseline", c.baseline);
  Take(doc, "radius", c.radius);
  Take(doc, "rho", c.rho);
  Take(doc, "metric_d", c.metric_d);
  Take(doc, "subset_size", c.subset_size);
  Take(doc, "num_subsets", c.num_subsets);
  Take(doc, "k", c.k);
  Take(doc, "method", c.method);
  Take(doc, "seed", c.seed);
  Take(doc, "test_fraction", c.test_fraction);
  Take(doc, "normalize", c.normalize);
  Take(doc, "unit_normalize", c.unit_normalize);
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    Take(t, "epochs", c.epochs);
    Take(t, "learning_rate", c.learning_rate);
    Take(t, "batch_size", c.batch_size);
    Take(t, "hidden_layers", c.hidden_layers);
    Take(t, "activation", c.activation);
    Take(t, "slope", c.slope);
    Take(t, "l2_penalty", c.l2_penalty);
  }
  if (doc.contains("lowering")) {
    const json& l = doc.at("lowering");
    Take(l, "step_size", c.step_size);
    Take(l, "max_steps", c.max_steps);
    Take(l, "iterations", c.iterations);
    Take(l, "kept_points", c.kept_points);
    Take(l, "line_grid", c.line_grid);
  }
  if (doc.contains("ava")) {
    Take(doc.at("ava"), "normalize_weights", c.normalize_weights);
    Take(doc.at("ava"), "cache", c.cache);
    Take(doc.at("ava"), "pool", c.ava_pool);
  }
  if (doc.contains("retrain")) Take(doc.at("retrain"), "num_seeds", c.retrain_seeds);
}

// "name:key=val,key=val"
std::pair<std::string, std::map<std::string, std::string>> ParseSpec(const std::string& spec) {
  const auto colon = spec.find(':');
  std::pair<std::string, std::map<std::string, std::string>> out;
  out.first = spec.substr(0, colon);
  if (colon == std::string::npos) return out;
  std::stringstream rest(spec.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    Require(eq != std::string::npos, ErrorCode::kParseError, "expected key=value in '" + spec + "'");
    out.second[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

std::size_t ToCount(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos == v.size()) return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
  }
  Fail(ErrorCode::kParseError, "'" + key + "' expects a count, got '" + v + "'");
}

double ToReal(const std::string& v, const std::string& key) {
  const auto r = xeval::detail::ParseReal(v);
  Require(r.has_value(), ErrorCode::kParseError, "'" + key + "' expects a number, got '" + v + "'");
  return *r;
}

BaselineKind ParseBaselineKind(const std::string& name) {
  if (name == "zero") return BaselineKind::kZero;
  if (name == "mean") return BaselineKind::kTrainingMean;
  Fail(ErrorCode::kInvalidArgument, "baseline must be zero or mean, got '" + name + "'");
}

Activation ParseActivation(const std::string& name, double slope) {
  if (name == "leaky_relu") return Activation::LeakyRelu(slope);
  if (name == "relu") return Activation::Relu();
  if (name == "identity") return Activation::Identity();
  Fail(ErrorCode::kInvalidArgument, "unknown activation '" + name + "'");
}

struct NamedExplainer {
  std::string name;
  ExplainerConfig config;
};

struct Context {
  RunConfig cfg;
  std::optional<Dataset> data;
  Split split;
  std::optional<Dataset> train;
  std::optional<Dataset> test;
  std::optional<Model> model;
  std::string model_source;
  Baseline baseline;
  std::size_t workers = 1;
};

TrainConfig MakeTrainConfig(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.learning_rate = c.learning_rate;
  t.batch_size = c.batch_size;
  t.hidden_layers = c.hidden_layers;
  t.activation = ParseActivation(c.activation, c.slope);
  t.l2_penalty = c.l2_penalty;
  t.seed = c.seed;
  return t;
}

void Prepare(Context& ctx, bool need_model) {
  const RunConfig& c = ctx.cfg;
  Require(!c.data.empty(), ErrorCode::kInvalidArgument, "--data is required");
  Require(c.test_fraction > 0.0 && c.test_fraction < 1.0, ErrorCode::kInvalidArgument,
          "test_fraction must lie in (0, 1)");
  ctx.data.emplace(LoadCsv(c.data, c.label_col, c.normalize));
  ctx.split = TrainTestSplit(ctx.data->size(), 1.0 - c.test_fraction, c.seed);
  ctx.train.emplace(ctx.data->Subset(ctx.split.train));
  ctx.test.emplace(ctx.data->Subset(ctx.split.test));
  ctx.baseline = MakeBaseline(*ctx.train, ParseBaselineKind(c.baseline));
  if (!need_model) return;
  if (!c.model.empty()) {
    ctx.model.emplace(LoadModel(c.model));
    ctx.model_source = c.model;
    Require(ctx.model->input_dim() == ctx.data->dim(), ErrorCode::kDimensionMismatch,
            "model expects " + std::to_string(ctx.model->input_dim()) + " features, data has " +
                std::to_string(ctx.data->dim()));
  } else {
    ctx.model.emplace(Train(*ctx.train, MakeTrainConfig(c)).model);
    ctx.model_source = "trained";
  }
}

NamedExplainer ParseExplainer(const std::string& spec, const Context& ctx) {
  auto [name, params] = ParseSpec(spec);
  NamedExplainer out;
  ExplainerConfig& e = out.config;
  e.kind = ParseExplainerKind(name);
  e.baseline = ctx.baseline;
  e.seed = ctx.cfg.seed;
  for (const auto& [key, value] : params) {
    if (key == "steps") {
      e.steps = ToCount(value, key);
    } else if (key == "permutations") {
      e.permutations = ToCount(value, key);
    } else if (key == "budget") {
      e.coalition_budget = ToCount(value, key);
    } else if (key == "seed") {
      e.seed = ToCount(value, key);
    } else if (key == "target") {
      e.target = ParseTargetKind(value);
    } else if (key == "baseline") {
      e.baseline = MakeBaseline(*ctx.train, ParseBaselineKind(value));
    } else {
      Fail(ErrorCode::kInvalidArgument, "unknown explainer option '" + key + "'");
    }
  }
  out.name = ExplainerKindName(e.kind);
  if (!params.empty()) out.name += spec.substr(spec.find(':'));
  return out;
}

json ToJson(const NamedExplainer& e) {
  return {{"name", e.name},
          {"kind", ExplainerKindName(e.config.kind)},
          {"steps", e.config.steps},
          {"permutations", e.config.permutations},
          {"coalition_budget", e.config.coalition_budget},
          {"baseline", BaselineKindName(e.config.baseline.kind)},
          {"target", TargetKindName(e.config.target)},
          {"seed", e.config.seed}};
}

std::vector<NamedExplainer> Explainers(const Context& ctx, std::vector<std::string> fallback) {
  const auto& specs = ctx.cfg.explainers.empty() ? fallback : ctx.cfg.explainers;
  std::vector<NamedExplainer> out;
  for (const auto& s : specs) out.push_back(ParseExplainer(s, ctx));
  return out;
}

CriterionConfig MakeCriterionConfig(const Context& ctx) {
  CriterionConfig c;
  c.metric = ParseExplanationMetric(ctx.cfg.metric_d);
  c.neighborhood.radius = ctx.cfg.radius;
  c.neighborhood.input_metric = ParseNorm(ctx.cfg.rho);
  c.faithfulness.subset_size = ctx.cfg.subset_size;
  c.faithfulness.num_subsets = ctx.cfg.num_subsets;
  c.baseline = ctx.baseline;
  c.unit_normalize = ctx.cfg.unit_normalize;
  c.seed = ctx.cfg.seed;
  return c;
}

json Provenance(const Context& ctx, const std::vector<NamedExplainer>& explainers) {
  json ex = json::array();
  for (const auto& e : explainers) ex.push_back(ToJson(e));
  return {{"model", ctx.model_source},
          {"rng", Rng::kAlgorithm},
          {"rows", ctx.data->size()},
          {"test_rows", ctx.split.test},
          {"explainers", ex}};
}

// Evaluates fn at every id on the worker pool, then assembles the report in
// id order with the usual skip rules.
CriterionReport PerPoint(const std::string& name, const std::vector<std::size_t>& ids,
                         const std::function<double(std::size_t)>& fn, std::size_t workers) {
  std::vector<double> values(ids.size());
  std::vector<std::exception_ptr> errors(ids.size());
  ParallelFor(ids.size(), [&](std::size_t i) {
    try {
      values[i] = fn(ids[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }, workers);
  std::unordered_map<std::size_t, std::size_t> pos;
  for (std::size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = i;
  return RunPerPoint(name, ids, [&](std::size_t id) {
    const std::size_t i = pos.at(id);
    if (errors[i]) std::rethrow_exception(errors[i]);
    return values[i];
  });
}

CriterionReport DatasetLevel(const std::string& name, double value, json extra = json::object()) {
  CriterionReport r;
  r.criterion = name;
  r.summary = {value, 0.0, 1};
  extra["value"] = value;
  r.extra = std::move(extra);
  return r;
}

std::string Cell(const CriterionReport& r) {
  if (r.summary.count == 0) return "n/a (skipped " + std::to_string(r.skipped.size()) + ")";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.4g +/- %.4g", r.summary.mean, r.summary.stddev);
  std::string s = buf;
  if (!r.skipped.empty()) s += " [skipped " + std::to_string(r.skipped.size()) + "]";
  return s;
}

void PrintTable(const std::vector<std::string>& columns,
                const std::vector<std::pair<std::string, std::vector<std::string>>>& rows) {
  std::vector<std::size_t> width(columns.size() + 1, 0);
  for (const auto& [label, cells] : rows) {
    width[0] = std::max(width[0], label.size());
    for (std::size_t j = 0; j < cells.size(); ++j) width[j + 1] = std::max(width[j + 1], cells[j].size());
  }
  for (std::size_t j = 0; j < columns.size(); ++j) width[j + 1] = std::max(width[j + 1], columns[j].size());
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size() + 2, ' '); };
  std::string line = pad("", width[0]);
  for (std::size_t j = 0; j < columns.size(); ++j) line += pad(columns[j], width[j + 1]);
  std::cout << line << "\n";
  for (const auto& [label, cells] : rows) {
    line = pad(label, width[0]);
    for (std::size_t j = 0; j < cells.size(); ++j) line += pad(cells[j], width[j + 1]);
    std::cout << line << "\n";
  }
}

void WriteJson(const std::string& path, const json& doc) {
  WriteFileAtomic(path, doc.dump(2) + "\n");
}

// --- train ---------------------------------------------------------------------------

int CmdTrain(Context& ctx) {
  Prepare(ctx, false);
  const std::string path = !ctx.cfg.out.empty() ? ctx.cfg.out : ctx.cfg.model;
  Require(!path.empty(), ErrorCode::kInvalidArgument, "train needs --out (or --model) for the model file");
  const TrainResult result = Train(*ctx.train, MakeTrainConfig(ctx.cfg));
  const double test_acc = Accuracy(result.model, *ctx.test);
  WriteFileAtomic(path, ModelToJson(result.model).dump(1) + "\n");
  std::printf("train_accuracy %.4f\ntest_accuracy %.4f\nmodel %s\n", result.train_accuracy,
              test_acc, path.c_str());
  return 0;
}

// --- explain ---------------------------------------------------------------------------

std::vector<std::vector<Vector>> ExplainAll(const Model& model,
                                            const std::vector<NamedExplainer>& explainers,
                                            const Dataset& data, const std::vector<std::size_t>& ids,
                                            std::size_t workers) {
  std::vector<std::vector<Vector>> out(ids.size(), std::vector<Vector>(explainers.size()));
  ParallelFor(ids.size() * explainers.size(), [&](std::size_t t) {
    const std::size_t i = t / explainers.size(), e = t % explainers.size();
    out[i][e] = ExplainWith(model, data.row(ids[i]), explainers[e].config);
  }, workers);
  return out;
}

int CmdExplain(Context& ctx) {
  Prepare(ctx, true);
  const auto explainers = Explainers(ctx, {"shapley_wls"});
  const auto& ids = ctx.split.test;
  const auto values = ExplainAll(*ctx.model, explainers, *ctx.data, ids, ctx.workers);
  AttributionDump dump;
  dump.feature_names = ctx.data->feature_names();
  dump.metadata["config"] = ToJson(ctx.cfg);
  dump.metadata["provenance"] = Provenance(ctx, explainers);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t e = 0; e < explainers.size(); ++e) {
      dump.rows.push_back({values[i][e], ids[i], explainers[e].name, false});
    }
  }
  if (ctx.cfg.out.empty()) {
    std::cout << FormatDump(dump);
  } else {
    WriteDump(ctx.cfg.out, dump);
    std::printf("wrote %zu attributions to %s\n", dump.rows.size(), ctx.cfg.out.c_str());
  }
  return 0;
}

// --- evaluate --------------------------------------------------------------------------

CriterionReport EvaluateCriterion(const Context& ctx, const std::string& spec, const Explainer& g,
                                  const CriterionConfig& base) {
  auto [name, params] = ParseSpec(spec);
  CriterionConfig c = base;
  std::size_t k = ctx.cfg.k > 0 ? ctx.cfg.k : 1;
  for (const auto& [key, value] : params) {
    if (key == "k") {
      k = ToCount(value, key);
    } else if (key == "subset_size") {
      c.faithfulness.subset_size = ToCount(value, key);
    } else if (key == "num_subsets") {
      c.faithfulness.num_subsets = ToCount(value, key);
    } else if (key == "radius") {
      c.neighborhood.radius = ToReal(value, key);
    } else if (key == "target") {
      c.target = ParseTargetKind(value);
    } else {
      Fail(ErrorCode::kInvalidArgument, "unknown criterion option '" + key + "'");
    }
  }
  const Model& model = *ctx.model;
  const Dataset& data = *ctx.data;
  const auto& ids = ctx.split.test;
  const std::size_t w = ctx.workers;
  CriterionReport report;
  auto make_retrain = [&] {
    RetrainConfig rc;
    rc.train = MakeTrainConfig(ctx.cfg);
    rc.num_seeds = ctx.cfg.retrain_seeds;
    rc.train_fraction = 1.0 - ctx.cfg.test_fraction;
    rc.split_seed = ctx.cfg.seed;
    return rc;
  };
  auto retrain_extra = [](const RetrainReport& r) {
    return json{{"original_accuracy", r.original_accuracy},
                {"per_seed_accuracy", r.per_seed_accuracy},
                {"per_seed_score", r.per_seed_score}};
  };
  if (name == "max_sensitivity" || name == "avg_sensitivity") {
    const bool max = name == "max_sensitivity";
    report = PerPoint(name, ids, [&](std::size_t id) {
      const auto s = Sensitivity(model, g, data.row(id), data, c);
      return max ? s.max_sensitivity : s.avg_sensitivity;
    }, w);
  } else if (name == "faithfulness") {
    report = PerPoint(name, ids, [&](std::size_t id) { return Faithfulness(model, g, data.row(id), c); }, w);
  } else if (name == "complexity") {
    report = PerPoint(name, ids, [&](std::size_t id) { return Complexity(g(data.row(id))); }, w);
  } else if (name == "identity") {
    report = DatasetLevel(name, IdentityScore(g, *ctx.test));
  } else if (name == "separability") {
    report = DatasetLevel(name, SeparabilityScore(g, *ctx.test, ctx.cfg.seed));
  } else if (name == "compatibility") {
    report = DatasetLevel(name, CompatibilityScore(model, g, *ctx.test, TargetKind::kProba));
  } else if (name == "conviction" || name == "conditional_conviction") {
    std::vector<Vector> support;
    std::vector<std::size_t> classes;
    for (std::size_t id : ctx.split.train) {
      support.push_back(g(data.row(id)));
      classes.push_back(model.PredictedClass(data.row(id)));
    }
    if (name == "conviction") {
      const DensityEstimator density = DensityEstimator::Fit(support);
      report = PerPoint(name, ids, [&](std::size_t id) { return ConvictionScore(g, data.row(id), density); }, w);
    } else {
      report = PerPoint(name, ids, [&](std::size_t id) {
        return ConditionalConvictionScore(model, g, data.row(id), support, classes);
      }, w);
    }
  } else if (name == "deletion") {
    report = PerPoint(name, ids, [&](std::size_t id) {
      return DeletionScore(model, g, data.row(id), k, ctx.baseline.values);
    }, w);
  } else if (name == "addition") {
    report = PerPoint(name, ids, [&](std::size_t id) {
      return AdditionScore(model, g, data.row(id), k, ctx.baseline.values);
    }, w);
  } else if (name == "roar") {
    const auto r = RoarScore(model, g, data, k, ctx.baseline.values, make_retrain());
    report = DatasetLevel(name, r.score, retrain_extra(r));
  } else if (name == "kar") {
    const auto r = KarScore(model, g, data, k, ctx.baseline.values, make_retrain());
    report = DatasetLevel(name, r.score, retrain_extra(r));
  } else {
    Fail(ErrorCode::kInvalidArgument, "unknown criterion '" + name + "'");
  }
  report.criterion = spec;
  report.config = ToJson(c);
  if (name == "deletion" || name == "addition" || name == "roar" || name == "kar") report.config["k"] = k;
  return report;
}

int CmdEvaluate(Context& ctx) {
  Prepare(ctx, true);
  const auto explainers = Explainers(ctx, {"shapley_wls"});
  std::vector<std::string> criteria = ctx.cfg.criteria;
  if (criteria.empty()) criteria = {"max_sensitivity", "avg_sensitivity", "faithfulness", "complexity"};
  const CriterionConfig base = MakeCriterionConfig(ctx);
  json reports = json::array();
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  for (const auto& ne : explainers) {
    ExplanationCache cache(MakeExplainer(*ctx.model, ne.config));
    const Explainer g = cache.AsExplainer();
    std::vector<std::string> cells;
    for (const auto& spec : criteria) {
      const CriterionReport r = EvaluateCriterion(ctx, spec, g, base);
      json doc = ToJson(r);
      doc["explainer"] = ne.name;
      reports.push_back(std::move(doc));
      cells.push_back(Cell(r));
    }
    rows.emplace_back(ne.name, std::move(cells));
  }
  const json doc = {{"config", ToJson(ctx.cfg)},
                    {"provenance", Provenance(ctx, explainers)},
                    {"reports", reports}};
  if (!ctx.cfg.out.empty()) WriteJson(ctx.cfg.out, doc);
  PrintTable(criteria, rows);
  return 0;
}

// --- aggregate -------------------------------------------------------------------------

int CmdAggregate(Context& ctx) {
  Prepare(ctx, true);
  const auto explainers = Explainers(ctx, {"grad", "integrated_gradients", "shapley_wls"});
  Require(explainers.size() >= 2, ErrorCode::kInvalidArgument, "aggregation needs at least two explainers");
  const std::string& method = ctx.cfg.method;
  const auto& ids = ctx.split.test;
  LoweringConfig lc;
  lc.step_size = ctx.cfg.step_size;
  lc.max_steps = ctx.cfg.max_steps;
  lc.region_iterations = ctx.cfg.iterations;
  lc.kept_points = ctx.cfg.kept_points;
  lc.line_grid = ctx.cfg.line_grid;

  AttributionDump dump;
  dump.feature_names = ctx.data->feature_names();
  dump.metadata["config"] = ToJson(ctx.cfg);
  json provenance = Provenance(ctx, explainers);
  provenance["method"] = method;
  const std::string agg_name = "agg:" + method;
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  json table = json::object();

  if (method == "convex") {
    Require(explainers.size() == 2, ErrorCode::kInvalidArgument, "convex aggregation takes exactly two explainers");
    const Explainer g1 = MakeExplainer(*ctx.model, explainers[0].config);
    const Explainer g2 = MakeExplainer(*ctx.model, explainers[1].config);
    const auto r = OptimizeConvexWeight(*ctx.model, g1, g2, *ctx.test, *ctx.data, MakeCriterionConfig(ctx));
    for (std::size_t i = 0; i < r.point_ids.size(); ++i) {
      dump.rows.push_back({r.aggregated[i], ctx.split.test[r.point_ids[i]], agg_name, ctx.cfg.unit_normalize});
    }
    provenance["weight"] = r.weight;
    provenance["is_vertex"] = r.is_vertex;
    provenance["points_used"] = r.points_used;
    table = {{explainers[0].name, r.objective_at_one}, {explainers[1].name, r.objective_at_zero},
             {agg_name, r.objective}};
    for (const auto& [label, v] : table.items()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4g", v.get<double>());
      rows.push_back({label, {buf}});
    }
    const json summary = {{"criterion", "avg_sensitivity"}, {"values", table}};
    dump.metadata["provenance"] = provenance;
    dump.metadata["summary"] = summary;
    if (!ctx.cfg.out.empty()) WriteDump(ctx.cfg.out, dump);
    if (!ctx.cfg.report.empty()) {
      WriteJson(ctx.cfg.report, {{"config", ToJson(ctx.cfg)}, {"provenance", provenance}, {"summary", summary}});
    }
    std::printf("w = %.6f%s\n", r.weight, r.is_vertex ? " (vertex)" : "");
    PrintTable({"avg_sensitivity"}, rows);
    return 0;
  }

  Require(method == "mean" || method == "median" || method == "descent" || method == "region",
          ErrorCode::kInvalidArgument, "unknown aggregation method '" + method + "'");
  const auto values = ExplainAll(*ctx.model, explainers, *ctx.data, ids, ctx.workers);
  std::vector<std::optional<Vector>> aggregated(ids.size());
  std::vector<std::exception_ptr> errors(ids.size());
  ParallelFor(ids.size(), [&](std::size_t i) {
    try {
      const ExplanationSet set(values[i]);
      if (method == "mean") {
        aggregated[i] = AggregateMean(set);
      } else if (method == "median") {
        aggregated[i] = AggregateMedian(set);
      } else if (method == "descent") {
        const auto r = LowerComplexityDescent(set, lc);
        double best_member = std::numeric_limits<double>::infinity();
        for (const auto& g : set.members()) best_member = std::min(best_member, Complexity(g));
        Require(r.complexity <= best_member + 1e-9, ErrorCode::kInvalidArgument,
                "descent returned a point more complex than its best member");
        aggregated[i] = r.explanation;
      } else {
        aggregated[i] = LowerComplexityRegion(set, lc).explanation;
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }, ctx.workers);

  std::vector<CriterionReport> member_reports(explainers.size());
  CriterionReport agg_report;
  agg_report.criterion = "complexity";
  for (auto& r : member_reports) r.criterion = "complexity";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kZeroAttribution) throw;
        agg_report.skipped.emplace_back(ids[i], ErrorCodeName(e.code()));
        for (auto& r : member_reports) r.skipped.emplace_back(ids[i], ErrorCodeName(e.code()));
        continue;
      }
    }
    for (std::size_t e = 0; e < explainers.size(); ++e) {
      member_reports[e].per_point.emplace_back(ids[i], Complexity(values[i][e]));
    }
    if (IsZero(*aggregated[i])) {
      agg_report.skipped.emplace_back(ids[i], "ZeroAttribution");
    } else {
      agg_report.per_point.emplace_back(ids[i], Complexity(*aggregated[i]));
    }
    dump.rows.push_back({*aggregated[i], ids[i], agg_name, true});
  }
  for (std::size_t e = 0; e < explainers.size(); ++e) {
    member_reports[e].Finalize();
    table[explainers[e].name] = ToJson(member_reports[e])["summary"];
    rows.push_back({explainers[e].name, {Cell(member_reports[e])}});
  }
  agg_report.Finalize();
  table[agg_name] = ToJson(agg_report)["summary"];
  rows.push_back({agg_name, {Cell(agg_report)}});
  dump.metadata["provenance"] = provenance;
  dump.metadata["summary"] = {{"criterion", "complexity"}, {"values", table}};
  if (!ctx.cfg.out.empty()) WriteDump(ctx.cfg.out, dump);
  if (!ctx.cfg.report.empty()) {
    WriteJson(ctx.cfg.report, {{"config", ToJson(ctx.cfg)}, {"provenance", provenance}, {"summary", table}});
  }
  PrintTable({"complexity"}, rows);
  return 0;
}

// --- ava ------------------------------------------------------------------------------

int CmdAva(Context& ctx) {
  Prepare(ctx, true);
  const auto explainers = Explainers(ctx, {"shapley_wls"});
  Require(explainers.size() == 1, ErrorCode::kInvalidArgument, "ava takes a single Shapley backend");
  AvaConfig ac;
  ac.k = ctx.cfg.k > 0 ? ctx.cfg.k : 5;
  ac.input_metric = ParseNorm(ctx.cfg.rho);
  ac.backend = explainers[0].config;
  ac.normalize_weights = ctx.cfg.normalize_weights;
  ac.cache = ctx.cfg.cache;
  Require(ctx.cfg.ava_pool == "dataset" || ctx.cfg.ava_pool == "train", ErrorCode::kInvalidArgument,
          "ava pool must be 'dataset' or 'train'");
  // The default pool is the same dataset the sensitivity neighborhoods draw from.
  const bool train_pool = ctx.cfg.ava_pool == "train";
  const AvaExplainer ava(*ctx.model, train_pool ? *ctx.train : *ctx.data, ac);
  ExplanationCache shap_cache(MakeExplainer(*ctx.model, ac.backend));
  ExplanationCache ava_cache(ava.AsExplainer());
  const Explainer shap = shap_cache.AsExplainer();
  const Explainer ava_g = ava_cache.AsExplainer();
  const CriterionConfig cc = MakeCriterionConfig(ctx);
  const auto& ids = ctx.split.test;

  std::vector<AvaResult> results(ids.size());
  ParallelFor(ids.size(), [&](std::size_t i) { results[i] = ava.Explain(ctx.data->row(ids[i])); },
              ctx.workers);

  const std::vector<std::string> criteria = {"avg_sensitivity", "max_sensitivity", "complexity"};
  json reports = json::array();
  json table = json::object();
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  const std::vector<std::pair<std::string, const Explainer*>> methods = {{explainers[0].name, &shap},
                                                                         {ava.name(), &ava_g}};
  for (const auto& [label, g] : methods) {
    std::vector<std::string> cells;
    for (const auto& crit : criteria) {
      const CriterionReport r = EvaluateCriterion(ctx, crit, *g, cc);
      json doc = ToJson(r);
      doc["explainer"] = label;
      table[label][crit] = doc["summary"];
      reports.push_back(std::move(doc));
      cells.push_back(Cell(r));
    }
    rows.emplace_back(label, std::move(cells));
  }

  json neighbors = json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    json rowsj = json::array(), dists = json::array();
    for (const auto& nb : results[i].neighbors) {
      rowsj.push_back(train_pool ? ctx.split.train[nb.row] : nb.row);
      dists.push_back(nb.distance);
    }
    neighbors.push_back({{"input_id", ids[i]}, {"neighbors", rowsj}, {"distances", dists},
                         {"weights", results[i].weights}});
  }
  json provenance = Provenance(ctx, explainers);
  provenance["ava"] = {{"k", ac.k}, {"input_metric", NormName(ac.input_metric)},
                       {"normalize_weights", ac.normalize_weights}, {"pool", ctx.cfg.ava_pool},
                       {"neighbors", neighbors}};

  if (!ctx.cfg.dump.empty()) {
    AttributionDump dump;
    dump.feature_names = ctx.data->feature_names();
    dump.metadata["config"] = ToJson(ctx.cfg);
    dump.metadata["provenance"] = provenance;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      dump.rows.push_back({shap(ctx.data->row(ids[i])), ids[i], explainers[0].name, false});
      dump.rows.push_back({results[i].values, ids[i], ava.name(), false});
    }
    WriteDump(ctx.cfg.dump, dump);
  }
  if (!ctx.cfg.out.empty()) {
    WriteJson(ctx.cfg.out, {{"config", ToJson(ctx.cfg)},
                            {"provenance", provenance},
                            {"summary", table},
                            {"reports", reports}});
  }
  PrintTable({"mu_A", "mu_M", "mu_C"}, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature attribution evaluation and aggregation"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  RunConfig flags;
  std::string config_path;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> overrides;
  auto bind = [&](auto* opt, auto member) {
    overrides.emplace_back(opt, [member, &flags](RunConfig& c) { c.*member = flags.*member; });
    return opt;
  };
  bind(app.add_option("--data", flags.data, "CSV file with a header row"), &RunConfig::data);
  bind(app.add_option("--label-col", flags.label_col, "name of the label column (default: label)"),
       &RunConfig::label_col);
  bind(app.add_option("--model", flags.model, "model file; omitted: train on the fly"), &RunConfig::model);
  bind(app.add_option("--explainer", flags.explainers, "explainer spec name:key=val,... (repeatable)"),
       &RunConfig::explainers);
  bind(app.add_option("--criterion", flags.criteria, "criterion spec name:key=val,... (repeatable)"),
       &RunConfig::criteria);
  bind(app.add_option("--baseline", flags.baseline, "zero or mean")->check(CLI::IsMember({"zero", "mean"})),
       &RunConfig::baseline);
  bind(app.add_option("--radius", flags.radius, "neighborhood radius"), &RunConfig::radius);
  bind(app.add_option("--rho", flags.rho, "input metric")->check(CLI::IsMember({"linf", "l2", "l1"})),
       &RunConfig::rho);
  bind(app.add_option("--metric-d", flags.metric_d, "explanation distance")
           ->check(CLI::IsMember({"l2", "l1", "cos"})),
       &RunConfig::metric_d);
  bind(app.add_option("--subset-size", flags.subset_size, "faithfulness subset size (0: d/4)"),
       &RunConfig::subset_size);
  bind(app.add_option("--num-subsets", flags.num_subsets, "faithfulness subsets per point"),
       &RunConfig::num_subsets);
  bind(app.add_option("--k", flags.k, "neighbors for ava; features for deletion/addition/roar/kar"),
       &RunConfig::k);
  bind(app.add_option("--method", flags.method, "aggregation method")
           ->check(CLI::IsMember({"mean", "median", "convex", "descent", "region"})),
       &RunConfig::method);
  bind(app.add_option("--iterations", flags.iterations, "region shrinking iterations"),
       &RunConfig::iterations);
  bind(app.add_option("--seed", flags.seed, "global seed"), &RunConfig::seed);
  bind(app.add_option("--test-fraction", flags.test_fraction, "held-out fraction (default 0.2)"),
       &RunConfig::test_fraction);
  bind(app.add_option("--epochs", flags.epochs, "training epochs"), &RunConfig::epochs);
  bind(app.add_option("--out", flags.out, "output file"), &RunConfig::out);
  bind(app.add_option("--report", flags.report, "aggregate: extra JSON summary file"), &RunConfig::report);
  bind(app.add_option("--ava-pool", flags.ava_pool, "ava neighbor pool: dataset or train")
           ->check(CLI::IsMember({"dataset", "train"})),
       &RunConfig::ava_pool);
  bind(app.add_option("--dump", flags.dump, "ava: attribution dump file"), &RunConfig::dump);
  app.add_option("--threads", flags.threads, "worker threads (0: all cores)");
  app.add_option("--config", config_path, "JSON config; flags override its values");

  for (const char* name : {"train", "explain", "evaluate", "aggregate", "ava"}) {
    app.add_subcommand(name);
  }
  app.get_subcommand("train")->description("train a classifier and save it");
  app.get_subcommand("explain")->description("write attributions for the held-out rows");
  app.get_subcommand("evaluate")->description("score explainers under the selected criteria");
  app.get_subcommand("aggregate")->description("combine several explainers per input");
  app.get_subcommand("ava")->description("nearest-neighbor Shapley aggregate versus plain Shapley");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Context ctx;
  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      json doc;
      try {
        doc = json::parse(ReadFile(config_path));
      } catch (const json::exception& e) {
        Fail(ErrorCode::kParseError, "config file: " + std::string(e.what()));
      }
      try {
        ApplyJson(cfg, doc);
      } catch (const json::exception& e) {
        Fail(ErrorCode::kParseError, "config file: " + std::string(e.what()));
      }
    }
    for (auto& [opt, apply] : overrides) {
      if (opt->count() > 0) apply(cfg);
    }
    cfg.subcommand = app.get_subcommands().front()->get_name();
    ctx.cfg = cfg;
    ctx.workers = flags.threads > 0 ? flags.threads : DefaultWorkers();
    if (cfg.subcommand == "train") return CmdTrain(ctx);
    if (cfg.subcommand == "explain") return CmdExplain(ctx);
    if (cfg.subcommand == "evaluate") return CmdEvaluate(ctx);
    if (cfg.subcommand == "aggregate") return CmdAggregate(ctx);
    return CmdAva(ctx);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
