#include <gtest/gtest.h>

#include "mulann/config.hpp"
#include "mulann/experiments.hpp"

using namespace mulann;

namespace {

const char* kSmall = R"(
[data]
samples_per_class = 30
[train]
steps = 60
batch_size = 16
[experiment]
seeds = 2
seed = 3
)";

ExperimentConfig small(const std::string& extra = "") { return config_from_string(std::string(kSmall) + extra); }

std::vector<std::vector<std::string>> rows_of_kind(const CsvTable& t, const std::string& kind) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : t.rows)
    if (r[0] == kind) out.push_back(r);
  return out;
}

void expect_roundtrip(const CsvTable& t) {
  const CsvTable back = parse_csv(t.str());
  EXPECT_EQ(back.schema, t.schema);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
}

// ---- config ----

TEST(Config, EmptyTextGivesDefaults) {
  const ExperimentConfig c = config_from_string("");
  EXPECT_EQ(c.train.method, Method::mulann);
  EXPECT_EQ(c.train.lr, 0.01);
  EXPECT_EQ(c.train.lambda, 0.8);
  EXPECT_EQ(c.train.zeta, 0.8);
  EXPECT_EQ(c.train.p, 0.5);
  EXPECT_EQ(c.experiment.seeds, 5u);
  EXPECT_EQ(c.fuzz.instances, 1000u);
  EXPECT_EQ(c.fuzz.dims, 1u);
  EXPECT_EQ(c.data.generator, "synthetic");
}

TEST(Config, ParsesEverySection) {
  const ExperimentConfig c = config_from_string(R"(
[data]
classes = 5
[split]
setting = NFT
[asymmetry]
case = 2
beta = 1, 2
[train]
method = mada
steps = 7
[experiment]
methods = dann, mulann
p_grid = 0, 0.25
mulann_p = 0.4
[bounds]
instances = 12
dims = 2
[proxy]
patience = 3
)");
  EXPECT_EQ(c.data.synth.classes, 5u);
  EXPECT_EQ(c.split.setting, EvalSetting::nft);
  EXPECT_EQ(c.asymmetry.case_id, 2);
  EXPECT_EQ(c.asymmetry.roles.beta, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(c.train.method, Method::mada);
  EXPECT_EQ(c.train.steps, 7u);
  EXPECT_EQ(c.experiment.methods, (std::vector<Method>{Method::dann, Method::mulann}));
  EXPECT_EQ(c.experiment.p_grid, (std::vector<double>{0, 0.25}));
  EXPECT_EQ(c.experiment.mulann_p, 0.4);
  EXPECT_EQ(c.fuzz.instances, 12u);
  EXPECT_EQ(c.fuzz.dims, 2u);
  EXPECT_EQ(c.proxy.patience, 3u);
  EXPECT_TRUE(config_from_string("[train]\ntune = grid\n").tune_grid);
}

std::string config_error_field(const std::string& text) {
  try {
    config_from_string(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

TEST(Config, ErrorsCarryFieldPath) {
  EXPECT_EQ(config_error_field("[train]\nlearning_rate = 1\n"), "train.learning_rate");
  EXPECT_EQ(config_error_field("[nonsense]\nx = 1\n"), "nonsense.x");
  EXPECT_EQ(config_error_field("[train]\nlr = fast\n"), "train.lr");
  EXPECT_EQ(config_error_field("[train]\nsteps = 5x\n"), "train.steps");
  EXPECT_EQ(config_error_field("[train]\nsteps = -5\n"), "train.steps");
  EXPECT_EQ(config_error_field("[train]\nmethod = svm\n"), "train.method");
  EXPECT_EQ(config_error_field("[train]\nlr = -1\n"), "train.lr");
  EXPECT_EQ(config_error_field("[train]\np = 1.5\n"), "train.p");
  EXPECT_EQ(config_error_field("[experiment]\np_grid = 0, 2\n"), "experiment.p_grid");
  EXPECT_EQ(config_error_field("[experiment]\ncases = 1, 5\n"), "experiment.cases");
  EXPECT_EQ(config_error_field("[bounds]\ndims = 4\n"), "bounds.dims");
  EXPECT_EQ(config_error_field("[data]\ngenerator = idx\n"), "data.images");
  EXPECT_EQ(config_error_field("[train]\ntune = random\n"), "train.tune");
  EXPECT_EQ(config_error_field("[data\n"), "config");
  EXPECT_THROW(load_config("/nonexistent/mulann.ini"), ConfigError);
}

// ---- CSV ----

TEST(Csv, RoundtripAndRaggedRows) {
  CsvTable t;
  t.schema = "x.v1";
  t.header = {"a", "b", "c"};
  t.add({"1", "", "0.10000000000000001"});
  t.add({"", "", ""});
  expect_roundtrip(t);
  EXPECT_THROW(t.add({"1"}), std::logic_error);
  EXPECT_THROW(t.add({"1", "a,b", "2"}), std::logic_error);
  EXPECT_THROW(parse_csv("a,b\n1\n"), std::runtime_error);
  EXPECT_EQ(fmt_double(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(fmt_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Stats, MeanAndSampleStdev) {
  const auto s = mean_std({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.stdev, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(mean_std({7}).stdev, 0.0);
}

// ---- commands ----

TEST(Train, PerSeedAndAggregateRows) {
  ExperimentConfig c = small();
  c.experiment.seeds = 5;
  const CsvTable t = cmd_train(c, {}).table;
  expect_roundtrip(t);
  const auto agg = rows_of_kind(t, "aggregate");
  const auto seeds = rows_of_kind(t, "seed");
  // The first domain is fully labeled; the second has both class groups.
  EXPECT_EQ(agg.size(), 3u);
  EXPECT_EQ(seeds.size(), 5u * agg.size());
  std::set<std::string> seen;
  for (const auto& r : seeds) seen.insert(r[1]);
  EXPECT_EQ(seen, (std::set<std::string>{"3", "4", "5", "6", "7"}));
  for (const auto& r : agg) {
    std::vector<double> v;
    for (const auto& s : seeds)
      if (s[3] == r[3] && s[4] == r[4]) v.push_back(std::stod(s[7]));
    ASSERT_EQ(v.size(), 5u);
    EXPECT_NEAR(std::stod(r[7]), mean_std(v).mean, 1e-15);
    EXPECT_NEAR(std::stod(r[8]), mean_std(v).stdev, 1e-15);
  }
}

TEST(Train, DannEqualsMulannWithZeroP) {
  ExperimentConfig c = small();
  c.train.method = Method::dann;
  const CsvTable a = cmd_train(c, {}).table;
  c.train.method = Method::mulann;
  c.train.p = 0.0;
  const CsvTable b = cmd_train(c, {}).table;
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    auto ra = a.rows[i], rb = b.rows[i];
    EXPECT_EQ(ra[2], "dann");
    EXPECT_EQ(rb[2], "mulann");
    ra[2] = rb[2] = "";
    EXPECT_EQ(ra, rb);
  }
}

TEST(Train, WritesCheckpointsThatEvaluateIdentically) {
  const auto dir = std::filesystem::temp_directory_path() / "mulann_harness_ckpt";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = small();
  c.experiment.seeds = 1;
  const CsvTable t = cmd_train(c, {dir}).table;
  ASSERT_TRUE(std::filesystem::exists(dir / "mulann_seed3.ckpt"));
  ASSERT_TRUE(std::filesystem::exists(dir / "mulann_seed3_trace.csv"));
  const CsvTable e = cmd_evaluate(c, (dir / "mulann_seed3.ckpt").string()).table;
  const auto trained = rows_of_kind(t, "seed"), scored = rows_of_kind(e, "seed");
  ASSERT_EQ(trained.size(), scored.size());
  for (std::size_t i = 0; i < trained.size(); ++i)
    for (std::size_t k : {3, 4, 5, 6, 7}) EXPECT_EQ(trained[i][k], scored[i][k]);
  const CsvTable trace = parse_csv([&] {
    std::ifstream f(dir / "mulann_seed3_trace.csv");
    return std::string(std::istreambuf_iterator<char>(f), {});
  }());
  EXPECT_EQ(trace.rows.size(), 60u);
  std::filesystem::remove_all(dir);
}

TEST(Train, EvaluateRejectsMismatchedCheckpoint) {
  const auto dir = std::filesystem::temp_directory_path() / "mulann_harness_mismatch";
  ExperimentConfig c = small();
  c.experiment.seeds = 1;
  cmd_train(c, {dir});
  ExperimentConfig other = small();
  other.data.synth.classes = 3;
  EXPECT_THROW(cmd_evaluate(other, (dir / "mulann_seed3.ckpt").string()), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST(GridSearch, CoversGridAndSelectsFirstBest) {
  ExperimentConfig c = small();
  TrainConfig best;
  const CsvTable g = grid_search(c, best);
  expect_roundtrip(g);
  EXPECT_EQ(g.rows.size(), 16u);
  std::set<std::vector<std::string>> points;
  double top = -1;
  std::size_t first_top = 0, selected = 0, n_selected = 0;
  for (std::size_t i = 0; i < g.rows.size(); ++i) {
    const auto& r = g.rows[i];
    points.insert({r[0], r[1], r[2], r[3]});
    EXPECT_EQ(r[5], g.rows[0][5]);
    const double acc = std::stod(r[6]);
    EXPECT_EQ(acc, std::stod(r[4]) / std::stod(r[5]));
    if (acc > top) top = acc, first_top = i;
    if (r[7] == "1") selected = i, ++n_selected;
  }
  EXPECT_EQ(points.size(), 16u);
  EXPECT_EQ(n_selected, 1u);
  EXPECT_EQ(selected, first_top);
  EXPECT_EQ(fmt_double(best.lambda), g.rows[selected][0]);
  EXPECT_EQ(fmt_double(best.zeta), g.rows[selected][1]);
  EXPECT_EQ(schedule_name(best.lr_schedule), g.rows[selected][2]);
  EXPECT_EQ(schedule_name(best.lambda_schedule), g.rows[selected][3]);
  EXPECT_GT(std::stoul(g.rows[0][5]), 0u);

  c.train.method = Method::dann;
  EXPECT_EQ(grid_search(c, best).rows.size(), 8u);
}

TEST(GridSearch, TrainUsesSelectedHyperparameters) {
  const auto dir = std::filesystem::temp_directory_path() / "mulann_harness_grid";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = small();
  c.tune_grid = true;
  c.experiment.seeds = 1;
  const CsvTable tuned = cmd_train(c, {dir}).table;
  ASSERT_TRUE(std::filesystem::exists(dir / "grid.csv"));
  TrainConfig best;
  grid_search(c, best);
  ExperimentConfig manual = c;
  manual.tune_grid = false;
  manual.train.lambda = best.lambda;
  manual.train.zeta = best.zeta;
  manual.train.lr_schedule = best.lr_schedule;
  manual.train.lambda_schedule = best.lambda_schedule;
  EXPECT_EQ(cmd_train(manual, {}).table.str(), tuned.str());
  std::filesystem::remove_all(dir);
}

TEST(Commands, RerunIsByteIdentical) {
  ExperimentConfig c = small("[asymmetry]\ncase = 1\n");
  c.experiment.p_grid = {0.0, 0.5};
  c.experiment.p_star_grid = {0.5};
  c.experiment.cases = {1, 3};
  c.experiment.methods = {Method::dann, Method::mulann};
  c.fuzz.instances = 20;
  EXPECT_EQ(cmd_train(c, {}).table.str(), cmd_train(c, {}).table.str());
  EXPECT_EQ(cmd_sweep_p(c).table.str(), cmd_sweep_p(c).table.str());
  EXPECT_EQ(cmd_asymmetry(c).table.str(), cmd_asymmetry(c).table.str());
  EXPECT_EQ(cmd_bounds(c).table.str(), cmd_bounds(c).table.str());
  EXPECT_EQ(cmd_divergence(c, std::nullopt).table.str(), cmd_divergence(c, std::nullopt).table.str());
}

TEST(SweepP, GridShapeAndValidation) {
  ExperimentConfig c = small("[asymmetry]\ncase = 1\n");
  c.experiment.seeds = 1;
  c.experiment.p_grid = {0.0, 0.5};
  c.experiment.p_star_grid = {0.5};
  const CsvTable t = cmd_sweep_p(c).table;
  expect_roundtrip(t);
  EXPECT_EQ(rows_of_kind(t, "seed").size(), 2u * 3u);
  EXPECT_EQ(rows_of_kind(t, "aggregate").size(), 2u * 3u);
  c.experiment.p_grid = {0.0, 1.5};
  EXPECT_THROW(cmd_sweep_p(c), ConfigError);
}

TEST(SweepP, ZeroColumnMatchesDannTraining) {
  ExperimentConfig c = small("[asymmetry]\ncase = 1\n");
  c.experiment.seeds = 1;
  c.experiment.p_grid = {0.0};
  c.experiment.p_star_grid = {0.5};
  c.asymmetry.target_p_star = 0.5;
  const CsvTable sweep = cmd_sweep_p(c).table;
  const PreparedData data = prepare_data(c, 3, 1, 0.5);
  TrainResult r = train(run_config(c, Method::dann, 3, 0.0), data.datasets);
  const double dom1 = class_accuracy(r.net, data.datasets.front(), c.split.setting);
  EXPECT_EQ(sweep.rows[0][5], "dom1_acc");
  EXPECT_EQ(sweep.rows[0][6], fmt_double(dom1));
}

TEST(Asymmetry, RowsPerMethodCaseSeed) {
  ExperimentConfig c = small();
  c.experiment.seeds = 1;
  c.experiment.methods = {Method::dann, Method::mada};
  c.experiment.cases = {1, 4};
  const CsvTable t = cmd_asymmetry(c).table;
  expect_roundtrip(t);
  EXPECT_EQ(rows_of_kind(t, "seed").size(), 4u);
  EXPECT_EQ(rows_of_kind(t, "aggregate").size(), 4u);
  for (const auto& r : t.rows) EXPECT_EQ(r[5], "0");
  c.experiment.cases = {0};
  EXPECT_THROW(cmd_asymmetry(c), ConfigError);
}

TEST(Bounds, CleanFuzzExitsZero) {
  ExperimentConfig c = small();
  c.fuzz.instances = 30;
  const auto out = cmd_bounds(c);
  EXPECT_EQ(out.exit_code, kExitOk);
  expect_roundtrip(out.table);
  for (const auto& r : out.table.rows) {
    EXPECT_EQ(r[7], "1");
    EXPECT_GE(std::stod(r[6]), -1e-12);
  }
}

TEST(Bounds, ViolationSetsExitCode) {
  // Several axes let the tightness comparison flip (see the bounds tests).
  ExperimentConfig c = small();
  c.experiment.seed = 0;
  c.fuzz.instances = 1000;
  c.fuzz.dims = 2;
  EXPECT_EQ(cmd_bounds(c).exit_code, kExitBoundViolation);
}

TEST(Divergence, OneRowPerPairAndSpace) {
  ExperimentConfig c = small();
  c.data.synth.domains = 3;
  c.experiment.seeds = 1;
  const CsvTable t = cmd_divergence(c, std::nullopt).table;
  expect_roundtrip(t);
  const auto seeds = rows_of_kind(t, "seed");
  EXPECT_EQ(seeds.size(), 3u * 3u);
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& r : seeds) {
    pairs.insert({r[2], r[3]});
    const double d = std::stod(r[5]);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
  }
  EXPECT_EQ(pairs, (std::set<std::pair<std::string, std::string>>{{"0", "1"}, {"0", "2"}, {"1", "2"}}));
}

}  // namespace
