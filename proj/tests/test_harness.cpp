#include <gtest/gtest.h>

#include <map>
#include <sstream>
#include <tuple>
#include <vector>

#include "errcomp/harness.hpp"

using namespace errcomp;

namespace {

ExperimentConfig tiny(DriftKind kind = DriftKind::abrupt_concept) {
  ExperimentConfig c;
  c.seed = 5;
  c.data.scenario.kind = kind;
  c.data.scenario.n_slots = 4;
  c.data.scenario.flip_slot = 2;
  c.data.scenario.rows_per_slot = 600;
  c.data.scenario.train_rows = 3000;
  c.data.scenario.n_users = 200;
  c.data.scenario.n_items = 150;
  c.model.hidden = {16, 8};
  c.model.epochs = 1;
  c.memory.bits_per_hash = 8;
  c.memory.num_arrays = 8;
  c.methods = {Method::frozen, Method::incremental, Method::reloop2, Method::incremental_reloop2};
  return c;
}

const Prepared& shared_prep() {
  static const Prepared p = prepare(tiny());
  return p;
}

std::string csv_of(const ExperimentResult& r) {
  std::ostringstream s;
  write_results_csv(s, r);
  return s.str();
}

struct Recorder : ExperimentObserver {
  std::vector<std::tuple<std::size_t, Method, char>> events;
  void on_score(std::size_t t, Method m) override { events.emplace_back(t, m, 's'); }
  void on_reveal(std::size_t t, Method m) override { events.emplace_back(t, m, 'r'); }
  void on_update(std::size_t t, Method m) override { events.emplace_back(t, m, 'u'); }
};

}  // namespace

TEST(Harness, ColdStartEquivalence) {
  auto c = tiny(DriftKind::none);
  c.methods = {Method::frozen, Method::reloop2};
  const auto r = run_experiment(c);
  const auto& f = r.at(0, Method::frozen);
  const auto& m = r.at(0, Method::reloop2);
  EXPECT_EQ(f.auc, m.auc);
  EXPECT_EQ(f.gauc, m.gauc);
  EXPECT_EQ(f.logloss, m.logloss);
  EXPECT_EQ(m.fallbacks, m.rows);
}

TEST(Harness, LambdaZeroMatchesFrozen) {
  auto c = tiny();
  c.compensation.lambda = 0.0;
  c.methods = {Method::frozen, Method::reloop2};
  const auto r = run_methods(c, shared_prep());
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(fmt_double(r.at(t, Method::frozen).auc), fmt_double(r.at(t, Method::reloop2).auc));
    EXPECT_EQ(fmt_double(r.at(t, Method::frozen).gauc), fmt_double(r.at(t, Method::reloop2).gauc));
    EXPECT_EQ(fmt_double(r.at(t, Method::frozen).logloss), fmt_double(r.at(t, Method::reloop2).logloss));
  }
}

TEST(Harness, PhasesAreChronological) {
  Recorder rec;
  RunHooks hooks;
  hooks.observer = &rec;
  run_methods(tiny(), shared_prep(), hooks);
  std::map<Method, std::vector<std::pair<std::size_t, char>>> per;
  for (auto& [t, m, e] : rec.events) per[m].push_back({t, e});
  ASSERT_EQ(per.size(), 4u);
  for (auto& [m, ev] : per) {
    std::size_t slot = 0;
    char last = 0;
    for (auto& [t, e] : ev) {
      if (e == 's') {
        EXPECT_TRUE(last == 0 || last == 'r' || last == 'u');
        EXPECT_EQ(t, slot);
        ++slot;
      } else if (e == 'r') {
        EXPECT_EQ(last, 's');
        EXPECT_EQ(t + 1, slot);
      } else {
        EXPECT_EQ(last, 'r');
        EXPECT_TRUE(updates_model(m));
      }
      last = e;
    }
    EXPECT_EQ(slot, 4u);
  }
}

TEST(Harness, MethodsDoNotContaminateEachOther) {
  const auto all = run_methods(tiny(), shared_prep());
  for (Method m : tiny().methods) {
    auto c = tiny();
    c.methods = {m};
    const auto alone = run_methods(c, shared_prep());
    for (std::size_t t = 0; t < 4; ++t) {
      EXPECT_EQ(all.at(t, m).auc, alone.at(t, m).auc) << to_string(m);
      EXPECT_EQ(all.at(t, m).logloss, alone.at(t, m).logloss) << to_string(m);
    }
  }
}

TEST(Harness, FullRunDeterministic) {
  auto c = tiny();
  EXPECT_EQ(csv_of(run_experiment(c)), csv_of(run_experiment(c)));
}

TEST(Harness, ResultsCsvShape) {
  const auto csv = csv_of(run_methods(tiny(), shared_prep()));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "slot,method,auc,gauc,logloss");
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 4 * 4 + 4);
}

TEST(Harness, TraceHasOneLinePerScoredRow) {
  std::ostringstream trace;
  RunHooks hooks;
  hooks.trace = &trace;
  auto c = tiny();
  c.methods = {Method::reloop2};
  run_methods(c, shared_prep(), hooks);
  std::istringstream in(trace.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("y_err"));
    ++n;
  }
  EXPECT_EQ(n, 4 * 600);
}

TEST(Harness, OracleMemoryRuns) {
  auto c = tiny();
  c.memory.kind = MemoryKind::oracle;
  c.methods = {Method::frozen, Method::reloop2};
  const auto r = run_methods(c, shared_prep());
  EXPECT_EQ(r.at(0, Method::reloop2).auc, r.at(0, Method::frozen).auc);
  EXPECT_NE(r.at(1, Method::reloop2).auc, r.at(1, Method::frozen).auc);
}

TEST(Sweep, LambdaZeroRowIsBaseline) {
  const auto s = sweep(tiny(), SweepParam::lambda, {0.0, 0.5, 1.0}, &shared_prep());
  ASSERT_EQ(s.rows.size(), 3u);
  EXPECT_EQ(s.rows[0].auc, s.baseline.auc);
  EXPECT_EQ(s.rows[0].gauc, s.baseline.gauc);
  std::ostringstream out;
  write_sweep_csv(out, s);
  EXPECT_EQ(out.str().substr(0, 15), "value,gauc,auc\n");
}

TEST(Sweep, SingleValueEqualsDirectRun) {
  auto c = tiny();
  const auto s = sweep(c, SweepParam::K_arrays, {4.0}, &shared_prep());
  c.memory.num_arrays = 4;
  c.methods = {s.method};
  const auto direct = run_methods(c, shared_prep()).mean(s.method);
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_EQ(s.rows[0].auc, direct.auc);
  EXPECT_EQ(s.rows[0].gauc, direct.gauc);
}

TEST(Bench, FootprintConstantAndOracleBounded) {
  BenchOptions o;
  o.fills = {100, 5000};
  o.ops = 200;
  o.repeats = 1;
  o.oracle_capacity = 50;
  const auto r = bench(SrpParams{16, 8, 4, 1}, o);
  ASSERT_EQ(r.levels.size(), 2u);
  EXPECT_EQ(r.levels[0].accumulator_bytes, r.levels[1].accumulator_bytes);
  EXPECT_EQ(r.oracle_size_after_overfill, 50u);
  EXPECT_GT(r.write_ratio, 0.0);
}

TEST(Config, ParsesJsonAndEnvOverrides) {
  auto doc = nlohmann::json::parse(R"({
    "seed": 3,
    "data": {"scenario": {"kind": "label", "n_slots": 2, "rows_per_slot": 100, "train_rows": 100,
                          "slot_base_rates": [0.2, 0.4]}},
    "memory": {"bits_per_hash": 10, "num_arrays": 6, "refresh": "every_n_slots"},
    "compensation": {"lambda": 0.3},
    "methods": ["frozen", "incremental+reloop2"]
  })");
  const std::map<std::string, std::string> env{{"ERRCOMP_COMPENSATION_LAMBDA", "0.9"},
                                               {"ERRCOMP_MEMORY_NUM_ARRAYS", "12"},
                                               {"ERRCOMP_SEED", "8"}};
  std::vector<std::string> names;
  for (auto& [k, v] : env) names.push_back(k);
  apply_env_overrides(doc, [&](const char* n) { return env.at(n).c_str(); }, names);
  const auto c = config_from_json(doc);
  EXPECT_EQ(c.compensation.lambda, 0.9);
  EXPECT_EQ(c.memory.num_arrays, 12);
  EXPECT_EQ(c.memory.bits_per_hash, 10);
  EXPECT_EQ(c.memory.refresh, RefreshPolicy::every_n_slots);
  EXPECT_EQ(c.seed, 8u);
  EXPECT_EQ(c.data.scenario.kind, DriftKind::label);
  EXPECT_EQ(c.methods, (std::vector<Method>{Method::frozen, Method::incremental_reloop2}));
}

TEST(Config, RejectsBadValues) {
  auto c = tiny();
  c.compensation.lambda = 2.0;
  EXPECT_THROW(c.validate(), InvalidParameter);
  c = tiny();
  c.memory.bits_per_hash = 40;
  EXPECT_THROW(c.validate(), InvalidParameter);
  EXPECT_THROW(method_from_string("bogus"), InvalidParameter);
}
