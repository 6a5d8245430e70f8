// Copyright 2026 The sdlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "sdlab/error.h"
#include "sdlab/harness.h"
#include "test_util.h"

namespace sdlab {
namespace {

// A world small enough to run in well under a second.
ExperimentConfig Tiny(Method method) {
  ExperimentConfig c;
  c.method = method;
  c.data_size = 60;
  c.test_count = 20;
  c.max_new_tokens = 16;
  c.target_corpus_size = 2000;
  c.generic_corpus_size = 300;
  c.user_pool_size = 200;
  c.epochs = 1;
  c.buffer_threshold = 8;
  c.seeds = {3, 4};
  return c;
}

TEST(Names, RoundTrip) {
  for (auto m : kAllMethods) EXPECT_EQ(ParseMethod(MethodName(m)), m);
  for (auto s : {Scenario::kInDomain, Scenario::kRelated, Scenario::kSynthetic}) {
    EXPECT_EQ(ParseScenario(ScenarioName(s)), s);
  }
  EXPECT_THROW(ParseMethod("online-SFT"), Error);
  EXPECT_THROW(ParseScenario("IV"), Error);
  EXPECT_TRUE(IsOnline(Method::kOnlineRkl));
  EXPECT_FALSE(MethodLoss(Method::kBaseline).has_value());
  EXPECT_EQ(MethodLoss(Method::kOfflineRkl), LossKind::kReverseKl);
}

TEST(Config, LearningRateDefaults) {
  ExperimentConfig c;
  c.method = Method::kOfflineFkl;
  EXPECT_EQ(c.EffectiveLearningRate(), 0.5);
  c.method = Method::kOnlineFkl;
  EXPECT_EQ(c.EffectiveLearningRate(), 0.05);
  EXPECT_EQ(c.MakeTrainConfig(1).epochs, 1);
  c.learning_rate = 1e-6;
  EXPECT_EQ(c.EffectiveLearningRate(), 1e-6);
  c.method = Method::kBaseline;
  EXPECT_EQ(c.EffectiveLearningRate(), 0.0);
}

TEST(Config, RunId) {
  ExperimentConfig c;
  c.method = Method::kOfflineFkl;
  EXPECT_EQ(c.RunId(), "I-offline-FKL-TOPIC-n2000-lr0.5");
  c.scenario = Scenario::kRelated;
  EXPECT_EQ(c.RunId(), "II-offline-FKL-TOPIC-n2000-lr0.5-shift0.3");
  c.tag = "x";
  EXPECT_EQ(c.RunId().rfind("x/", 0), 0u);
}

TEST(Config, Validation) {
  auto expect_config_error = [](const ExperimentConfig& c) {
    try {
      c.Validate();
      FAIL() << c.RunId();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig);
    }
  };
  ExperimentConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.seeds.clear();
  expect_config_error(c);
  c = {};
  c.domain = "LEGAL";
  expect_config_error(c);
  c = {};
  c.k = 0;
  expect_config_error(c);
  c = {};
  c.scenario = Scenario::kRelated;
  c.shift = 0.0;
  expect_config_error(c);
  c = {};
  c.vocab_size = 100;
  expect_config_error(c);
}

TEST(Config, JsonRoundTripAndStrictness) {
  ExperimentConfig c = Tiny(Method::kOfflineRkl);
  c.learning_rate = 0.25;
  c.scenario = Scenario::kSynthetic;
  c.domain = "SCRIPT";
  c.mode = VerificationMode::kGreedy;
  const auto back = ConfigFromJson(ConfigToJson(c));
  EXPECT_EQ(ConfigToJson(back), ConfigToJson(c));
  EXPECT_EQ(back.RunId(), c.RunId());
  EXPECT_EQ(back.seeds, c.seeds);

  const auto v = ConfigFromJson(R"({"method": "offline", "loss": "RKL", "seeds": [9]})");
  EXPECT_EQ(v.method, Method::kOfflineRkl);
  EXPECT_THROW(ConfigFromJson(R"({"methd": "SFT"})"), Error);
  EXPECT_THROW(ConfigFromJson(R"({"method": "online", "loss": "SFT"})"), Error);
  EXPECT_THROW(ConfigFromJson("{"), Error);
  EXPECT_THROW(ConfigFromJson(R"({"data_size": "many"})"), Error);
}

TEST(Config, LoadFile) {
  const auto path = testing::TempPath("cfg.json");
  std::ofstream(path) << R"({"method": "SFT", "data_size": 10})";
  EXPECT_EQ(LoadConfig(path).method, Method::kSft);
  EXPECT_THROW(LoadConfig(testing::TempPath("absent.json")), Error);
}

TEST(Run, OneRecordPerSeedAndDeterministic) {
  for (auto m : kAllMethods) {
    const auto c = Tiny(m);
    const auto a = sdlab::Run(c);
    ASSERT_EQ(a.size(), c.seeds.size());
    std::ostringstream sa, sb;
    WriteCsv(a, sa);
    WriteCsv(sdlab::Run(c, {.jobs = 2}), sb);
    EXPECT_EQ(sa.str(), sb.str()) << MethodName(m);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].seed, c.seeds[i]);
      EXPECT_EQ(a[i].run_id, c.RunId());
      EXPECT_GE(a[i].acceptance_rate, 0.0);
      EXPECT_LE(a[i].acceptance_rate, 1.0);
      EXPECT_GT(a[i].rounds, 0);
      EXPECT_EQ(a[i].wall_time_seconds, 0.0);
      EXPECT_EQ(std::isnan(a[i].train_loss_final), m == Method::kBaseline);
    }
  }
}

TEST(Run, ScenariosAndTargets) {
  for (auto s : {Scenario::kRelated, Scenario::kSynthetic}) {
    auto c = Tiny(Method::kOfflineFkl);
    c.scenario = s;
    EXPECT_EQ(sdlab::Run(c).size(), 2u);
  }
  auto c = Tiny(Method::kBaseline);
  c.target = TargetKind::kGeneric;
  const auto r = sdlab::Run(c);
  EXPECT_NE(r[0].run_id, Tiny(Method::kBaseline).RunId());
}

TEST(Run, WallTimeOnlyWhenAsked) {
  auto c = Tiny(Method::kSft);
  c.seeds = {1};
  c.record_wall_time = true;
  EXPECT_GT(sdlab::Run(c)[0].wall_time_seconds, 0.0);
}

TEST(RunAll, OrderedByConfigThenSeed) {
  std::vector<ExperimentConfig> configs = {Tiny(Method::kSft), Tiny(Method::kBaseline),
                                           Tiny(Method::kOfflineFkl)};
  const auto r = RunAll(configs, {.jobs = 3});
  ASSERT_EQ(r.size(), 6u);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(r[i].run_id, configs[i / 2].RunId());
    EXPECT_EQ(r[i].seed, configs[i / 2].seeds[i % 2]);
  }
}

TEST(Sweep, ExpandsAxes) {
  const auto base = Tiny(Method::kOfflineFkl);
  const std::vector<std::string> sizes = {"30", "60"};
  const auto by_size = ExpandSweep(base, SweepAxis::kDataSize, sizes);
  ASSERT_EQ(by_size.size(), 2u);
  EXPECT_EQ(by_size[1].data_size, 60);
  const std::vector<std::string> methods = {"baseline", "SFT", "online-RKL"};
  EXPECT_EQ(ExpandSweep(base, SweepAxis::kMethod, methods)[2].method,
            Method::kOnlineRkl);
  const std::vector<std::string> rates = {"0.05", "0.5"};
  EXPECT_EQ(*ExpandSweep(base, SweepAxis::kLearningRate, rates)[0].learning_rate, 0.05);
  EXPECT_EQ(ParseSweepAxis("lr"), SweepAxis::kLearningRate);
  EXPECT_EQ(ParseSweepAxis(SweepAxisName(SweepAxis::kDataSize)), SweepAxis::kDataSize);

  const std::vector<std::string> bad_size = {"12x"};
  EXPECT_THROW(ExpandSweep(base, SweepAxis::kDataSize, bad_size), Error);
  const std::vector<std::string> bad_method = {"DPO"};
  EXPECT_THROW(ExpandSweep(base, SweepAxis::kMethod, bad_method), Error);
  EXPECT_THROW(ExpandSweep(base, SweepAxis::kDataSize, {}), Error);
  EXPECT_THROW(ParseSweepAxis("epochs"), Error);

  const auto records = Sweep(base, SweepAxis::kDataSize, sizes);
  EXPECT_EQ(records.size(), 4u);
}

// Nested training prefixes: the test set does not move with data_size.
TEST(Sweep, FixedTestSetAcrossSizes) {
  auto a = Tiny(Method::kBaseline);
  auto b = a;
  b.data_size = 120;
  const auto ra = sdlab::Run(a), rb = sdlab::Run(b);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].acceptance_rate, rb[i].acceptance_rate);
  }
}

MetricsRecord SampleRecord(std::string method, int n, double lr, double acc,
                           std::uint64_t seed) {
  MetricsRecord r;
  r.run_id = "I-" + method + "-n" + std::to_string(n);
  r.scenario = "I";
  r.method = method;
  r.loss = "FKL";
  r.learning_rate = lr;
  r.data_size = n;
  r.seed = seed;
  r.acceptance_rate = acc;
  r.mean_accepted_per_round = 1.0 / 3.0;
  r.rounds = 17;
  r.train_loss_final = 0.1 + acc;
  return r;
}

void ExpectSame(const MetricsRecord& a, const MetricsRecord& b) {
  EXPECT_EQ(a.run_id, b.run_id);
  EXPECT_EQ(a.scenario, b.scenario);
  EXPECT_EQ(a.method, b.method);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.learning_rate, b.learning_rate);
  EXPECT_EQ(a.data_size, b.data_size);
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_EQ(a.acceptance_rate, b.acceptance_rate);
  EXPECT_EQ(a.mean_accepted_per_round, b.mean_accepted_per_round);
  EXPECT_EQ(a.rounds, b.rounds);
  if (std::isnan(a.train_loss_final)) {
    EXPECT_TRUE(std::isnan(b.train_loss_final));
  } else {
    EXPECT_EQ(a.train_loss_final, b.train_loss_final);
  }
  EXPECT_EQ(a.wall_time_seconds, b.wall_time_seconds);
}

TEST(Emit, CsvAndJsonRoundTripExactly) {
  std::vector<MetricsRecord> records = {
      SampleRecord("SFT", 500, 0.5, 0.1234567890123456789, 1),
      SampleRecord("offline-FKL", 2000, 2e-5, 1.0 / 7.0,
                   std::numeric_limits<std::uint64_t>::max())};
  records[1].train_loss_final = std::numeric_limits<double>::quiet_NaN();
  std::stringstream csv, json;
  WriteCsv(records, csv);
  EXPECT_EQ(csv.str().substr(0, kCsvHeader.size()), kCsvHeader);
  WriteJson(records, json);
  const auto from_csv = ReadCsv(csv);
  const auto from_json = ReadJson(json);
  ASSERT_EQ(from_csv.size(), 2u);
  ASSERT_EQ(from_json.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    ExpectSame(records[i], from_csv[i]);
    ExpectSame(records[i], from_json[i]);
  }
}

TEST(Emit, CorruptInputs) {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  std::stringstream bad_header("a,b\n");
  EXPECT_EQ(code_of([&] { ReadCsv(bad_header); }), ErrorCode::kCorruptFile);
  std::stringstream short_row(std::string(kCsvHeader) + "\nx,I\n");
  EXPECT_EQ(code_of([&] { ReadCsv(short_row); }), ErrorCode::kCorruptFile);
  std::stringstream not_array(R"({"run_id": 1})");
  EXPECT_EQ(code_of([&] { ReadJson(not_array); }), ErrorCode::kCorruptFile);
  auto r = SampleRecord("SFT", 1, 0.5, 0.5, 1);
  r.run_id = "a,b";
  std::ostringstream sink;
  EXPECT_THROW(WriteCsv(std::vector<MetricsRecord>{r}, sink), Error);
}

TEST(Emit, PlotDataOneSeriesPerMethod) {
  std::vector<MetricsRecord> records;
  for (std::string m : {"SFT", "offline-FKL"}) {
    for (int n : {2000, 500, 8000}) {
      for (std::uint64_t s = 1; s <= 3; ++s) {
        records.push_back(SampleRecord(m, n, 0.5, 0.1 * s + n / 1e5, s));
      }
    }
  }
  const auto dir = testing::TempPath("plot");
  std::filesystem::remove_all(dir);
  const auto files = Emit(records, EmitFormat::kPlotData, dir);
  ASSERT_EQ(files.size(), 2u);
  std::set<std::string> names;
  for (const auto& f : files) names.insert(f.filename().string());
  EXPECT_EQ(names, (std::set<std::string>{"SFT.dat", "offline-FKL.dat"}));
  std::ifstream in(dir / "SFT.dat");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "# data_size mean_acceptance standard_error n");
  int x, n;
  double mean, se;
  std::vector<int> xs;
  while (in >> x >> mean >> se >> n) {
    xs.push_back(x);
    EXPECT_EQ(n, 3);
    EXPECT_NEAR(mean, 0.2 + x / 1e5, 1e-12);
    EXPECT_NEAR(se, 0.1 / std::sqrt(3.0), 1e-12);
  }
  EXPECT_EQ(xs, (std::vector<int>{500, 2000, 8000}));
}

TEST(Emit, FilesAndFormats) {
  const auto dir = testing::TempPath("emit");
  std::filesystem::remove_all(dir);
  const std::vector<MetricsRecord> records = {SampleRecord("SFT", 1, 0.5, 0.5, 1)};
  EXPECT_EQ(Emit(records, EmitFormat::kCsv, dir)[0].filename(), "metrics.csv");
  EXPECT_EQ(Emit(records, EmitFormat::kJson, dir)[0].filename(), "metrics.json");
  EXPECT_EQ(ParseEmitFormat("plotdata"), EmitFormat::kPlotData);
  EXPECT_THROW(ParseEmitFormat("xml"), Error);
}

TEST(Summarize, MeanAndStandardError) {
  std::vector<MetricsRecord> records = {SampleRecord("SFT", 1, 0.5, 0.2, 1),
                                        SampleRecord("SFT", 1, 0.5, 0.4, 2),
                                        SampleRecord("baseline", 1, 0, 0.1, 1)};
  const auto g = Summarize(records);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].run_id, records[0].run_id);
  EXPECT_NEAR(g[0].mean, 0.3, 1e-15);
  EXPECT_NEAR(g[0].standard_error, 0.1, 1e-15);
  EXPECT_EQ(g[0].count, 2);
  EXPECT_EQ(g[1].standard_error, 0.0);
}

TEST(Reproduce, UnknownSuite) {
  EXPECT_THROW(Reproduce("everything", 1), Error);
}

}  // namespace
}  // namespace sdlab
