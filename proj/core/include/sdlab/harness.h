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

#ifndef SDLAB_HARNESS_H_
#define SDLAB_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sdlab/datagen.h"
#include "sdlab/distill.h"
#include "sdlab/specdec.h"

namespace sdlab {

enum class Scenario {
  kInDomain,  // I: held-out split of the in-domain query corpus.
  kRelated,   // II: queries from a shifted copy of the domain.
  kSynthetic, // III: queries and completions synthesized by the target.
};

enum class Method {
  kBaseline,
  kSft,
  kOfflineFkl,
  kOfflineRkl,
  kOnlineFkl,
  kOnlineRkl,
};

// Which model verifies during evaluation.
enum class TargetKind { kDomain, kGeneric };

std::string_view ScenarioName(Scenario scenario);
Scenario ParseScenario(std::string_view name);
std::string_view MethodName(Method method);
Method ParseMethod(std::string_view name);
bool IsOnline(Method method);
// Loss used by a method; nullopt for the baseline.
std::optional<LossKind> MethodLoss(Method method);
inline constexpr Method kAllMethods[] = {
    Method::kBaseline,   Method::kSft,       Method::kOfflineFkl,
    Method::kOfflineRkl, Method::kOnlineFkl, Method::kOnlineRkl};

struct ExperimentConfig {
  Scenario scenario = Scenario::kInDomain;
  Method method = Method::kBaseline;
  std::string domain = "TOPIC";
  int data_size = 2000;
  // Unset means the method's desk-scale default.
  std::optional<double> learning_rate;
  int epochs = 3;
  int batch_size = 8;
  int k = kDefaultProposalLength;
  VerificationMode mode = VerificationMode::kStochastic;
  Averaging averaging = Averaging::kMicro;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output;

  // Desk-scale world.
  int vocab_size = 40;
  int target_order = kDefaultTargetOrder;
  int draft_order = 2;
  int test_count = 200;
  int max_new_tokens = 64;
  int target_corpus_size = 50000;
  // Records per domain in the generic mixture.
  int generic_corpus_size = 4000;
  // Size of the in-domain query pool the train split is drawn from; grows to
  // data_size when smaller.
  int user_pool_size = 8000;
  double smoothing = kDefaultSmoothing;
  double shift = 0.3;
  int buffer_threshold = kDefaultBufferThreshold;
  TargetKind target = TargetKind::kDomain;
  bool record_wall_time = false;
  // Optional prefix for run ids.
  std::string tag;

  double EffectiveLearningRate() const;
  TrainConfig MakeTrainConfig(std::uint64_t seed) const;
  std::string RunId() const;
  // Throws kConfig on invalid combinations (for example online + SFT).
  void Validate() const;
};

ExperimentConfig ConfigFromJson(std::string_view json_text);
std::string ConfigToJson(const ExperimentConfig& config);
ExperimentConfig LoadConfig(const std::filesystem::path& path);

struct MetricsRecord {
  std::string run_id;
  std::string scenario;
  std::string method;
  std::string loss;
  double learning_rate = 0.0;
  int data_size = 0;
  std::uint64_t seed = 0;
  double acceptance_rate = 0.0;
  double mean_accepted_per_round = 0.0;
  std::int64_t rounds = 0;
  // NaN when nothing was trained.
  double train_loss_final = 0.0;
  // Zero unless the config asks for timing.
  double wall_time_seconds = 0.0;
};

struct RunOptions {
  int jobs = 1;
};

// One record per seed, in seed order.
std::vector<MetricsRecord> Run(const ExperimentConfig& config,
                               const RunOptions& options = {});

// Runs a batch of configs, sharing world construction across them. Records
// are ordered by (config index, seed index) regardless of completion order.
std::vector<MetricsRecord> RunAll(std::span<const ExperimentConfig> configs,
                                  const RunOptions& options = {});

enum class SweepAxis { kDataSize, kLearningRate, kMethod };
SweepAxis ParseSweepAxis(std::string_view name);
std::string_view SweepAxisName(SweepAxis axis);

std::vector<ExperimentConfig> ExpandSweep(const ExperimentConfig& base,
                                          SweepAxis axis,
                                          std::span<const std::string> values);
std::vector<MetricsRecord> Sweep(const ExperimentConfig& base, SweepAxis axis,
                                 std::span<const std::string> values,
                                 const RunOptions& options = {});

// Claims a suite checks. Informational verdicts are reported but do not
// affect the outcome.
struct Verdict {
  std::string claim;
  bool passed = false;
  bool asserted = true;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<MetricsRecord> records;
  std::vector<Verdict> verdicts;
  bool passed() const;
};

inline constexpr std::string_view kSuites[] = {
    "drop", "methods", "scaling", "lr", "synthetic", "related"};

struct ReproduceOptions {
  int jobs = 1;
  int num_seeds = 5;
};

// Builds everything from `master_seed` and evaluates the suite's claims.
SuiteReport Reproduce(std::string_view suite, std::uint64_t master_seed,
                      const ReproduceOptions& options = {});
void PrintReport(const SuiteReport& report, std::ostream& out);

// Mean and standard error of acceptance rates grouped by run id.
struct GroupSummary {
  std::string run_id;
  double mean = 0.0;
  double standard_error = 0.0;
  int count = 0;
};
std::vector<GroupSummary> Summarize(std::span<const MetricsRecord> records);

enum class EmitFormat { kCsv, kJson, kPlotData };
EmitFormat ParseEmitFormat(std::string_view name);

inline constexpr std::string_view kCsvHeader =
    "run_id,scenario,method,loss,learning_rate,data_size,seed,"
    "acceptance_rate,mean_accepted_per_round,rounds,train_loss_final,"
    "wall_time_seconds";

void WriteCsv(std::span<const MetricsRecord> records, std::ostream& out);
std::vector<MetricsRecord> ReadCsv(std::istream& in);
// A single JSON array of record objects.
void WriteJson(std::span<const MetricsRecord> records, std::ostream& out);
std::vector<MetricsRecord> ReadJson(std::istream& in);
// One whitespace-separated series file per method, keyed by the axis that
// varies across records (data_size, then learning_rate, else method).
// Returns the files written.
std::vector<std::filesystem::path> WritePlotData(
    std::span<const MetricsRecord> records, const std::filesystem::path& dir);

// Writes metrics.csv, metrics.json or the series files under `dir`.
std::vector<std::filesystem::path> Emit(std::span<const MetricsRecord> records,
                                        EmitFormat format,
                                        const std::filesystem::path& dir);

}  // namespace sdlab

#endif  // SDLAB_HARNESS_H_
