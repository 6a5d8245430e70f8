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

#include "sdlab/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sdlab/dataset_io.h"
#include "sdlab/error.h"

namespace sdlab {
namespace {

using nlohmann::json;

constexpr double kDeskOfflineRate = 0.5;
constexpr double kDeskOnlineRate = 0.05;

std::string FormatNumber(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

}  // namespace

std::string_view ScenarioName(Scenario scenario) {
  switch (scenario) {
    case Scenario::kInDomain:
      return "I";
    case Scenario::kRelated:
      return "II";
    case Scenario::kSynthetic:
      return "III";
  }
  return "?";
}

Scenario ParseScenario(std::string_view name) {
  if (name == "I" || name == "1") return Scenario::kInDomain;
  if (name == "II" || name == "2") return Scenario::kRelated;
  if (name == "III" || name == "3") return Scenario::kSynthetic;
  throw Error(ErrorCode::kConfig, "unknown scenario '" + std::string(name) + "'");
}

std::string_view MethodName(Method method) {
  switch (method) {
    case Method::kBaseline:
      return "baseline";
    case Method::kSft:
      return "SFT";
    case Method::kOfflineFkl:
      return "offline-FKL";
    case Method::kOfflineRkl:
      return "offline-RKL";
    case Method::kOnlineFkl:
      return "online-FKL";
    case Method::kOnlineRkl:
      return "online-RKL";
  }
  return "?";
}

Method ParseMethod(std::string_view name) {
  for (Method m : kAllMethods) {
    if (MethodName(m) == name) return m;
  }
  if (name == "online-SFT") {
    throw Error(ErrorCode::kConfig,
                "online distillation cannot use SFT: buffered records carry "
                "target distributions, not completions");
  }
  throw Error(ErrorCode::kConfig, "unknown method '" + std::string(name) + "'");
}

bool IsOnline(Method method) {
  return method == Method::kOnlineFkl || method == Method::kOnlineRkl;
}

std::optional<LossKind> MethodLoss(Method method) {
  switch (method) {
    case Method::kBaseline:
      return std::nullopt;
    case Method::kSft:
      return LossKind::kSft;
    case Method::kOfflineFkl:
    case Method::kOnlineFkl:
      return LossKind::kForwardKl;
    case Method::kOfflineRkl:
    case Method::kOnlineRkl:
      return LossKind::kReverseKl;
  }
  return std::nullopt;
}

double ExperimentConfig::EffectiveLearningRate() const {
  if (method == Method::kBaseline) return 0.0;
  if (learning_rate) return *learning_rate;
  return IsOnline(method) ? kDeskOnlineRate : kDeskOfflineRate;
}

TrainConfig ExperimentConfig::MakeTrainConfig(std::uint64_t seed) const {
  TrainConfig config;
  config.loss = MethodLoss(method).value_or(LossKind::kSft);
  config.learning_rate = EffectiveLearningRate();
  config.epochs = IsOnline(method) ? 1 : epochs;
  config.batch_size = batch_size;
  config.seed = seed;
  return config;
}

std::string ExperimentConfig::RunId() const {
  std::string id = tag.empty() ? "" : tag + "/";
  id += std::string(ScenarioName(scenario)) + "-" +
        std::string(MethodName(method)) + "-" + domain + "-n" +
        std::to_string(data_size) + "-lr" +
        FormatNumber(EffectiveLearningRate());
  if (scenario == Scenario::kRelated) id += "-shift" + FormatNumber(shift);
  if (target == TargetKind::kGeneric) id += "-generic-target";
  return id;
}

void ExperimentConfig::Validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kConfig, what);
  };
  ParseDomainKind(domain);
  if (data_size < 1) fail("data_size must be >= 1");
  if (k < 1) fail("k must be >= 1");
  if (max_new_tokens < 1) fail("max_new_tokens must be >= 1");
  if (test_count < 1) fail("test_count must be >= 1");
  if (seeds.empty()) fail("at least one seed is required");
  if (epochs < 1 || batch_size < 1) fail("epochs and batch_size must be >= 1");
  if (learning_rate && !(*learning_rate >= 0.0 && std::isfinite(*learning_rate))) {
    fail("learning_rate must be finite and >= 0");
  }
  if (target_order < 1 || target_order > SoftmaxTableLM::kMaxOrder ||
      draft_order < 1 || draft_order > SoftmaxTableLM::kMaxOrder) {
    fail("model orders must be in [1, 3]");
  }
  if (vocab_size < 28 || vocab_size > 64) fail("vocab_size must be in [28, 64]");
  if (target_corpus_size < 1 || generic_corpus_size < 1) {
    fail("corpus sizes must be >= 1");
  }
  if (scenario == Scenario::kRelated && !(shift > 0.0 && shift <= 1.0)) {
    fail("scenario II needs shift in (0, 1]");
  }
  if (buffer_threshold < 1) fail("buffer_threshold must be >= 1");
  if (!(smoothing >= 0.0)) fail("smoothing must be >= 0");
}

namespace {

std::string_view ModeName(VerificationMode mode) {
  return mode == VerificationMode::kGreedy ? "greedy" : "stochastic";
}

VerificationMode ParseMode(std::string_view name) {
  if (name == "stochastic") return VerificationMode::kStochastic;
  if (name == "greedy") return VerificationMode::kGreedy;
  throw Error(ErrorCode::kConfig, "unknown mode '" + std::string(name) + "'");
}

std::string_view AveragingName(Averaging a) {
  return a == Averaging::kMacro ? "macro" : "micro";
}

Averaging ParseAveraging(std::string_view name) {
  if (name == "micro") return Averaging::kMicro;
  if (name == "macro") return Averaging::kMacro;
  throw Error(ErrorCode::kConfig, "unknown averaging '" + std::string(name) + "'");
}

std::string_view TargetName(TargetKind t) {
  return t == TargetKind::kGeneric ? "generic" : "domain";
}

TargetKind ParseTarget(std::string_view name) {
  if (name == "domain") return TargetKind::kDomain;
  if (name == "generic") return TargetKind::kGeneric;
  throw Error(ErrorCode::kConfig, "unknown target '" + std::string(name) + "'");
}

}  // namespace

ExperimentConfig ConfigFromJson(std::string_view json_text) {
  ExperimentConfig c;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be an object");
  static const char* const kKnown[] = {
      "scenario",          "method",           "domain",
      "data_size",         "learning_rate",    "epochs",
      "batch_size",        "k",                "mode",
      "averaging",         "seeds",            "output",
      "vocab_size",        "target_order",     "draft_order",
      "test_count",        "max_new_tokens",   "target_corpus_size",
      "generic_corpus_size", "user_pool_size", "smoothing",
      "shift",             "buffer_threshold", "target",
      "record_wall_time",  "tag",              "loss"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) ==
        std::end(kKnown)) {
      throw Error(ErrorCode::kConfig, "unknown config field '" + key + "'");
    }
  }
  try {
    if (j.contains("scenario")) c.scenario = ParseScenario(j["scenario"].get<std::string>());
    if (j.contains("method")) {
      std::string method = j["method"].get<std::string>();
      // "online" / "offline" plus an explicit loss are accepted as well.
      if (j.contains("loss") && (method == "online" || method == "offline")) {
        method += "-" + j["loss"].get<std::string>();
      }
      c.method = ParseMethod(method);
    }
    if (j.contains("domain")) c.domain = j["domain"].get<std::string>();
    if (j.contains("data_size")) c.data_size = j["data_size"].get<int>();
    if (j.contains("learning_rate") && !j["learning_rate"].is_null()) {
      c.learning_rate = j["learning_rate"].get<double>();
    }
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("k")) c.k = j["k"].get<int>();
    if (j.contains("mode")) c.mode = ParseMode(j["mode"].get<std::string>());
    if (j.contains("averaging")) {
      c.averaging = ParseAveraging(j["averaging"].get<std::string>());
    }
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("output")) c.output = j["output"].get<std::string>();
    if (j.contains("vocab_size")) c.vocab_size = j["vocab_size"].get<int>();
    if (j.contains("target_order")) c.target_order = j["target_order"].get<int>();
    if (j.contains("draft_order")) c.draft_order = j["draft_order"].get<int>();
    if (j.contains("test_count")) c.test_count = j["test_count"].get<int>();
    if (j.contains("max_new_tokens")) c.max_new_tokens = j["max_new_tokens"].get<int>();
    if (j.contains("target_corpus_size")) {
      c.target_corpus_size = j["target_corpus_size"].get<int>();
    }
    if (j.contains("generic_corpus_size")) {
      c.generic_corpus_size = j["generic_corpus_size"].get<int>();
    }
    if (j.contains("user_pool_size")) c.user_pool_size = j["user_pool_size"].get<int>();
    if (j.contains("smoothing")) c.smoothing = j["smoothing"].get<double>();
    if (j.contains("shift")) c.shift = j["shift"].get<double>();
    if (j.contains("buffer_threshold")) {
      c.buffer_threshold = j["buffer_threshold"].get<int>();
    }
    if (j.contains("target")) c.target = ParseTarget(j["target"].get<std::string>());
    if (j.contains("record_wall_time")) {
      c.record_wall_time = j["record_wall_time"].get<bool>();
    }
    if (j.contains("tag")) c.tag = j["tag"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad config field: ") + e.what());
  }
  c.Validate();
  return c;
}

std::string ConfigToJson(const ExperimentConfig& c) {
  json j = {{"scenario", ScenarioName(c.scenario)},
            {"method", MethodName(c.method)},
            {"domain", c.domain},
            {"data_size", c.data_size},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"k", c.k},
            {"mode", ModeName(c.mode)},
            {"averaging", AveragingName(c.averaging)},
            {"seeds", c.seeds},
            {"output", c.output},
            {"vocab_size", c.vocab_size},
            {"target_order", c.target_order},
            {"draft_order", c.draft_order},
            {"test_count", c.test_count},
            {"max_new_tokens", c.max_new_tokens},
            {"target_corpus_size", c.target_corpus_size},
            {"generic_corpus_size", c.generic_corpus_size},
            {"user_pool_size", c.user_pool_size},
            {"smoothing", c.smoothing},
            {"shift", c.shift},
            {"buffer_threshold", c.buffer_threshold},
            {"target", TargetName(c.target)},
            {"record_wall_time", c.record_wall_time},
            {"tag", c.tag}};
  j["learning_rate"] = c.learning_rate ? json(*c.learning_rate) : json(nullptr);
  return j.dump(2);
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ConfigFromJson(buffer.str());
}

namespace {

// Models and splits one seed needs; built lazily and shared across the
// configs that run under that seed.
class WorldCache {
 public:
  explicit WorldCache(std::uint64_t seed) : seed_(seed) {}

  struct GenericModels {
    SoftmaxTableLM draft;
    SoftmaxTableLM target;
  };

  std::shared_ptr<const GenericModels> Generic(const ExperimentConfig& c) {
    const std::string key = "generic/" + std::to_string(c.vocab_size) + "/" +
                            std::to_string(c.draft_order) + "/" +
                            std::to_string(c.target_order) + "/" +
                            std::to_string(c.generic_corpus_size) + "/" +
                            FormatNumber(c.smoothing);
    return Get<GenericModels>(key, [&] {
      std::vector<DomainSpec> specs;
      for (DomainKind kind : kAllDomains) {
        specs.push_back(GeneralistDomain(kind, c.vocab_size));
      }
      const auto corpus = GenMixtureCorpus(specs, c.generic_corpus_size,
                                           DeriveSeed(seed_, "generic-corpus"));
      const Vocabulary vocab(c.vocab_size);
      return GenericModels{MleFit(corpus, c.draft_order, vocab, c.smoothing),
                           MleFit(corpus, c.target_order, vocab, c.smoothing)};
    });
  }

  std::shared_ptr<const SoftmaxTableLM> DomainTarget(const ExperimentConfig& c) {
    const std::string key = "target/" + c.domain + "/" +
                            std::to_string(c.vocab_size) + "/" +
                            std::to_string(c.target_order) + "/" +
                            std::to_string(c.target_corpus_size) + "/" +
                            FormatNumber(c.smoothing);
    return Get<SoftmaxTableLM>(key, [&] {
      const DomainSpec spec =
          BuiltinDomain(ParseDomainKind(c.domain), c.vocab_size);
      const auto corpus = GenDomainCorpus(spec, c.target_corpus_size,
                                          DeriveSeed(seed_, "target-corpus/" + c.domain));
      return MleFit(corpus, c.target_order, Vocabulary(c.vocab_size),
                    c.smoothing);
    });
  }

  // In-domain user queries: one corpus per seed and domain, so every data
  // size shares the test prompts and gets nested training subsets.
  std::shared_ptr<const ScenarioSplit> UserQueries(const ExperimentConfig& c) {
    const int pool = std::max(c.user_pool_size, c.data_size);
    const std::string key = "split/" + c.domain + "/" +
                            std::to_string(c.vocab_size) + "/" +
                            std::to_string(pool) + "/" +
                            std::to_string(c.test_count);
    return Get<ScenarioSplit>(key, [&] {
      const DomainSpec spec =
          BuiltinDomain(ParseDomainKind(c.domain), c.vocab_size);
      const auto corpus = GenDomainCorpus(spec, pool + c.test_count,
                                          DeriveSeed(seed_, "user-queries/" + c.domain));
      return ScenarioISplit(corpus, c.test_count,
                            DeriveSeed(seed_, "split/" + c.domain));
    });
  }

 private:
  template <typename T, typename Make>
  std::shared_ptr<const T> Get(const std::string& key, Make make) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = items_.find(key);
      if (it != items_.end()) return std::static_pointer_cast<const T>(it->second);
    }
    auto value = std::make_shared<const T>(make());
    std::lock_guard<std::mutex> lock(mu_);
    auto [it, inserted] = items_.try_emplace(key, value);
    return std::static_pointer_cast<const T>(it->second);
  }

  std::uint64_t seed_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const void>> items_;
};

MetricsRecord RunOne(const ExperimentConfig& c, std::uint64_t seed,
                     WorldCache& world) {
  const auto started = std::chrono::steady_clock::now();
  const DomainSpec spec = BuiltinDomain(ParseDomainKind(c.domain), c.vocab_size);
  const auto generic = world.Generic(c);
  const auto domain_target = world.DomainTarget(c);
  const auto split = world.UserQueries(c);
  const DecodeOptions decode{.k = c.k,
                             .max_new_tokens = c.max_new_tokens,
                             .mode = c.mode};
  const std::optional<LossKind> loss = MethodLoss(c.method);
  const TrainConfig train = c.MakeTrainConfig(DeriveSeed(seed, "train"));

  MetricsRecord record;
  record.run_id = c.RunId();
  record.scenario = ScenarioName(c.scenario);
  record.method = MethodName(c.method);
  record.loss = loss ? LossKindName(*loss) : "none";
  record.learning_rate = c.EffectiveLearningRate();
  record.data_size = c.data_size;
  record.seed = seed;
  record.train_loss_final = std::numeric_limits<double>::quiet_NaN();

  SoftmaxTableLM draft = generic->draft;
  if (loss) {
    std::vector<Sequence> prompts;
    std::vector<DistillExample> synthetic;
    switch (c.scenario) {
      case Scenario::kInDomain:
        prompts.assign(split->train_prompts.begin(),
                       split->train_prompts.begin() + c.data_size);
        break;
      case Scenario::kRelated:
        prompts = ScenarioIIRelated(spec, c.shift, c.data_size,
                                    DeriveSeed(seed, "related-queries"));
        break;
      case Scenario::kSynthetic: {
        MagpieOptions options;
        options.max_query_len = spec.chat.max_query;
        options.max_completion_len = c.max_new_tokens;
        synthetic = MagpieSynthesize(*domain_target, spec.chat, c.data_size,
                                     DeriveSeed(seed, "magpie"), options);
        prompts = ExamplesToPrompts(synthetic);
        break;
      }
    }
    if (IsOnline(c.method)) {
      OnlineOptions online{.decode = decode,
                           .buffer_threshold = c.buffer_threshold};
      OnlineResult result = TrainOnline(std::move(draft), *domain_target,
                                        prompts, online, train,
                                        DeriveSeed(seed, "online"));
      draft = std::move(result.model);
      record.train_loss_final = result.last_update_loss;
    } else {
      const std::vector<DistillExample> dataset =
          c.scenario == Scenario::kSynthetic
              ? std::move(synthetic)
              : BuildOfflineDataset(*domain_target, prompts, c.max_new_tokens,
                                    *loss != LossKind::kSft);
      OfflineResult result = TrainOffline(std::move(draft), dataset, train);
      draft = std::move(result.model);
      record.train_loss_final = result.epoch_losses.back();
    }
  }

  const SoftmaxTableLM& verifier =
      c.target == TargetKind::kGeneric ? generic->target : *domain_target;
  const std::uint64_t eval_seed = DeriveSeed(seed, "eval");
  const DecodeStats stats =
      AcceptanceStats(draft, verifier, split->test_prompts, decode, eval_seed);
  record.acceptance_rate =
      c.averaging == Averaging::kMicro
          ? stats.acceptance_rate()
          : AcceptanceRate(draft, verifier, split->test_prompts, decode,
                           eval_seed, Averaging::kMacro);
  record.mean_accepted_per_round = stats.mean_accepted_per_round();
  record.rounds = stats.rounds;
  if (c.record_wall_time) {
    record.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
  }
  return record;
}

}  // namespace

namespace {

struct Task {
  std::size_t config_index;
  std::size_t seed_index;
};

}  // namespace

std::vector<MetricsRecord> RunAll(std::span<const ExperimentConfig> configs,
                                  const RunOptions& options) {
  if (options.jobs < 1) throw Error(ErrorCode::kConfig, "jobs must be >= 1");
  for (const auto& c : configs) c.Validate();

  // Worlds are keyed by seed value: configs that share a seed share models.
  std::map<std::uint64_t, std::unique_ptr<WorldCache>> worlds;
  std::vector<Task> tasks;
  std::size_t max_seeds = 0;
  for (const auto& c : configs) max_seeds = std::max(max_seeds, c.seeds.size());
  // Seed-major order, so a seed's world is built once and reused while it is
  // hot; the output is reordered below.
  for (std::size_t s = 0; s < max_seeds; ++s) {
    for (std::size_t i = 0; i < configs.size(); ++i) {
      if (s >= configs[i].seeds.size()) continue;
      const std::uint64_t seed = configs[i].seeds[s];
      if (!worlds.count(seed)) worlds[seed] = std::make_unique<WorldCache>(seed);
      tasks.push_back({i, s});
    }
  }

  std::vector<std::vector<MetricsRecord>> out(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    out[i].resize(configs[i].seeds.size());
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      {
        std::lock_guard<std::mutex> lock(error_mu);
        if (error) return;
      }
      const auto [ci, si] = tasks[t];
      const std::uint64_t seed = configs[ci].seeds[si];
      try {
        out[ci][si] = RunOne(configs[ci], seed, *worlds.at(seed));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int threads =
      static_cast<int>(std::min<std::size_t>(options.jobs, tasks.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  std::vector<MetricsRecord> records;
  records.reserve(tasks.size());
  for (auto& per_config : out) {
    for (auto& r : per_config) records.push_back(std::move(r));
  }
  return records;
}

std::vector<MetricsRecord> Run(const ExperimentConfig& config,
                               const RunOptions& options) {
  return RunAll(std::span<const ExperimentConfig>(&config, 1), options);
}

SweepAxis ParseSweepAxis(std::string_view name) {
  if (name == "data_size") return SweepAxis::kDataSize;
  if (name == "learning_rate" || name == "lr") return SweepAxis::kLearningRate;
  if (name == "method") return SweepAxis::kMethod;
  throw Error(ErrorCode::kConfig, "unknown sweep axis '" + std::string(name) + "'");
}

std::string_view SweepAxisName(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kDataSize:
      return "data_size";
    case SweepAxis::kLearningRate:
      return "learning_rate";
    case SweepAxis::kMethod:
      return "method";
  }
  return "?";
}

std::vector<ExperimentConfig> ExpandSweep(const ExperimentConfig& base,
                                          SweepAxis axis,
                                          std::span<const std::string> values) {
  if (values.empty()) throw Error(ErrorCode::kConfig, "sweep needs at least one value");
  std::vector<ExperimentConfig> configs;
  for (const std::string& v : values) {
    ExperimentConfig c = base;
    try {
      std::size_t used = 0;
      switch (axis) {
        case SweepAxis::kDataSize:
          c.data_size = std::stoi(v, &used);
          break;
        case SweepAxis::kLearningRate:
          c.learning_rate = std::stod(v, &used);
          break;
        case SweepAxis::kMethod:
          c.method = ParseMethod(v);
          used = v.size();
          break;
      }
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kConfig, "bad " + std::string(SweepAxisName(axis)) +
                                          " value '" + v + "'");
    }
    c.Validate();
    configs.push_back(std::move(c));
  }
  return configs;
}

std::vector<MetricsRecord> Sweep(const ExperimentConfig& base, SweepAxis axis,
                                 std::span<const std::string> values,
                                 const RunOptions& options) {
  const auto configs = ExpandSweep(base, axis, values);
  return RunAll(configs, options);
}

std::vector<GroupSummary> Summarize(std::span<const MetricsRecord> records) {
  std::vector<GroupSummary> groups;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : records) {
    auto [it, inserted] = values.try_emplace(r.run_id);
    if (inserted) groups.push_back({r.run_id, 0.0, 0.0, 0});
    it->second.push_back(r.acceptance_rate);
  }
  for (auto& g : groups) {
    const auto& v = values[g.run_id];
    g.count = static_cast<int>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    g.mean = sum / g.count;
    if (g.count > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - g.mean) * (x - g.mean);
      g.standard_error = std::sqrt(ss / (g.count - 1) / g.count);
    }
  }
  return groups;
}

bool SuiteReport::passed() const {
  return std::all_of(verdicts.begin(), verdicts.end(),
                     [](const Verdict& v) { return !v.asserted || v.passed; });
}

namespace {

constexpr double kHighRate = 0.5;
constexpr double kLowRate = 0.05;

std::string Fixed(double x, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

// Configs for one suite plus the predicate that judges them.
class SuiteBuilder {
 public:
  explicit SuiteBuilder(std::vector<std::uint64_t> seeds)
      : seeds_(std::move(seeds)) {}

  ExperimentConfig Base() const {
    ExperimentConfig c;
    c.seeds = seeds_;
    return c;
  }

  // Adds a config and returns its run id.
  std::string Add(ExperimentConfig c) {
    std::string id = c.RunId();
    if (std::none_of(configs_.begin(), configs_.end(),
                     [&](const ExperimentConfig& o) { return o.RunId() == id; })) {
      configs_.push_back(std::move(c));
    }
    return id;
  }

  const std::vector<ExperimentConfig>& configs() const { return configs_; }

 private:
  std::vector<std::uint64_t> seeds_;
  std::vector<ExperimentConfig> configs_;
};

class Judge {
 public:
  explicit Judge(std::span<const MetricsRecord> records) {
    for (const auto& g : Summarize(records)) groups_[g.run_id] = g;
  }

  const GroupSummary& operator[](const std::string& id) const {
    auto it = groups_.find(id);
    if (it == groups_.end()) {
      throw Error(ErrorCode::kUndefined, "no results for run " + id);
    }
    return it->second;
  }

  std::string Describe(const std::string& label, const std::string& id) const {
    const auto& g = (*this)[id];
    return label + "=" + Fixed(g.mean) + "±" + Fixed(g.standard_error);
  }

  // a >= b - slack_se * pooled SE.
  Verdict AtLeast(const std::string& claim, const std::string& a_label,
                  const std::string& a, const std::string& b_label,
                  const std::string& b, double slack_se = 0.0,
                  bool asserted = true) const {
    const auto& ga = (*this)[a];
    const auto& gb = (*this)[b];
    const double pooled = std::hypot(ga.standard_error, gb.standard_error);
    Verdict v{claim, ga.mean >= gb.mean - slack_se * pooled, asserted,
              Describe(a_label, a) + " " + Describe(b_label, b)};
    if (slack_se > 0.0) v.detail += " allowance=" + Fixed(slack_se * pooled);
    return v;
  }

  Verdict Below(const std::string& claim, const std::string& a_label,
                const std::string& a, const std::string& b_label,
                const std::string& b) const {
    Verdict v{claim, (*this)[a].mean < (*this)[b].mean, true,
              Describe(a_label, a) + " " + Describe(b_label, b)};
    return v;
  }

 private:
  std::map<std::string, GroupSummary> groups_;
};

ExperimentConfig With(ExperimentConfig c, Scenario scenario, Method method) {
  c.scenario = scenario;
  c.method = method;
  return c;
}

using Verdicts = std::vector<Verdict>;

Verdicts DropSuite(SuiteBuilder& b, const std::vector<MetricsRecord>* records) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (DomainKind kind : kAllDomains) {
    ExperimentConfig c = b.Base();
    c.domain = DomainKindName(kind);
    c.target = TargetKind::kGeneric;
    const std::string generic = b.Add(c);
    c.target = TargetKind::kDomain;
    pairs.emplace_back(generic, b.Add(c));
  }
  if (!records) return {};
  Judge judge(*records);
  Verdicts out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [generic, domain] = pairs[i];
    const double g = judge[generic].mean;
    const double d = judge[domain].mean;
    const double drop = g > 0.0 ? (g - d) / g : 0.0;
    const std::string name(DomainKindName(kAllDomains[i]));
    out.push_back({"generic draft accepts less under the " + name +
                       " target than under the generic target (drop > 5%)",
                   d < g && drop > 0.05, true,
                   judge.Describe("generic_target", generic) + " " +
                       judge.Describe("domain_target", domain) +
                       " relative_drop=" + Fixed(drop)});
  }
  return out;
}

Verdicts MethodsSuite(SuiteBuilder& b, const std::vector<MetricsRecord>* records) {
  std::map<Method, std::string> ids;
  for (Method m : kAllMethods) {
    ids[m] = b.Add(With(b.Base(), Scenario::kInDomain, m));
  }
  if (!records) return {};
  Judge j(*records);
  return {
      j.AtLeast("offline-FKL >= online-FKL", "offline_fkl",
                ids[Method::kOfflineFkl], "online_fkl", ids[Method::kOnlineFkl]),
      j.AtLeast("offline-FKL >= SFT", "offline_fkl", ids[Method::kOfflineFkl],
                "sft", ids[Method::kSft]),
      j.AtLeast("SFT >= baseline", "sft", ids[Method::kSft], "baseline",
                ids[Method::kBaseline]),
      j.AtLeast("offline-RKL >= online-RKL", "offline_rkl",
                ids[Method::kOfflineRkl], "online_rkl", ids[Method::kOnlineRkl],
                0.0, /*asserted=*/false),
  };
}

constexpr int kScalingSizes[] = {500, 2000, 8000};

Verdicts ScalingSuite(SuiteBuilder& b, const std::vector<MetricsRecord>* records) {
  std::map<std::string, std::vector<std::string>> ids;
  for (DomainKind kind : kAllDomains) {
    for (int n : kScalingSizes) {
      ExperimentConfig c = With(b.Base(), Scenario::kInDomain, Method::kOfflineFkl);
      c.domain = DomainKindName(kind);
      c.data_size = n;
      ids[c.domain].push_back(b.Add(c));
    }
  }
  if (!records) return {};
  Judge j(*records);
  Verdicts out;
  for (DomainKind kind : kAllDomains) {
    const std::string name(DomainKindName(kind));
    const auto& series = ids[name];
    for (std::size_t i = 0; i + 1 < series.size(); ++i) {
      Verdict v = j.AtLeast(
          name + " offline-FKL n=" + std::to_string(kScalingSizes[i + 1]) +
              " >= n=" + std::to_string(kScalingSizes[i]) + " within 1 pooled SE",
          "n" + std::to_string(kScalingSizes[i + 1]), series[i + 1],
          "n" + std::to_string(kScalingSizes[i]), series[i], 1.0);
      out.push_back(std::move(v));
    }
  }
  return out;
}

Verdicts LrSuite(SuiteBuilder& b, const std::vector<MetricsRecord>* records) {
  std::map<std::pair<Method, double>, std::string> ids;
  for (Method m : {Method::kOfflineFkl, Method::kOfflineRkl}) {
    for (double lr : {kLowRate, kHighRate}) {
      ExperimentConfig c = With(b.Base(), Scenario::kInDomain, m);
      c.learning_rate = lr;
      ids[{m, lr}] = b.Add(c);
    }
  }
  if (!records) return {};
  Judge j(*records);
  return {
      j.AtLeast("offline-FKL >= offline-RKL at the high learning rate "
                "(1 pooled SE allowance)",
                "fkl", ids[{Method::kOfflineFkl, kHighRate}], "rkl",
                ids[{Method::kOfflineRkl, kHighRate}], 1.0),
      j.AtLeast("offline-FKL >= offline-RKL at the low learning rate", "fkl",
                ids[{Method::kOfflineFkl, kLowRate}], "rkl",
                ids[{Method::kOfflineRkl, kLowRate}], 1.0, /*asserted=*/false),
  };
}

Verdicts SyntheticSuite(SuiteBuilder& b, const std::vector<MetricsRecord>* records) {
  const std::string base = b.Add(With(b.Base(), Scenario::kInDomain, Method::kBaseline));
  const std::string indomain =
      b.Add(With(b.Base(), Scenario::kInDomain, Method::kOfflineFkl));
  const std::string magpie =
      b.Add(With(b.Base(), Scenario::kSynthetic, Method::kOfflineFkl));
  if (!records) return {};
  Judge j(*records);
  const double gb = j[base].mean;
  const double gain_in = j[indomain].mean - gb;
  const double gain_magpie = j[magpie].mean - gb;
  const double ratio = gain_in != 0.0 ? gain_magpie / gain_in : 0.0;
  return {{"synthetic-data gain >= 0.5 x in-domain gain",
           gain_in > 0.0 && gain_magpie >= 0.5 * gain_in, true,
           j.Describe("baseline", base) + " " + j.Describe("indomain", indomain) +
               " " + j.Describe("magpie", magpie) + " ratio=" + Fixed(ratio)}};
}

Verdicts RelatedSuite(SuiteBuilder& b, const std::vector<MetricsRecord>* records) {
  const std::string base = b.Add(With(b.Base(), Scenario::kInDomain, Method::kBaseline));
  const std::string related =
      b.Add(With(b.Base(), Scenario::kRelated, Method::kOfflineFkl));
  // shift = 0 with the same sample count is exactly the in-domain pool.
  const std::string indomain =
      b.Add(With(b.Base(), Scenario::kInDomain, Method::kOfflineFkl));
  if (!records) return {};
  Judge j(*records);
  return {j.Below("related-domain training beats baseline", "baseline", base,
                  "related", related),
          j.Below("related-domain training trails in-domain training",
                  "related", related, "indomain", indomain)};
}

using SuiteFn = Verdicts (*)(SuiteBuilder&, const std::vector<MetricsRecord>*);

SuiteFn FindSuite(std::string_view suite) {
  if (suite == "drop") return DropSuite;
  if (suite == "methods") return MethodsSuite;
  if (suite == "scaling") return ScalingSuite;
  if (suite == "lr") return LrSuite;
  if (suite == "synthetic") return SyntheticSuite;
  if (suite == "related") return RelatedSuite;
  throw Error(ErrorCode::kConfig, "unknown suite '" + std::string(suite) + "'");
}

}  // namespace

SuiteReport Reproduce(std::string_view suite, std::uint64_t master_seed,
                      const ReproduceOptions& options) {
  const SuiteFn fn = FindSuite(suite);
  if (options.num_seeds < 1) throw Error(ErrorCode::kConfig, "num_seeds must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < options.num_seeds; ++i) {
    seeds.push_back(DeriveSeed(master_seed, "suite", static_cast<std::uint64_t>(i)));
  }
  SuiteBuilder builder(std::move(seeds));
  fn(builder, nullptr);
  SuiteReport report;
  report.suite = suite;
  report.records = RunAll(builder.configs(), {.jobs = options.jobs});
  report.verdicts = fn(builder, &report.records);
  return report;
}

void PrintReport(const SuiteReport& report, std::ostream& out) {
  out << "suite " << report.suite << ": " << report.records.size()
      << " runs\n";
  for (const auto& g : Summarize(report.records)) {
    out << "  " << g.run_id << "  mean=" << Fixed(g.mean)
        << " se=" << Fixed(g.standard_error) << " n=" << g.count << "\n";
  }
  for (const auto& v : report.verdicts) {
    const char* tag = !v.asserted ? "INFO" : (v.passed ? "PASS" : "FAIL");
    out << tag << "  " << v.claim << "  [" << v.detail << "]\n";
  }
}

}  // namespace sdlab
