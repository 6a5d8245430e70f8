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

// sdlab command-line driver.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdlab/datagen.h"
#include "sdlab/dataset_io.h"
#include "sdlab/distill.h"
#include "sdlab/error.h"
#include "sdlab/harness.h"
#include "sdlab/language_model.h"
#include "sdlab/model_io.h"
#include "sdlab/specdec.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitVerdict = 2;

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::string out = ".";
  std::string format = "csv";
  int jobs = 1;
};

void AddCommon(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&c](std::uint64_t s) { c.seed = s; c.seed_set = true; },
      "master seed");
  cmd->add_option("--out", c.out, "output directory or file");
  cmd->add_option("--format", c.format, "csv|json|plotdata")
      ->check(CLI::IsMember({"csv", "json", "plotdata"}));
  cmd->add_option("--jobs", c.jobs, "parallel runs")->check(CLI::PositiveNumber);
}

sdlab::ExperimentConfig BaseConfig(const Common& c) {
  sdlab::ExperimentConfig config;
  if (!c.config.empty()) config = sdlab::LoadConfig(c.config);
  if (c.seed_set) config.seeds = {c.seed};
  return config;
}

void EmitRecords(const std::vector<sdlab::MetricsRecord>& records,
                 const Common& c) {
  for (const auto& path :
       sdlab::Emit(records, sdlab::ParseEmitFormat(c.format), c.out)) {
    std::cerr << "wrote " << path.string() << "\n";
  }
}

std::vector<sdlab::Sequence> LoadPrompts(const std::string& path) {
  return sdlab::ExamplesToPrompts(sdlab::LoadDataset(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sdlab: speculative-decoding draft alignment lab"};
  app.require_subcommand(1);

  // gen-data
  Common gen;
  std::string gen_domain = "TOPIC";
  std::string gen_kind = "records";
  int gen_count = 1000;
  double gen_shift = 0.0;
  std::string gen_target;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a domain corpus");
  AddCommon(gen_cmd, gen);
  gen_cmd->add_option("--domain", gen_domain, "STRUCT|TOPIC|SCRIPT");
  gen_cmd->add_option("--count", gen_count, "number of items")
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--shift", gen_shift, "domain shift in [0, 1]");
  gen_cmd->add_option("--kind", gen_kind, "records|prompts|magpie")
      ->check(CLI::IsMember({"records", "prompts", "magpie"}));
  gen_cmd->add_option("--target", gen_target, "target model (for --kind magpie)");

  // train-target
  Common tt;
  std::string tt_data;
  std::string tt_domain = "TOPIC";
  int tt_order = sdlab::kDefaultTargetOrder;
  int tt_count = 20000;
  double tt_smoothing = sdlab::kDefaultSmoothing;
  auto* tt_cmd = app.add_subcommand("train-target", "fit a tabular target by MLE");
  AddCommon(tt_cmd, tt);
  tt_cmd->add_option("--data", tt_data, "JSONL records (default: generate)");
  tt_cmd->add_option("--domain", tt_domain, "domain to generate from");
  tt_cmd->add_option("--count", tt_count, "generated corpus size");
  tt_cmd->add_option("--order", tt_order, "context length (1-3)");
  tt_cmd->add_option("--smoothing", tt_smoothing, "add-lambda smoothing");

  // train-draft
  Common td;
  std::string td_draft, td_target, td_data, td_method = "offline-FKL";
  std::optional<double> td_lr;
  int td_epochs = 3, td_batch = 8, td_k = sdlab::kDefaultProposalLength;
  int td_threshold = sdlab::kDefaultBufferThreshold, td_max_new = 64;
  auto* td_cmd = app.add_subcommand("train-draft", "distill a draft from a target");
  AddCommon(td_cmd, td);
  td_cmd->add_option("--draft", td_draft, "initial draft model")->required();
  td_cmd->add_option("--target", td_target, "target model")->required();
  td_cmd->add_option("--data", td_data, "JSONL prompts or examples")->required();
  td_cmd->add_option("--method", td_method,
                     "baseline|SFT|offline-FKL|offline-RKL|online-FKL|online-RKL");
  td_cmd->add_option("--lr", td_lr, "learning rate");
  td_cmd->add_option("--epochs", td_epochs);
  td_cmd->add_option("--batch-size", td_batch);
  td_cmd->add_option("--k", td_k, "proposal length (online)");
  td_cmd->add_option("--buffer-threshold", td_threshold);
  td_cmd->add_option("--max-new-tokens", td_max_new);

  // eval-accept
  Common ev;
  std::string ev_draft, ev_target, ev_data, ev_mode = "stochastic";
  int ev_k = sdlab::kDefaultProposalLength, ev_max_new = 64;
  bool ev_macro = false;
  auto* ev_cmd = app.add_subcommand(
      "eval-accept", "acceptance rate of a draft (model files or --config)");
  AddCommon(ev_cmd, ev);
  ev_cmd->add_option("--draft", ev_draft, "draft model");
  ev_cmd->add_option("--target", ev_target, "target model");
  ev_cmd->add_option("--data", ev_data, "JSONL prompts");
  ev_cmd->add_option("--k", ev_k);
  ev_cmd->add_option("--max-new-tokens", ev_max_new);
  ev_cmd->add_option("--mode", ev_mode)->check(CLI::IsMember({"stochastic", "greedy"}));
  ev_cmd->add_flag("--macro", ev_macro, "macro-average over prompts");

  // sweep
  Common sw;
  std::string sw_axis;
  std::vector<std::string> sw_values;
  auto* sw_cmd = app.add_subcommand("sweep", "run a config across one axis");
  AddCommon(sw_cmd, sw);
  sw_cmd->add_option("--axis", sw_axis, "data_size|learning_rate|method")->required();
  sw_cmd->add_option("--values", sw_values, "axis values")->required()->delimiter(',');

  // reproduce
  Common rp;
  std::string rp_suite = "all";
  int rp_seeds = 5;
  auto* rp_cmd = app.add_subcommand("reproduce", "run a named suite and judge it");
  AddCommon(rp_cmd, rp);
  rp_cmd->add_option("suite", rp_suite, "drop|methods|scaling|lr|synthetic|related|all");
  rp_cmd->add_option("--num-seeds", rp_seeds)->check(CLI::PositiveNumber);

  // emit
  Common em;
  std::string em_in;
  auto* em_cmd = app.add_subcommand("emit", "convert a metrics file");
  AddCommon(em_cmd, em);
  em_cmd->add_option("--in", em_in, "metrics .csv or .json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) {
      sdlab::DomainSpec spec =
          sdlab::BuiltinDomain(sdlab::ParseDomainKind(gen_domain));
      if (gen_shift > 0.0) spec = sdlab::ShiftDomain(spec, gen_shift);
      fs::create_directories(gen.out);
      const std::string stem = spec.name + "-" + gen_kind;
      std::vector<sdlab::DistillExample> items;
      if (gen_kind == "magpie") {
        if (gen_target.empty()) {
          throw sdlab::Error(sdlab::ErrorCode::kConfig, "--kind magpie needs --target");
        }
        sdlab::MagpieStats stats;
        items = sdlab::MagpieSynthesize(sdlab::LoadModel(gen_target), spec.chat,
                                        gen_count, gen.seed, {}, &stats);
        std::cerr << "magpie: " << stats.accepted << " accepted of "
                  << stats.attempts << " attempts\n";
      } else {
        const auto corpus = sdlab::GenDomainCorpus(spec, gen_count, gen.seed);
        items = sdlab::RecordsToExamples(corpus);
        if (gen_kind == "prompts") {
          items = sdlab::PromptsToExamples(sdlab::ExamplesToPrompts(items));
        }
      }
      sdlab::SaveDataset(items, fs::path(gen.out) / (stem + ".jsonl"));
      sdlab::SaveDomainSpec(spec, fs::path(gen.out) / (spec.name + ".spec.json"));
      std::cout << (fs::path(gen.out) / (stem + ".jsonl")).string() << "\n";
    } else if (tt_cmd->parsed()) {
      std::vector<sdlab::Sequence> corpus;
      int vocab = 40;
      if (!tt_data.empty()) {
        for (const auto& ex : sdlab::LoadDataset(tt_data)) {
          if (ex.completion.empty()) {
            throw sdlab::Error(sdlab::ErrorCode::kConfig,
                               "train-target needs records with completions");
          }
          sdlab::Sequence record = ex.prompt;
          record.insert(record.end(), ex.completion.begin(), ex.completion.end());
          corpus.push_back(std::move(record));
        }
      } else {
        const auto spec = sdlab::BuiltinDomain(sdlab::ParseDomainKind(tt_domain));
        vocab = spec.vocab_size;
        corpus = sdlab::GenDomainCorpus(spec, tt_count, tt.seed);
      }
      const auto model =
          sdlab::MleFit(corpus, tt_order, sdlab::Vocabulary(vocab), tt_smoothing);
      sdlab::SaveModel(model, tt.out);
      std::cout << tt.out << "\n";
    } else if (td_cmd->parsed()) {
      const sdlab::Method method = sdlab::ParseMethod(td_method);
      sdlab::SoftmaxTableLM draft = sdlab::LoadModel(td_draft);
      const sdlab::SoftmaxTableLM target = sdlab::LoadModel(td_target);
      const auto data = sdlab::LoadDataset(td_data);
      sdlab::ExperimentConfig cfg;
      cfg.method = method;
      cfg.learning_rate = td_lr;
      cfg.epochs = td_epochs;
      cfg.batch_size = td_batch;
      const sdlab::TrainConfig train = cfg.MakeTrainConfig(td.seed);
      const auto loss = sdlab::MethodLoss(method);
      if (!loss) {
        // Baseline: the draft is written back untouched.
      } else if (sdlab::IsOnline(method)) {
        sdlab::OnlineOptions online{
            .decode = {.k = td_k, .max_new_tokens = td_max_new},
            .buffer_threshold = td_threshold};
        auto result = sdlab::TrainOnline(std::move(draft), target,
                                         sdlab::ExamplesToPrompts(data), online,
                                         train, td.seed);
        std::cerr << "online: " << result.updates << " updates, acceptance "
                  << result.stats.acceptance_rate() << "\n";
        draft = std::move(result.model);
      } else {
        const bool white_box = *loss != sdlab::LossKind::kSft;
        const bool ready = std::all_of(data.begin(), data.end(), [&](const auto& ex) {
          return !ex.completion.empty() && (!white_box || ex.white_box());
        });
        const auto dataset =
            ready ? data
                  : sdlab::BuildOfflineDataset(target, sdlab::ExamplesToPrompts(data),
                                               td_max_new, white_box);
        auto result = sdlab::TrainOffline(std::move(draft), dataset, train);
        std::cerr << "offline: final epoch loss " << result.epoch_losses.back()
                  << "\n";
        draft = std::move(result.model);
      }
      sdlab::SaveModel(draft, td.out);
      std::cout << td.out << "\n";
    } else if (ev_cmd->parsed()) {
      if (!ev_draft.empty() || !ev_target.empty() || !ev_data.empty()) {
        if (ev_draft.empty() || ev_target.empty() || ev_data.empty()) {
          throw sdlab::Error(sdlab::ErrorCode::kConfig,
                             "eval-accept needs --draft, --target and --data together");
        }
        const sdlab::DecodeOptions decode{
            .k = ev_k,
            .max_new_tokens = ev_max_new,
            .mode = ev_mode == "greedy" ? sdlab::VerificationMode::kGreedy
                                        : sdlab::VerificationMode::kStochastic};
        const auto rate = sdlab::AcceptanceRate(
            sdlab::LoadModel(ev_draft), sdlab::LoadModel(ev_target),
            LoadPrompts(ev_data), decode, ev.seed,
            ev_macro ? sdlab::Averaging::kMacro : sdlab::Averaging::kMicro);
        std::printf("%.17g\n", rate);
      } else {
        if (ev.config.empty()) {
          throw sdlab::Error(sdlab::ErrorCode::kConfig,
                             "eval-accept needs model files or --config");
        }
        const auto records = sdlab::Run(BaseConfig(ev), {.jobs = ev.jobs});
        for (const auto& r : records) {
          std::printf("%s seed=%llu acceptance=%.6f\n", r.run_id.c_str(),
                      static_cast<unsigned long long>(r.seed), r.acceptance_rate);
        }
        EmitRecords(records, ev);
      }
    } else if (sw_cmd->parsed()) {
      const auto records = sdlab::Sweep(BaseConfig(sw), sdlab::ParseSweepAxis(sw_axis),
                                        sw_values, {.jobs = sw.jobs});
      for (const auto& g : sdlab::Summarize(records)) {
        std::printf("%s mean=%.4f se=%.4f n=%d\n", g.run_id.c_str(), g.mean,
                    g.standard_error, g.count);
      }
      EmitRecords(records, sw);
    } else if (rp_cmd->parsed()) {
      std::vector<std::string> suites;
      if (rp_suite == "all") {
        suites.assign(std::begin(sdlab::kSuites), std::end(sdlab::kSuites));
      } else {
        suites.push_back(rp_suite);
      }
      bool ok = true;
      for (const auto& suite : suites) {
        const auto report = sdlab::Reproduce(
            suite, rp.seed, {.jobs = rp.jobs, .num_seeds = rp_seeds});
        sdlab::PrintReport(report, std::cout);
        Common out = rp;
        out.out = (fs::path(rp.out) / suite).string();
        EmitRecords(report.records, out);
        ok = ok && report.passed();
      }
      return ok ? kExitOk : kExitVerdict;
    } else if (em_cmd->parsed()) {
      std::ifstream in(em_in, std::ios::binary);
      if (!in) throw sdlab::Error(sdlab::ErrorCode::kIo, "cannot open " + em_in);
      const auto records = fs::path(em_in).extension() == ".json"
                               ? sdlab::ReadJson(in)
                               : sdlab::ReadCsv(in);
      EmitRecords(records, em);
    }
  } catch (const sdlab::Error& e) {
    std::cerr << "error [" << sdlab::ErrorCodeName(e.code()) << "]: " << e.what()
              << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
