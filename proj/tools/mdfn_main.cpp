// Command-line front end over the shared-library C interface.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdfn/mdfn.h"

using nlohmann::json;

namespace {

constexpr int kUsageExit = 2;
constexpr int kRuntimeExit = 1;

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    std::cerr << "error: cannot open " << path << "\n";
    std::exit(kRuntimeExit);
  }
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

[[noreturn]] void die_api(int code) {
  std::cerr << "error (" << mdfn_error_code_name(code) << "): " << mdfn_last_error()
            << "\n";
  std::exit(kRuntimeExit);
}

// --seed wins over MDFN_SEED; returns whether either was provided.
bool resolve_seed(bool seed_set, uint64_t& seed) {
  if (seed_set) return true;
  if (const char* env = std::getenv("MDFN_SEED")) {
    try {
      seed = std::stoull(env);
      return true;
    } catch (...) {
      std::cerr << "error: MDFN_SEED is not an integer: " << env << "\n";
      std::exit(kUsageExit);
    }
  }
  return false;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string owned(char* s) {
  std::string out = s ? s : "";
  mdfn_string_free(s);
  return out;
}

void log_line(const char* line, void*) { std::cerr << line << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-turn dialogue response selection: masked decoupling-fusing "
               "network training and evaluation"};
  app.require_subcommand(1);

  bool as_json = false;
  app.add_flag("--json", as_json, "emit one JSON object on stdout");

  uint64_t seed = 0;
  bool seed_set = false;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::string gen_config, gen_out;
  gen->add_option("--config", gen_config, "synthesis config JSON file")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", seed, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_data, train_model_cfg, train_optim_cfg, train_out;
  std::vector<std::string> ablations;
  train->add_option("--data", train_data, "directory with train/valid JSONL + vocab.txt")
      ->required();
  train->add_option("--model-config", train_model_cfg, "model spec JSON file");
  train->add_option("--optim", train_optim_cfg, "optimizer config JSON file");
  train->add_option("--out", train_out, "checkpoint/log output directory")->required();
  train->add_option("--ablation", ablations, "named preset, repeatable")
      ->take_all();
  train->add_option("--seed", seed, "override the optimizer seed")
      ->each([&](const std::string&) { seed_set = true; });

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_metrics = "r@1,r@2,mrr";
  int eval_threads = 1;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "JSONL dataset")->required();
  eval->add_option("--metrics", eval_metrics, "comma list of r@1,r@2,mrr,map,p@1");
  eval->add_option("--threads", eval_threads, "scoring threads (default 1)");

  // rank
  auto* rank = app.add_subcommand("rank", "score candidates of JSONL records");
  std::string rank_ckpt, rank_input;
  rank->add_option("--ckpt", rank_ckpt, "checkpoint path")->required();
  rank->add_option("--input", rank_input, "JSONL file")->required();

  // inspect-masks
  auto* inspect = app.add_subcommand("inspect-masks",
                                     "dump attention masks and gate statistics");
  std::string ins_input, ins_ckpt;
  int ins_index = 0;
  inspect->add_option("--input", ins_input, "JSONL file")->required();
  inspect->add_option("--index", ins_index, "record index (default 0)");
  inspect->add_option("--ckpt", ins_ckpt, "optional checkpoint for vocab/gates");
  inspect->add_option("--seed", seed, "seed for the fallback model")
      ->each([&](const std::string&) { seed_set = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageExit;
  }

  const bool has_seed = resolve_seed(seed_set, seed);

  if (gen->parsed()) {
    std::string cfg_text = read_file(gen_config);
    if (has_seed) {
      json j = json::parse(cfg_text, nullptr, false);
      if (j.is_discarded()) {
        std::cerr << "error: invalid JSON in " << gen_config << "\n";
        return kRuntimeExit;
      }
      j["seed"] = seed;
      cfg_text = j.dump();
    }
    const int rc = mdfn_gen_data(cfg_text.c_str(), gen_out.c_str());
    if (rc != MDFN_OK) die_api(rc);
    if (as_json)
      std::cout << json{{"out", gen_out}, {"status", "ok"}}.dump() << "\n";
    else
      std::cout << "wrote train/valid/test JSONL and vocab.txt to " << gen_out << "\n";
    return 0;
  }

  if (train->parsed()) {
    std::string model_text, optim_text;
    if (!train_model_cfg.empty()) model_text = read_file(train_model_cfg);
    if (!train_optim_cfg.empty()) optim_text = read_file(train_optim_cfg);
    std::string ablation_csv;
    for (const auto& a : ablations) {
      if (!ablation_csv.empty()) ablation_csv += ',';
      ablation_csv += a;
    }
    char* summary = nullptr;
    const int rc = mdfn_train(
        train_data.c_str(), model_text.empty() ? nullptr : model_text.c_str(),
        optim_text.empty() ? nullptr : optim_text.c_str(),
        ablation_csv.empty() ? nullptr : ablation_csv.c_str(), has_seed ? 1 : 0,
        seed, train_out.c_str(), as_json ? nullptr : log_line, nullptr, &summary);
    if (rc != MDFN_OK) die_api(rc);
    const std::string text = owned(summary);
    if (as_json) {
      std::cout << text << "\n";
    } else {
      const json j = json::parse(text);
      std::cout << "best checkpoint: " << j.at("best_checkpoint").get<std::string>()
                << "\nbest epoch " << j.at("best_epoch")
                << "  val R@1 " << fmt3(j.at("best_val_r_at_1").get<double>())
                << "  val MRR " << fmt3(j.at("best_val_mrr").get<double>()) << "\n";
    }
    return 0;
  }

  if (eval->parsed()) {
    mdfn_model* m = nullptr;
    int rc = mdfn_model_open(eval_ckpt.c_str(), &m);
    if (rc != MDFN_OK) die_api(rc);
    char* metrics = nullptr;
    rc = mdfn_eval(m, eval_data.c_str(), eval_threads, &metrics);
    mdfn_model_close(m);
    if (rc != MDFN_OK) die_api(rc);
    const json j = json::parse(owned(metrics));
    if (as_json) {
      std::cout << j.dump() << "\n";
      return 0;
    }
    const int n = j.at("n_candidates").get<int>();
    std::vector<std::pair<std::string, double>> cols;
    std::stringstream names(eval_metrics);
    std::string name;
    while (std::getline(names, name, ',')) {
      if (name == "r@1")
        cols.emplace_back("R_" + std::to_string(n) + "@1", j.at("r_at_1").get<double>());
      else if (name == "r@2")
        cols.emplace_back("R_" + std::to_string(n) + "@2", j.at("r_at_2").get<double>());
      else if (name == "mrr")
        cols.emplace_back("MRR", j.at("mrr").get<double>());
      else if (name == "map")
        cols.emplace_back("MAP", j.at("map").get<double>());
      else if (name == "p@1")
        cols.emplace_back("P@1", j.at("p_at_1").get<double>());
      else {
        std::cerr << "error: unknown metric '" << name << "'\n";
        return kUsageExit;
      }
    }
    std::string head, row;
    for (const auto& [label, value] : cols) {
      const std::string cell = fmt3(value);
      const size_t w = std::max(label.size(), cell.size());
      head += label + std::string(w - label.size() + 2, ' ');
      row += cell + std::string(w - cell.size() + 2, ' ');
    }
    std::cout << head << "\n" << row << "\n";
    for (const auto& e : j.at("line_errors"))
      std::cerr << "skipped " << e.get<std::string>() << "\n";
    return 0;
  }

  if (rank->parsed()) {
    mdfn_model* m = nullptr;
    int rc = mdfn_model_open(rank_ckpt.c_str(), &m);
    if (rc != MDFN_OK) die_api(rc);
    char* result = nullptr;
    rc = mdfn_rank(m, rank_input.c_str(), &result);
    mdfn_model_close(m);
    if (rc != MDFN_OK) die_api(rc);
    const json j = json::parse(owned(result));
    if (as_json) {
      std::cout << j.dump() << "\n";
      return 0;
    }
    for (const auto& inst : j.at("instances")) {
      std::cout << inst.at("id").get<std::string>() << "\n";
      const auto& scores = inst.at("scores");
      const auto& labels = inst.at("labels");
      const auto& cands = inst.at("candidates");
      int pos = 1;
      for (const auto& idx : inst.at("order")) {
        const int i = idx.get<int>();
        std::cout << "  " << pos++ << ". cand " << i << "  score "
                  << fmt3(scores[static_cast<size_t>(i)].get<double>()) << "  label "
                  << labels[static_cast<size_t>(i)].get<int>() << "  "
                  << cands[static_cast<size_t>(i)].get<std::string>() << "\n";
      }
    }
    for (const auto& e : j.at("line_errors"))
      std::cerr << "skipped " << e.get<std::string>() << "\n";
    return 0;
  }

  // inspect-masks
  char* out = nullptr;
  const int rc = mdfn_inspect_masks(ins_input.c_str(), ins_index,
                                    ins_ckpt.empty() ? nullptr : ins_ckpt.c_str(),
                                    seed, &out);
  if (rc != MDFN_OK) die_api(rc);
  const std::string text = owned(out);
  std::cout << (as_json ? text : json::parse(text).dump(2)) << "\n";
  return 0;
}
