#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <streambuf>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "hat/errors.hpp"
#include "hat/io_util.hpp"
#include "hat/runner.hpp"

namespace {

// Mirrors everything written to stdout into a log file.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int ch) override {
    if (ch == traits_type::eof()) return !traits_type::eof();
    const int ra = a_->sputc(static_cast<char>(ch));
    const int rb = b_->sputc(static_cast<char>(ch));
    return ra == traits_type::eof() || rb == traits_type::eof() ? traits_type::eof() : ch;
  }
  int sync() override { return a_->pubsync() == 0 && b_->pubsync() == 0 ? 0 : -1; }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

// One subcommand's flag values, collected as raw strings so the config
// module does all value parsing and every knob has a single validation path.
// Values live in a deque because CLI11 keeps references to them.
struct FlagSet {
  CLI::App* cmd = nullptr;
  std::deque<std::string> values;
  struct Entry {
    std::string key;
    CLI::Option* opt;
    int value_idx;  // -1 for boolean flags
  };
  std::vector<Entry> entries;

  void add(const std::string& flag, const std::string& key, const std::string& help) {
    values.emplace_back();
    CLI::Option* opt = cmd->add_option(flag, values.back(), help);
    entries.push_back({key, opt, static_cast<int>(values.size()) - 1});
  }

  void add_flag(const std::string& flag, const std::string& key, const std::string& help) {
    CLI::Option* opt = cmd->add_flag(flag, help);
    entries.push_back({key, opt, -1});
  }

  hat::ConfigLayers layers(const std::string& config_file) const {
    hat::ConfigLayers layers;
    layers.config_file = config_file;
    for (const Entry& e : entries)
      if (e.opt->count() > 0)
        layers.flag_values.emplace_back(
            e.key, e.value_idx >= 0 ? values[static_cast<size_t>(e.value_idx)] : "true");
    return layers;
  }
};

// The flags every subcommand shares; each one overrides the matching
// config-file key.
void add_shared_flags(FlagSet& flags, std::string& config_file) {
  flags.cmd->add_option("--config", config_file, "configuration file (key=value lines)");
  flags.add("--seed", "seed", "seed for all randomness");
  flags.add("--levels", "align.levels", "alignment levels, e.g. 2,3,4 or all");
  flags.add("--lambda", "align.lambda", "attention temperature");
  flags.add("--margin", "train.margin", "triplet margin");
  flags.add("--lr", "train.lr0", "initial learning rate");
  flags.add("--epochs", "train.epochs", "training epochs");
  flags.add("--freeze-epochs", "train.freeze_epochs", "epochs with frozen encoders");
  flags.add("--direction", "align.direction", "i2t, t2i, or ensemble");
  flags.add_flag("--per-level-mean", "align.per_level_mean",
                 "average instead of sum over query tokens per level");
  flags.add("--batch-size", "train.batch_size", "training batch size");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical cross-modal retrieval toolkit"};
  app.require_subcommand(1);

  std::function<int()> run;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired corpus");
  FlagSet gen_flags;
  gen_flags.cmd = gen;
  std::string gen_config, gen_out;
  add_shared_flags(gen_flags, gen_config);
  gen_flags.add("--pairs", "data.num_pairs", "number of images");
  gen_flags.add("--vocab", "data.vocab_size", "vocabulary size");
  gen_flags.add("--concepts", "data.concept_count", "latent concept count");
  gen_flags.add("--concepts-per-pair", "data.concepts_per_pair", "concepts planted per pair");
  gen_flags.add("--captions-per-image", "data.captions_per_image", "captions per image");
  gen_flags.add("--noise", "data.noise", "noise level in [0, 1]");
  gen_flags.add("--sentence-len-min", "data.sentence_len_min", "shortest caption length");
  gen_flags.add("--sentence-len-max", "data.sentence_len_max", "longest caption length");
  gen_flags.add("--grid", "data.grid_side", "image grid side length");
  gen_flags.add("--patch-dim", "data.patch_dim", "values per image patch");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->callback([&] {
    run = [&]() -> int {
      hat::cmd_gen_data(gen_flags.layers(gen_config), gen_out, std::cout);
      return 0;
    };
  });

  // train
  auto* train = app.add_subcommand("train", "train a model on a corpus");
  FlagSet train_flags;
  train_flags.cmd = train;
  std::string train_config, train_data, train_out;
  add_shared_flags(train_flags, train_config);
  train_flags.add("--negatives", "train.negatives", "random or hardest");
  train_flags.add("--val-every", "train.val_every", "epochs between retrieval checks");
  train_flags.add("--early-stop-r1", "train.early_stop_r1", "stop once both directions reach this R@1");
  train_flags.add("--kind", "text.kind", "text encoder kind: transformer or recurrent");
  train->add_option("--data", train_data, "corpus directory")->required();
  train->add_option("--out", train_out, "output directory for checkpoint and logs")->required();
  train->callback([&] {
    run = [&]() -> int {
      std::filesystem::create_directories(train_out);
      std::ofstream log_file((std::filesystem::path(train_out) / "train.log").string(),
                             std::ios::trunc);
      if (!log_file) throw hat::IoError("cannot open train.log under " + train_out);
      TeeBuf tee(std::cout.rdbuf(), log_file.rdbuf());
      std::ostream log(&tee);
      hat::cmd_train(train_flags.layers(train_config), train_data, train_out, log);
      log.flush();
      return 0;
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "score a corpus and report retrieval metrics");
  FlagSet eval_flags;
  eval_flags.cmd = eval;
  std::string eval_config, eval_data, eval_ckpt, eval_out;
  add_shared_flags(eval_flags, eval_config);
  eval_flags.add("--folds", "eval.num_folds", "number of evaluation folds");
  eval_flags.add("--fold-size", "eval.fold_size", "images per fold (0 = whole corpus)");
  eval->add_option("--data", eval_data, "corpus directory")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file or train output directory")->required();
  eval->add_option("--out", eval_out, "write the metric=value report here");
  eval->callback([&] {
    run = [&]() -> int {
      hat::cmd_eval(eval_flags.layers(eval_config), eval_data, eval_ckpt, eval_out, std::cout);
      return 0;
    };
  });

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "rank candidates for one query");
  FlagSet retrieve_flags;
  retrieve_flags.cmd = retrieve;
  std::string retrieve_config, retrieve_data, retrieve_ckpt, query_kind = "image";
  int query_id = 0, topk = 5;
  add_shared_flags(retrieve_flags, retrieve_config);
  retrieve->add_option("--data", retrieve_data, "corpus directory")->required();
  retrieve->add_option("--ckpt", retrieve_ckpt, "checkpoint file or train output directory")
      ->required();
  retrieve->add_option("--query-kind", query_kind, "image or text");
  retrieve->add_option("--query-id", query_id, "query item id")->required();
  retrieve->add_option("--topk", topk, "candidates to list");
  retrieve->callback([&] {
    run = [&]() -> int {
      hat::cmd_retrieve(retrieve_flags.layers(retrieve_config), retrieve_data, retrieve_ckpt,
                        query_kind, query_id, topk, std::cout);
      return 0;
    };
  });

  // export-attn
  auto* attn = app.add_subcommand("export-attn", "write attention weights of one pair as CSV");
  FlagSet attn_flags;
  attn_flags.cmd = attn;
  std::string attn_config, attn_data, attn_ckpt, attn_out;
  int attn_image = 0, attn_text = 0;
  add_shared_flags(attn_flags, attn_config);
  attn->add_option("--data", attn_data, "corpus directory")->required();
  attn->add_option("--ckpt", attn_ckpt, "checkpoint file or train output directory")->required();
  attn->add_option("--image-id", attn_image, "image id of the pair")->required();
  attn->add_option("--text-id", attn_text, "text id of the pair")->required();
  attn->add_option("--out", attn_out, "output CSV path")->required();
  attn->callback([&] {
    run = [&]() -> int {
      hat::cmd_export_attn(attn_flags.layers(attn_config), attn_data, attn_ckpt, attn_image,
                           attn_text, attn_out, std::cout);
      return 0;
    };
  });

  // grad-check
  auto* grad = app.add_subcommand("grad-check", "audit gradients against finite differences");
  unsigned long long grad_seed = 1;
  double grad_tol = 1e-3;
  grad->add_option("--seed", grad_seed, "seed for the audit model and inputs");
  grad->add_option("--tolerance", grad_tol, "maximum relative error accepted");
  grad->callback([&] {
    run = [&]() -> int {
      if (hat::cmd_grad_check(grad_seed, grad_tol, std::cout)) return 0;
      std::cerr << "error: train: gradient audit exceeded tolerance\n";
      return 1;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    return run();
  } catch (const hat::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
