#include "specrage_cli/commands.hpp"

#include "specrage/error.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using specrage::cli::RunConfig;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;
  std::string output;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.file, "run configuration file (key = value lines)")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", args.overrides, "override one key, e.g. --set train.epochs=50")->take_all();
  cmd->add_option("-o,--output", args.output, "output directory (overrides the output key)");
}

RunConfig build_config(const ConfigArgs& args) {
  RunConfig config = args.file.empty() ? RunConfig{} : RunConfig::load(args.file);
  for (const auto& o : args.overrides) specrage::cli::apply_override(config, o);
  if (!args.output.empty()) specrage::cli::apply_override(config, "output=" + args.output);
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"specrage: multi-view spectral embeddings by approximate joint diagonalization"};
  app.require_subcommand(1);

  ConfigArgs gen_args, train_args, sweep_args, eval_args;

  auto* gen = app.add_subcommand("gen-data", "generate, contaminate and split a blobs dataset");
  add_config_args(gen, gen_args);

  auto* trn = app.add_subcommand("train", "train a model; writes checkpoints, history and logs to the run directory");
  add_config_args(trn, train_args);

  std::string run_dir, data_dir, out_dir, embeddings_path, labels_path, out_file;
  auto* emb = app.add_subcommand("embed", "embed a dataset directory with a trained run");
  emb->add_option("--run", run_dir, "run directory written by train")->required()->check(CLI::ExistingDirectory);
  emb->add_option("--data", data_dir, "directory with view_<v>.csv files")->required()->check(CLI::ExistingDirectory);
  emb->add_option("-o,--output", out_dir, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "cluster embeddings with k-means and score them against labels");
  ev->add_option("--embeddings", embeddings_path, "embeddings CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--labels", labels_path, "labels file")->required()->check(CLI::ExistingFile);
  ev->add_option("-c,--config", eval_args.file, "run configuration (eval.* and seed keys)")->check(CLI::ExistingFile);
  ev->add_option("-s,--set", eval_args.overrides, "override one key")->take_all();
  ev->add_option("-r,--report", out_file, "report file to write")->required();

  std::string oracle_run, oracle_data, oracle_emb, oracle_out;
  auto* orc = app.add_subcommand("oracle-check", "compare a run's embedding with the exact eigenvectors of the mean Laplacian");
  orc->add_option("--run", oracle_run, "run directory written by train")->required()->check(CLI::ExistingDirectory);
  orc->add_option("--data", oracle_data, "directory with view_<v>.csv files")->required()->check(CLI::ExistingDirectory);
  orc->add_option("--embeddings", oracle_emb, "score this CSV instead of the run's own embedding")
      ->check(CLI::ExistingFile);
  orc->add_option("-o,--output", oracle_out, "diagnostics file to write")->required();

  auto* swp = app.add_subcommand("robustness-sweep", "train and score every contamination ratio and fusion mode");
  add_config_args(swp, sweep_args);

  app.add_subcommand("help-config", "list every configuration key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      specrage::cli::cmd_gen_data(build_config(gen_args), command_line);
    } else if (*trn) {
      const auto run = specrage::cli::cmd_train(build_config(train_args), command_line);
      const auto& last = run.history.epochs;
      std::cout << "epochs " << last.size();
      if (!last.empty()) std::cout << " final_val_loss " << last.back().val_loss;
      std::cout << "\n";
    } else if (*emb) {
      const auto e = specrage::cli::cmd_embed(run_dir, data_dir, out_dir, command_line);
      std::cout << "rows " << e.y.rows() << " columns " << e.y.cols() << "\n";
    } else if (*ev) {
      const auto r = specrage::cli::cmd_eval(embeddings_path, labels_path, build_config(eval_args), out_file);
      std::cout << "acc " << r.acc << " nmi " << r.nmi << " ari " << r.ari << "\n";
    } else if (*orc) {
      std::optional<std::filesystem::path> emb_path;
      if (!oracle_emb.empty()) emb_path = oracle_emb;
      const auto d = specrage::cli::cmd_oracle_check(oracle_run, oracle_data, emb_path, oracle_out);
      std::cout << "grassmann_dist_sq " << d.grassmann_dist_sq << "\n";
    } else if (*swp) {
      const auto r = specrage::cli::cmd_robustness_sweep(build_config(sweep_args), command_line);
      std::cout << r.table_csv();
    } else {
      std::cout << RunConfig::describe_keys();
    }
  } catch (const specrage::Error& e) {
    std::cerr << "error[" << specrage::to_string(e.kind()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
