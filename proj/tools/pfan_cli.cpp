// pfan command-line driver: synth, train, desmoke, eval, bench, params.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "pfan/arch.hpp"
#include "pfan/bench.hpp"
#include "pfan/config.hpp"
#include "pfan/dataset.hpp"
#include "pfan/error.hpp"
#include "pfan/evaluate.hpp"
#include "pfan/train.hpp"

namespace fs = std::filesystem;
using namespace pfan;

namespace {

int exit_code(std::string_view kind) {
  static const std::map<std::string_view, int> codes{{"config", 2}, {"io", 3},      {"decode", 4},
                                                     {"format", 5}, {"shape", 6},   {"value", 7},
                                                     {"dataset", 8}, {"resource", 9}};
  const auto it = codes.find(kind);
  return it == codes.end() ? 1 : it->second;
}

// Flags shared by every subcommand plus the subcommand's own key flags.
struct Command {
  CLI::App* app = nullptr;
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;  // key -> value as typed

  void key_flag(const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { flag_values[key] = v; }, help + " [" + key + "]");
  }
};

Command make_command(CLI::App& root, const std::string& name, const std::string& description) {
  Command c;
  c.app = root.add_subcommand(name, description);
  c.app->footer(
      "Settings resolve as: command-line flag > --config file > built-in default.\n"
      "Any configuration key can also be given with --set KEY=VALUE.");
  return c;
}

void add_common(Command& c) {
  c.app->add_option("--config", c.config_file, "key = value configuration file");
  c.key_flag("--seed", "seed", "seed of every random choice");
  c.app->add_option("--set", c.sets, "override one configuration key, KEY=VALUE (repeatable)");
}

RunConfig resolve(const Command& c) {
  Settings file;
  if (!c.config_file.empty()) file = read_config_file(c.config_file);
  Settings cli;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    cli.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : c.flag_values) cli.emplace_back(k, v);
  return resolve_config(file, cli);
}

const fs::path& require_path(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError("key '" + std::string(key) + "' is required");
  return p;
}

void make_out_dir(const fs::path& out) {
  try {
    fs::create_directories(out);
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create output directory " + out.string() + ": " + e.what());
  }
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream os(file);
  if (!os || !(os << text)) throw IoError("cannot write " + file.string());
}

Generator<float> load_generator(const RunConfig& cfg) {
  Generator<float> g(cfg.model, cfg.seed);
  load_weights_into(g.params(), require_path(cfg.weights, "weights"));
  return g;
}

int cmd_synth(const RunConfig& cfg) {
  const fs::path& out = require_path(cfg.out, "out");
  make_out_dir(out);
  const Manifest m = generate_dataset({require_path(cfg.clean_dir, "clean_dir"), out, cfg.n_pairs, cfg.seed, cfg.tier});
  std::cout << "pairs " << m.rows.size() << " train " << m.rows_in("train").size() << " val "
            << m.rows_in("val").size() << " test " << m.rows_in("test").size() << " manifest "
            << (out / kManifestName).string() << '\n';
  return 0;
}

int cmd_train(RunConfig cfg) {
  const fs::path& out = require_path(cfg.out, "out");
  make_out_dir(out);
  write_text(out / "run_config.txt", dump_config(cfg));
  cfg.train.out_dir = out;
  const TrainResult r = train(read_manifest(require_path(cfg.manifest, "manifest")), cfg.model, cfg.train);
  const auto& last = r.log.back();
  std::cout << "steps " << r.log.size() << " loss_D " << last.loss_d << " loss_G " << last.loss_g << " l1 "
            << last.l1 << " weights " << (out / "generator.pfw").string() << '\n';
  return 0;
}

int cmd_desmoke(const RunConfig& cfg) {
  const fs::path& out = require_path(cfg.out, "out");
  const fs::path& input = require_path(cfg.input, "input");
  const Generator<float> g = load_generator(cfg);
  const Image img = read_png(input);
  make_out_dir(out);
  const fs::path target = out / (cfg.output.empty() ? input.filename() : cfg.output.filename());
  write_png(target, desmoke(g, img));
  std::cout << target.string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, bool identity) {
  const fs::path& out = require_path(cfg.out, "out");
  const Manifest m = read_manifest(require_path(cfg.manifest, "manifest"));
  std::optional<Generator<float>> g;
  if (identity) {
    if (!cfg.model.use_global_input_skip) throw ConfigError("--identity requires model.global_skip = true");
    g.emplace(cfg.model, cfg.seed);
    g->params().fill(0.0f);
  } else {
    g.emplace(load_generator(cfg));
  }
  const MetricsReport report = evaluate_dataset(*g, m, cfg.split);
  make_out_dir(out);
  write_text(out / "metrics.json", report.to_json() + "\n");
  write_text(out / "metrics.txt", report.to_table());
  std::cout << report.to_table();
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  const fs::path& out = require_path(cfg.out, "out");
  const auto records = run_attention_bench(cfg.bench_sizes, cfg.bench_channels, cfg.bench_reps, cfg.seed);
  make_out_dir(out);
  std::string jsonl;
  for (const auto& r : records) jsonl += r.to_json() + "\n";
  write_text(out / "bench.jsonl", jsonl);
  const std::string table = bench_table(records);
  write_text(out / "bench.txt", table);
  std::cout << table;
  return 0;
}

int cmd_params(const RunConfig& cfg) {
  const Generator<float> g(cfg.model, cfg.seed);
  const Index n = count_params(g.params());
  if (!cfg.out.empty()) {
    make_out_dir(cfg.out);
    write_text(cfg.out / "params.txt", std::to_string(n) + "\n");
  }
  std::cout << n << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pfan: smoke synthesis, training, desmoking, evaluation and attention benchmarks"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  Command synth = make_command(app, "synth", "generate a paired smoke dataset from clean PNG images");
  add_common(synth);
  synth.key_flag("--out", "out", "output directory");
  synth.key_flag("--clean-dir", "clean_dir", "directory of clean PNG images");
  synth.key_flag("--n-pairs", "synth.n_pairs", "number of pairs");
  synth.key_flag("--tier", "synth.tier", "density tier: light | medium | heavy | random");

  Command train_cmd = make_command(app, "train", "train generator and PatchGAN on a manifest's train split");
  add_common(train_cmd);
  train_cmd.key_flag("--out", "out", "output directory for weights, checkpoints and log");
  train_cmd.key_flag("--manifest", "manifest", "dataset manifest");
  train_cmd.key_flag("--preset", "preset", "default | desk");
  train_cmd.key_flag("--epochs", "train.epochs", "alternating epochs");
  train_cmd.key_flag("--max-steps", "train.max_steps", "cap on alternating steps");
  train_cmd.key_flag("--crop", "train.crop", "random crop side");
  train_cmd.key_flag("--batch", "train.batch", "pairs per batch");

  Command desmoke_cmd = make_command(app, "desmoke", "run a trained generator on one PNG");
  add_common(desmoke_cmd);
  desmoke_cmd.key_flag("--out", "out", "output directory");
  desmoke_cmd.key_flag("--input", "input", "input PNG");
  desmoke_cmd.key_flag("--weights", "weights", "generator weights");
  desmoke_cmd.key_flag("--output", "output", "output file name, defaults to the input's name");
  desmoke_cmd.key_flag("--preset", "preset", "default | desk, must match the weights");

  Command eval_cmd = make_command(app, "eval", "score a generator on a manifest split (PSNR, SSIM, CIEDE2000)");
  add_common(eval_cmd);
  eval_cmd.key_flag("--out", "out", "output directory for metrics.json and metrics.txt");
  eval_cmd.key_flag("--manifest", "manifest", "dataset manifest");
  eval_cmd.key_flag("--weights", "weights", "generator weights");
  eval_cmd.key_flag("--split", "eval.split", "train | val | test");
  eval_cmd.key_flag("--preset", "preset", "default | desk, must match the weights");
  bool identity = false;
  eval_cmd.app->add_flag("--identity", identity, "use an all-zero generator with the global skip instead of weights");

  Command bench_cmd = make_command(app, "bench", "time and count SEA versus full attention");
  add_common(bench_cmd);
  bench_cmd.key_flag("--out", "out", "output directory for bench.jsonl and bench.txt");
  bench_cmd.key_flag("--sizes", "bench.sizes", "map sizes, e.g. 8,16,32,64 or 8x12");
  bench_cmd.key_flag("--channels", "bench.channels", "feature width C");
  bench_cmd.key_flag("--reps", "bench.reps", "timed repetitions (>= 5)");

  Command params_cmd = make_command(app, "params", "print the generator parameter count");
  add_common(params_cmd);
  params_cmd.key_flag("--out", "out", "optional output directory for params.txt");
  params_cmd.key_flag("--preset", "preset", "default | desk");

  std::string keys_help = "Configuration keys:\n";
  for (const auto& k : config_keys()) keys_help += "  " + k.name + "  " + k.help + "\n";
  app.footer(keys_help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "pfan: error: usage: " << e.what() << '\n';
    return 64;
  }

  try {
    if (synth.app->parsed()) return cmd_synth(resolve(synth));
    if (train_cmd.app->parsed()) return cmd_train(resolve(train_cmd));
    if (desmoke_cmd.app->parsed()) return cmd_desmoke(resolve(desmoke_cmd));
    if (eval_cmd.app->parsed()) return cmd_eval(resolve(eval_cmd), identity);
    if (bench_cmd.app->parsed()) return cmd_bench(resolve(bench_cmd));
    if (params_cmd.app->parsed()) return cmd_params(resolve(params_cmd));
  } catch (const Error& e) {
    std::cerr << "pfan: error: " << e.kind() << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "pfan: error: internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
