#include "pfan/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pfan/error.hpp"

namespace pfan {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& expected, const std::string& value) {
  throw ConfigError("key '" + key + "': expected " + expected + ", got '" + value + "'");
}

Index parse_index(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used == v.size()) return Index(x);
  } catch (const std::exception&) {
  }
  bad(key, "an integer", v);
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto x = std::stoull(v, &used);
    if (used == v.size() && !v.empty() && v[0] != '-') return x;
  } catch (const std::exception&) {
  }
  bad(key, "a non-negative integer", v);
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  bad(key, "a real number", v);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, "a boolean (true|false)", v);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(trim(item));
  return out;
}

std::vector<Index> parse_index_list(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  for (const auto& item : split_list(v)) {
    if (item.empty()) bad(key, "a comma-separated list of integers", v);
    out.push_back(parse_index(key, item));
  }
  if (out.empty()) bad(key, "a comma-separated list of integers", v);
  return out;
}

// "8,16" (square) or "8x12,16x16".
std::vector<std::pair<Index, Index>> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::pair<Index, Index>> out;
  for (const auto& item : split_list(v)) {
    const auto x = item.find('x');
    try {
      if (x == std::string::npos) {
        const Index n = parse_index(key, item);
        out.emplace_back(n, n);
      } else {
        out.emplace_back(parse_index(key, item.substr(0, x)), parse_index(key, item.substr(x + 1)));
      }
    } catch (const ConfigError&) {
      bad(key, "a list of sizes such as 8,16 or 8x12", v);
    }
  }
  if (out.empty()) bad(key, "a list of sizes such as 8,16 or 8x12", v);
  return out;
}

template <typename Fn>
auto rethrow_as_config(const std::string& key, const std::string& value, Fn fn) {
  try {
    return fn();
  } catch (const ValueError& e) {
    throw ConfigError("key '" + key + "': " + e.what() + " (got '" + value + "')");
  }
}

std::string join(const std::vector<Index>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::string real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct KeyDef {
  ConfigKey doc;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define PFAN_INDEX_KEY(NAME, FIELD, HELP)                                                                   \
  KeyDef {                                                                                                  \
    {NAME, HELP}, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_index(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                                          \
  }
#define PFAN_REAL_KEY(NAME, FIELD, HELP)                                                                    \
  KeyDef {                                                                                                  \
    {NAME, HELP}, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_real(k, v); }, \
        [](const RunConfig& c) { return real(c.FIELD); }                                                    \
  }
#define PFAN_PATH_KEY(NAME, FIELD, HELP)                                                         \
  KeyDef {                                                                                       \
    {NAME, HELP}, [](RunConfig& c, const std::string&, const std::string& v) { c.FIELD = v; }, \
        [](const RunConfig& c) { return c.FIELD.string(); }                                      \
  }

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      {{"preset", "model/training baseline applied before other keys: default | desk"},
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "default" && v != "desk") bad(k, "default or desk", v);
         c.preset = v;
       },
       [](const RunConfig& c) { return c.preset; }},
      {{"seed", "seed of every random choice"},
       [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_seed(k, v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      PFAN_PATH_KEY("out", out, "output directory"),
      PFAN_PATH_KEY("clean_dir", clean_dir, "directory of clean PNG images (synth)"),
      PFAN_PATH_KEY("manifest", manifest, "dataset manifest (train, eval)"),
      PFAN_PATH_KEY("weights", weights, "generator weights file (desmoke, eval)"),
      PFAN_PATH_KEY("input", input, "input PNG (desmoke)"),
      PFAN_PATH_KEY("output", output, "output PNG file name inside out (desmoke)"),
      PFAN_INDEX_KEY("synth.n_pairs", n_pairs, "number of smoke pairs to generate"),
      {{"synth.tier", "smoke density tier: light | medium | heavy | random"},
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.tier = rethrow_as_config(k, v, [&] { return parse_density_tier(v); });
       },
       [](const RunConfig& c) { return std::string(to_string(c.tier)); }},
      {{"eval.split", "manifest split to evaluate: train | val | test"},
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "train" && v != "val" && v != "test") bad(k, "train, val or test", v);
         c.split = v;
       },
       [](const RunConfig& c) { return c.split; }},
      PFAN_INDEX_KEY("model.base_channels", model.base_channels, "feature width C"),
      PFAN_INDEX_KEY("model.n_mbi", model.n_mbi, "number of MBI blocks"),
      PFAN_INDEX_KEY("model.n_lat", model.n_lat, "number of LAT blocks"),
      {{"model.mbi_kernels", "comma-separated odd kernel sizes of the MBI branches"},
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.mbi_kernels = parse_index_list(k, v); },
       [](const RunConfig& c) { return join(c.model.mbi_kernels); }},
      PFAN_INDEX_KEY("model.mbi_groups", model.mbi_groups, "groups of the MBI convolutions"),
      PFAN_INDEX_KEY("model.mbi_expand_ratio", model.mbi_expand_ratio, "MBI pointwise expansion ratio"),
      PFAN_INDEX_KEY("model.lat_window", model.lat_window, "LAT window side"),
      PFAN_INDEX_KEY("model.leff_expand_ratio", model.leff_expand_ratio, "LEFF hidden expansion ratio"),
      {{"model.global_skip", "add the input image to the generator output: true | false"},
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.use_global_input_skip = parse_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.model.use_global_input_skip ? "true" : "false"); }},
      {{"model.mbi_residual", "residual connection around each MBI block: true | false"},
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.mbi_residual = parse_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.model.mbi_residual ? "true" : "false"); }},
      PFAN_INDEX_KEY("model.disc_layers", model.disc_layers, "stride-2 layers of the PatchGAN"),
      PFAN_REAL_KEY("train.lr", train.lr, "Adam learning rate"),
      PFAN_REAL_KEY("train.beta1", train.beta1, "Adam beta1"),
      PFAN_REAL_KEY("train.beta2", train.beta2, "Adam beta2"),
      PFAN_INDEX_KEY("train.batch", train.batch, "pairs per batch"),
      PFAN_INDEX_KEY("train.crop", train.crop, "random crop side"),
      PFAN_INDEX_KEY("train.d_warmup_epochs", train.d_warmup_epochs, "discriminator-only epochs before GAN steps"),
      PFAN_INDEX_KEY("train.epochs", train.epochs, "alternating epochs"),
      PFAN_INDEX_KEY("train.max_steps", train.max_steps, "cap on alternating steps, 0 = none"),
      PFAN_REAL_KEY("train.lambda_l1", train.lambda_l1, "weight of the L1 term in the generator loss"),
      {{"train.adv_loss", "adversarial loss: least_squares | cross_entropy"},
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.adv_loss = rethrow_as_config(k, v, [&] { return parse_adv_loss(v); });
       },
       [](const RunConfig& c) { return std::string(to_string(c.train.adv_loss)); }},
      PFAN_INDEX_KEY("train.checkpoint_every", train.checkpoint_every, "alternating steps between checkpoints, 0 = final only"),
      {{"bench.sizes", "attention map sizes, e.g. 8,16,32,64 or 8x12"},
       [](RunConfig& c, const std::string& k, const std::string& v) { c.bench_sizes = parse_sizes(k, v); },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.bench_sizes.size(); ++i)
           s += (i ? "," : "") + std::to_string(c.bench_sizes[i].first) + "x" + std::to_string(c.bench_sizes[i].second);
         return s;
       }},
      PFAN_INDEX_KEY("bench.channels", bench_channels, "feature width C of the benchmarked attention"),
      PFAN_INDEX_KEY("bench.reps", bench_reps, "timed repetitions per kernel and size (>= 5)"),
  };
  return defs;
}

#undef PFAN_INDEX_KEY
#undef PFAN_REAL_KEY
#undef PFAN_PATH_KEY

const KeyDef& find_key(const std::string& key) {
  for (const auto& d : key_defs())
    if (d.doc.name == key) return d;
  throw ConfigError("unknown key '" + key + "'");
}

void apply_preset(RunConfig& c, const std::string& preset) {
  c.preset = preset;
  if (preset == "desk") {
    c.model = PfanConfig::desk();
    c.train = TrainConfig::desk();
  } else {
    c.model = PfanConfig{};
    c.train = TrainConfig{};
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& d : key_defs()) out.push_back(d.doc);
    return out;
  }();
  return keys;
}

Settings parse_config_text(std::string_view text, std::string_view origin) {
  Settings out;
  std::istringstream is{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(body.substr(0, eq)), value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": missing key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

Settings read_config_file(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open config file " + file.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), file.string());
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, key, value);
}

RunConfig resolve_config(const Settings& file, const Settings& cli) {
  RunConfig cfg;
  std::string preset = "default";
  for (const auto* layer : {&file, &cli})
    for (const auto& [k, v] : *layer) {
      find_key(k);
      if (k == "preset") {
        apply_setting(cfg, k, v);
        preset = v;
      }
    }
  apply_preset(cfg, preset);
  for (const auto* layer : {&file, &cli})
    for (const auto& [k, v] : *layer)
      if (k != "preset") apply_setting(cfg, k, v);
  cfg.train.seed = cfg.seed;

  try {
    cfg.model.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model.") + e.what());
  }
  cfg.train.validate(cfg.model);
  if (cfg.n_pairs < 1) throw ConfigError("key 'synth.n_pairs': must be >= 1");
  if (cfg.bench_channels < 2) throw ConfigError("key 'bench.channels': must be >= 2");
  if (cfg.bench_reps < 5) throw ConfigError("key 'bench.reps': must be >= 5");
  for (const auto& [h, w] : cfg.bench_sizes)
    if (h < 1 || w < 1) throw ConfigError("key 'bench.sizes': extents must be positive");
  return cfg;
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& d : key_defs()) out += d.doc.name + " = " + d.get(cfg) + "\n";
  return out;
}

}  // namespace pfan
