#include "specrage_cli/run_config.hpp"

#include "specrage/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace specrage::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ParameterError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ParameterError("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ParameterError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParameterError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<Index> parse_dims(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  for (const auto& item : split_list(v)) out.push_back(parse_int(key, item));
  return out;
}

std::string real_str(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

std::string dims_str(const std::vector<Index>& d) {
  return join(d, [](Index x) { return std::to_string(x); });
}

struct KeySpec {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  const char* help;
};

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = [] {
    std::map<std::string, KeySpec> t;
    auto add = [&](const char* key, auto set, auto get, const char* help) { t[key] = KeySpec{set, get, help}; };
    using C = RunConfig;
    using S = const std::string&;

    add("data.source", [](C& c, S, S v) { c.data_source = v; }, [](const C& c) { return c.data_source; },
        "blobs (generate) or dir (read a gen-data output directory)");
    add("data.dir", [](C& c, S, S v) { c.data_dir = v; }, [](const C& c) { return c.data_dir.string(); },
        "directory with train/ val/ test/ subfolders for data.source = dir");
    add("data.standardize", [](C& c, S k, S v) { c.standardize = parse_bool(k, v); },
        [](const C& c) { return std::string(c.standardize ? "true" : "false"); },
        "z-score every feature with training-split statistics");
    add("blobs.n", [](C& c, S k, S v) { c.blobs_n = parse_int(k, v); },
        [](const C& c) { return std::to_string(c.blobs_n); }, "number of samples");
    add("blobs.clusters", [](C& c, S k, S v) { c.blobs_clusters = parse_int(k, v); },
        [](const C& c) { return std::to_string(c.blobs_clusters); }, "number of blobs");
    add("blobs.dim", [](C& c, S k, S v) { c.blobs_dim = parse_int(k, v); },
        [](const C& c) { return std::to_string(c.blobs_dim); }, "feature dimension of each view");
    add("blobs.std", [](C& c, S k, S v) { c.blobs_std = parse_real(k, v); },
        [](const C& c) { return real_str(c.blobs_std); }, "cluster standard deviation");
    add("contam.kind", [](C& c, S, S v) { c.contam_kind = v; }, [](const C& c) { return c.contam_kind; },
        "none, outlier or gaussian_noise");
    add("contam.ratio", [](C& c, S k, S v) { c.contam_ratio = parse_real(k, v); },
        [](const C& c) { return real_str(c.contam_ratio); }, "fraction of rows corrupted per target view");
    add("contam.views", [](C& c, S k, S v) { c.contam_views = parse_dims(k, v); },
        [](const C& c) { return dims_str(c.contam_views); }, "comma separated 0-based target views");
    add("contam.sigma", [](C& c, S k, S v) { c.contam_sigma = parse_real(k, v); },
        [](const C& c) { return real_str(c.contam_sigma); }, "noise std for gaussian_noise");
    add("split.test", [](C& c, S k, S v) { c.split_test = parse_real(k, v); },
        [](const C& c) { return real_str(c.split_test); }, "test fraction of all rows");
    add("split.val", [](C& c, S k, S v) { c.split_val = parse_real(k, v); },
        [](const C& c) { return real_str(c.split_val); }, "validation fraction of the non-test rows");
    add("affinity.neighbors", [](C& c, S k, S v) { c.affinity.neighbors = parse_int(k, v); },
        [](const C& c) { return std::to_string(c.affinity.neighbors); }, "l, neighbours per point");
    add("affinity.sigma",
        [](C& c, S k, S v) {
          if (v == "median")
            c.affinity.kernel_sigma.reset();
          else
            c.affinity.kernel_sigma = parse_real(k, v);
        },
        [](const C& c) { return c.affinity.kernel_sigma ? real_str(*c.affinity.kernel_sigma) : std::string("median"); },
        "median (global median scale per view) or a fixed kernel width");
    add("siamese.enabled", [](C& c, S k, S v) { c.siamese.enabled = parse_bool(k, v); },
        [](const C& c) { return std::string(c.siamese.enabled ? "true" : "false"); },
        "learn affinities with Siamese networks (false: raw features)");
    add("siamese.hidden", [](C& c, S k, S v) { c.siamese.hidden = parse_dims(k, v); },
        [](const C& c) { return dims_str(c.siamese.hidden); }, "hidden widths of each Siamese net");
    add("siamese.output", [](C& c, S k, S v) { c.siamese.output_dim = parse_int(k, v); },
        [](const C& c) { return std::to_string(c.siamese.output_dim); }, "Siamese embedding width");
    add("siamese.epochs", [](C& c, S k, S v) { c.siamese.epochs = static_cast<int>(parse_int(k, v)); },
        [](const C& c) { return std::to_string(c.siamese.epochs); }, "Siamese training epochs");
    add("siamese.lr", [](C& c, S k, S v) { c.siamese.learning_rate = parse_real(k, v); },
        [](const C& c) { return real_str(c.siamese.learning_rate); }, "Siamese Adam learning rate");
    add("siamese.margin", [](C& c, S k, S v) { c.siamese.margin = parse_real(k, v); },
        [](const C& c) { return real_str(c.siamese.margin); }, "contrastive margin");
    add("siamese.negatives", [](C& c, S k, S v) { c.siamese.negatives_per_anchor = parse_int(k, v); },
        [](const C& c) { return std::to_string(c.siamese.negatives_per_anchor); },
        "negatives per anchor, 0 = same as l");
    add("model.k", [](C& c, S k, S v) { c.model.k = parse_int(k, v); },
        [](const C& c) { return std::to_string(c.model.k); }, "output dimension");
    add("model.view_hidden", [](C& c, S k, S v) { c.model.view_hidden = parse_dims(k, v); },
        [](const C& c) { return dims_str(c.model.view_hidden); }, "hidden widths of each view net");
    add("model.fusion_hidden", [](C& c, S k, S v) { c.model.fusion_hidden = parse_dims(k, v); },
        [](const C& c) { return dims_str(c.model.fusion_hidden); }, "hidden widths of the weighting net");
    add("model.wide_backbone", [](C& c, S k, S v) { c.wide_backbone = parse_bool(k, v); },
        [](const C& c) { return std::string(c.wide_backbone ? "true" : "false"); },
        "use 1024,1024,512 view nets instead of model.view_hidden");
    add("model.temperature", [](C& c, S k, S v) { c.model.temperature = parse_real(k, v); },
        [](const C& c) { return real_str(c.model.temperature); }, "softmax temperature of the fusion weights");
    add("model.fusion", [](C& c, S, S v) { c.model.fusion_mode = parse_fusion_mode(v); },
        [](const C& c) { return to_string(c.model.fusion_mode); }, "weighting, simple_average, concat or linear");
    add("model.activation", [](C& c, S, S v) { c.model.activation = parse_activation(v); },
        [](const C& c) { return to_string(c.model.activation); }, "relu or tanh hidden units");
    add("train.batch", [](C& c, S k, S v) { c.train.batch_size = parse_int(k, v); },
        [](const C& c) { return std::to_string(c.train.batch_size); }, "mini-batch size m");
    add("train.epochs", [](C& c, S k, S v) { c.train.epochs = static_cast<int>(parse_int(k, v)); },
        [](const C& c) { return std::to_string(c.train.epochs); }, "maximum epochs T");
    add("train.grassmann", [](C& c, S k, S v) { c.track_grassmann = parse_bool(k, v); },
        [](const C& c) { return std::string(c.track_grassmann ? "true" : "false"); },
        "record the per-epoch Grassmann distance to the oracle on the validation split");
    add("lr.initial", [](C& c, S k, S v) { c.train.lr.initial_lr = parse_real(k, v); },
        [](const C& c) { return real_str(c.train.lr.initial_lr); }, "initial learning rate");
    add("lr.decay", [](C& c, S k, S v) { c.train.lr.decay_factor = parse_real(k, v); },
        [](const C& c) { return real_str(c.train.lr.decay_factor); }, "plateau decay factor");
    add("lr.patience", [](C& c, S k, S v) { c.train.lr.patience_epochs = static_cast<int>(parse_int(k, v)); },
        [](const C& c) { return std::to_string(c.train.lr.patience_epochs); }, "epochs without improvement");
    add("lr.floor", [](C& c, S k, S v) { c.train.lr.floor_lr = parse_real(k, v); },
        [](const C& c) { return real_str(c.train.lr.floor_lr); }, "stop once the rate drops below this");
    add("eval.clusters", [](C& c, S k, S v) { c.clusters = parse_int(k, v); },
        [](const C& c) { return std::to_string(c.clusters); }, "k-means clusters, 0 = number of label values");
    add("eval.restarts", [](C& c, S k, S v) { c.eval_restarts = static_cast<int>(parse_int(k, v)); },
        [](const C& c) { return std::to_string(c.eval_restarts); }, "k-means restarts");
    add("sweep.ratios",
        [](C& c, S k, S v) {
          c.sweep_ratios.clear();
          for (const auto& item : split_list(v)) c.sweep_ratios.push_back(parse_real(k, item));
        },
        [](const C& c) { return join(c.sweep_ratios, real_str); }, "contamination ratios of the sweep");
    add("sweep.modes",
        [](C& c, S, S v) {
          c.sweep_modes.clear();
          for (const auto& item : split_list(v)) c.sweep_modes.push_back(parse_fusion_mode(item));
        },
        [](const C& c) { return join(c.sweep_modes, [](FusionMode m) { return to_string(m); }); },
        "fusion modes of the sweep");
    add("sweep.repeats", [](C& c, S k, S v) { c.sweep_repeats = static_cast<int>(parse_int(k, v)); },
        [](const C& c) { return std::to_string(c.sweep_repeats); }, "seeds per sweep cell");
    add("seed", [](C& c, S k, S v) { c.seed = parse_u64(k, v); }, [](const C& c) { return std::to_string(c.seed); },
        "master seed");
    add("output", [](C& c, S, S v) { c.output = v; }, [](const C& c) { return c.output.string(); },
        "run directory");
    return t;
  }();
  return table;
}

}  // namespace

RunConfig::RunConfig() {
  model.k = 4;
  model.view_hidden = {128, 128, 64};
  model.fusion_hidden = {64, 64};
  train.batch_size = 128;
  train.epochs = 300;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = key_table();
  const auto it = table.find(key);
  if (it == table.end()) throw ParameterError("config: unknown key '" + key + "'");
  it->second.set(*this, key, value);
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      c.set(key, value);
    } catch (const ParameterError& e) {
      throw ParameterError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.source_text = text;
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ConfigEcho RunConfig::resolved() const {
  ConfigEcho out;
  for (const auto& [key, spec] : key_table()) out[key] = spec.get(*this);
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [key, spec] : key_table()) out.push_back(key);
  return out;
}

std::string RunConfig::describe_keys() {
  const RunConfig defaults;
  std::ostringstream out;
  for (const auto& [key, spec] : key_table())
    out << key << " = " << spec.get(defaults) << "\n    " << spec.help << "\n";
  return out.str();
}

void RunConfig::validate() const {
  if (data_source != "blobs" && data_source != "dir")
    throw ParameterError("config: data.source must be blobs or dir");
  if (data_source == "dir" && data_dir.empty()) throw ParameterError("config: data.source = dir needs data.dir");
  if (data_source == "blobs") {
    if (blobs_clusters < 2 || blobs_n < blobs_clusters) throw ParameterError("config: need blobs.n >= blobs.clusters >= 2");
    if (blobs_dim < 2) throw ParameterError("config: blobs.dim must be >= 2");
    if (!(blobs_std > 0.0)) throw ParameterError("config: blobs.std must be positive");
  }
  if (contam_kind != "none" && contam_kind != "outlier" && contam_kind != "gaussian_noise")
    throw ParameterError("config: contam.kind must be none, outlier or gaussian_noise");
  if (!(contam_ratio >= 0.0 && contam_ratio <= 1.0)) throw ParameterError("config: contam.ratio must lie in [0, 1]");
  if (!(contam_sigma > 0.0)) throw ParameterError("config: contam.sigma must be positive");
  for (Index v : contam_views)
    if (v < 0) throw ParameterError("config: contam.views are 0-based and non-negative");
  if (!(split_test > 0.0 && split_test < 1.0) || !(split_val > 0.0 && split_val < 1.0))
    throw ParameterError("config: split fractions must lie in (0, 1)");
  affinity.validate();
  if (siamese.output_dim < 1 || siamese.epochs < 0 || !(siamese.learning_rate > 0.0) || !(siamese.margin > 0.0))
    throw ParameterError("config: invalid siamese settings");
  if (model.k < 1) throw ParameterError("config: model.k must be >= 1");
  if (!(model.temperature > 0.0)) throw ParameterError("config: model.temperature must be positive");
  if (train.batch_size <= affinity.neighbors) throw ParameterError("config: train.batch must exceed affinity.neighbors");
  if (train.epochs < 0) throw ParameterError("config: train.epochs must be >= 0");
  train.lr.validate();
  if (clusters < 0) throw ParameterError("config: eval.clusters must be >= 0");
  if (eval_restarts < 1) throw ParameterError("config: eval.restarts must be >= 1");
  if (sweep_repeats < 1) throw ParameterError("config: sweep.repeats must be >= 1");
  for (double r : sweep_ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw ParameterError("config: sweep.ratios must lie in [0, 1]");
  if (sweep_modes.empty()) throw ParameterError("config: sweep.modes is empty");
  if (output.empty()) throw ParameterError("config: output must be set");
}

}  // namespace specrage::cli
