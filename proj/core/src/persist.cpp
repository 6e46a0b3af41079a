#include "specrage/persist.hpp"

#include "specrage/error.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace specrage {

namespace {

std::string token(std::istream& in, const char* what) {
  std::string t;
  if (!(in >> t)) throw FormatError(std::string("checkpoint: unexpected end of input reading ") + what);
  return t;
}

void keyword(std::istream& in, const std::string& expected) {
  const std::string t = token(in, expected.c_str());
  if (t != expected) throw FormatError("checkpoint: expected '" + expected + "', found '" + t + "'");
}

long long integer(std::istream& in, const char* what) {
  const std::string t = token(in, what);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw FormatError(std::string("checkpoint: bad integer for ") + what + ": '" + t + "'");
  return v;
}

double real(std::istream& in, const char* what) {
  const std::string t = token(in, what);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw FormatError(std::string("checkpoint: bad number for ") + what + ": '" + t + "'");
  return v;
}

void put_real(std::ostream& out, double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

void put_dims(std::ostream& out, const char* key, const std::vector<Index>& dims) {
  out << key << ' ' << dims.size();
  for (Index d : dims) out << ' ' << d;
  out << '\n';
}

std::vector<Index> get_dims(std::istream& in, const char* key) {
  keyword(in, key);
  const long long count = integer(in, key);
  if (count < 0) throw FormatError(std::string("checkpoint: negative count for ") + key);
  std::vector<Index> dims;
  for (long long i = 0; i < count; ++i) dims.push_back(integer(in, key));
  return dims;
}

void write_echo(std::ostream& out, const ConfigEcho& config) {
  out << "config " << config.size() << '\n';
  for (const auto& [key, value] : config) {
    if (key.empty() || key.find_first_of(" \t\n") != std::string::npos)
      throw ParameterError("config echo key '" + key + "' must be a single token");
    if (value.find('\n') != std::string::npos) throw ParameterError("config echo value for '" + key + "' has a newline");
    out << key << ' ' << value << '\n';
  }
}

ConfigEcho read_echo(std::istream& in) {
  keyword(in, "config");
  const long long count = integer(in, "config count");
  ConfigEcho config;
  for (long long i = 0; i < count; ++i) {
    const std::string key = token(in, "config key");
    std::string value;
    std::getline(in, value);
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    config[key] = value;
  }
  return config;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

SpecRageModel ModelIo::assemble(const ModelConfig& config, std::vector<Mlp> view_nets, Mlp fusion_net, Mlp linear_map,
                                Matrix ortho_weights, bool frozen) {
  config.validate();
  SpecRageModel model;
  model.config_ = config;
  if (view_nets.size() != config.view_input_dims.size()) throw FormatError("checkpoint: view net count mismatch");
  for (std::size_t v = 0; v < view_nets.size(); ++v)
    if (view_nets[v].input_dim() != config.view_input_dims[v] || view_nets[v].output_dim() != config.k)
      throw FormatError("checkpoint: view net " + std::to_string(v) + " has the wrong shape");
  model.view_nets_ = std::move(view_nets);
  model.fusion_net_ = std::move(fusion_net);
  model.linear_map_ = std::move(linear_map);
  if (config.fusion_mode == FusionMode::weighting &&
      model.fusion_net_.output_dim() != static_cast<Index>(config.view_input_dims.size()))
    throw FormatError("checkpoint: fusion net width does not match the view count");
  if (ortho_weights.size() > 0 &&
      (ortho_weights.rows() != model.output_dim() || ortho_weights.cols() != model.output_dim()))
    throw FormatError("checkpoint: ortho weights have the wrong shape");
  model.ortho_weights_ = std::move(ortho_weights);
  if (frozen && model.ortho_weights_.size() == 0) throw FormatError("checkpoint: frozen model without ortho weights");
  model.frozen_ = frozen;
  return model;
}

void write_model(std::ostream& out, const SpecRageModel& model, const ConfigEcho& config) {
  const auto& c = model.config();
  out << "specrage-model 1\n";
  write_echo(out, config);
  put_dims(out, "view_dims", c.view_input_dims);
  out << "k " << c.k << '\n';
  put_dims(out, "view_hidden", c.view_hidden);
  put_dims(out, "fusion_hidden", c.fusion_hidden);
  out << "temperature ";
  put_real(out, c.temperature);
  out << "\nfusion_mode " << to_string(c.fusion_mode) << '\n';
  out << "activation " << to_string(c.activation) << '\n';
  out << "seed " << c.seed << '\n';
  out << "frozen " << (model.frozen() ? 1 : 0) << '\n';
  for (std::size_t v = 0; v < model.view_nets().size(); ++v) {
    out << "net view " << v << '\n';
    model.view_nets()[v].write(out);
  }
  if (c.fusion_mode == FusionMode::weighting) {
    out << "net fusion\n";
    model.fusion_net().write(out);
  }
  if (c.fusion_mode == FusionMode::linear) {
    out << "net linear\n";
    model.linear_map().write(out);
  }
  const Matrix& p = model.ortho_weights();
  out << "ortho " << p.rows() << ' ' << p.cols() << '\n';
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) {
      if (j) out << ' ';
      put_real(out, p(i, j));
    }
    out << '\n';
  }
  out << "end specrage-model\n";
  if (!out) throw IoError("failed writing model checkpoint");
}

Checkpoint read_model(std::istream& in) {
  keyword(in, "specrage-model");
  if (integer(in, "version") != 1) throw FormatError("checkpoint: unsupported model version");
  Checkpoint cp;
  cp.config = read_echo(in);
  ModelConfig c;
  c.view_input_dims = get_dims(in, "view_dims");
  keyword(in, "k");
  c.k = integer(in, "k");
  c.view_hidden = get_dims(in, "view_hidden");
  c.fusion_hidden = get_dims(in, "fusion_hidden");
  keyword(in, "temperature");
  c.temperature = real(in, "temperature");
  keyword(in, "fusion_mode");
  try {
    c.fusion_mode = parse_fusion_mode(token(in, "fusion_mode"));
    keyword(in, "activation");
    c.activation = parse_activation(token(in, "activation"));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  keyword(in, "seed");
  c.seed = static_cast<std::uint64_t>(integer(in, "seed"));
  keyword(in, "frozen");
  const bool frozen = integer(in, "frozen") != 0;

  std::vector<Mlp> views;
  for (std::size_t v = 0; v < c.view_input_dims.size(); ++v) {
    keyword(in, "net");
    keyword(in, "view");
    if (integer(in, "view index") != static_cast<long long>(v)) throw FormatError("checkpoint: view nets out of order");
    views.push_back(Mlp::read(in));
  }
  Mlp fusion, linear;
  if (c.fusion_mode == FusionMode::weighting) {
    keyword(in, "net");
    keyword(in, "fusion");
    fusion = Mlp::read(in);
  }
  if (c.fusion_mode == FusionMode::linear) {
    keyword(in, "net");
    keyword(in, "linear");
    linear = Mlp::read(in);
  }
  keyword(in, "ortho");
  const Index rows = integer(in, "ortho rows");
  const Index cols = integer(in, "ortho cols");
  if (rows < 0 || cols < 0) throw FormatError("checkpoint: negative ortho shape");
  Matrix p(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) p(i, j) = real(in, "ortho weight");
  keyword(in, "end");
  keyword(in, "specrage-model");
  try {
    cp.model = ModelIo::assemble(c, std::move(views), std::move(fusion), std::move(linear), std::move(p), frozen);
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return cp;
}

void save_model(const std::filesystem::path& path, const SpecRageModel& model, const ConfigEcho& config) {
  auto out = open_out(path);
  write_model(out, model, config);
}

Checkpoint load_model(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_model(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_affinity(std::ostream& out, const AffinityContext& ctx) {
  out << "specrage-affinity 1\n";
  out << "neighbors " << ctx.config.neighbors << '\n';
  out << "kernel_sigma ";
  if (ctx.config.kernel_sigma)
    put_real(out, *ctx.config.kernel_sigma);
  else
    out << "none";
  out << "\nviews " << ctx.views.size() << '\n';
  for (std::size_t v = 0; v < ctx.views.size(); ++v) {
    const auto& s = ctx.views[v];
    out << "view " << v << " scale ";
    put_real(out, s.scale());
    out << " trained " << (s.trained() ? 1 : 0) << " network " << (s.has_network() ? 1 : 0) << '\n';
    if (s.has_network()) s.network().write(out);
  }
  out << "end specrage-affinity\n";
  if (!out) throw IoError("failed writing affinity context");
}

AffinityContext read_affinity(std::istream& in) {
  keyword(in, "specrage-affinity");
  if (integer(in, "version") != 1) throw FormatError("affinity: unsupported version");
  AffinityContext ctx;
  keyword(in, "neighbors");
  ctx.config.neighbors = integer(in, "neighbors");
  keyword(in, "kernel_sigma");
  const std::string sigma = token(in, "kernel_sigma");
  if (sigma != "none") {
    std::istringstream one(sigma);
    ctx.config.kernel_sigma = real(one, "kernel_sigma");
  }
  keyword(in, "views");
  const long long count = integer(in, "view count");
  for (long long v = 0; v < count; ++v) {
    keyword(in, "view");
    if (integer(in, "view index") != v) throw FormatError("affinity: views out of order");
    keyword(in, "scale");
    const double scale = real(in, "scale");
    keyword(in, "trained");
    const bool trained = integer(in, "trained") != 0;
    keyword(in, "network");
    std::optional<Mlp> net;
    if (integer(in, "network") != 0) net = Mlp::read(in);
    ctx.views.push_back(SiameseContext::from_parts(std::move(net), scale, trained));
  }
  keyword(in, "end");
  keyword(in, "specrage-affinity");
  try {
    ctx.config.validate();
  } catch (const ParameterError& e) {
    throw FormatError(std::string("affinity: ") + e.what());
  }
  return ctx;
}

void save_affinity(const std::filesystem::path& path, const AffinityContext& ctx) {
  auto out = open_out(path);
  write_affinity(out, ctx);
}

AffinityContext load_affinity(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_affinity(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace specrage
