#pragma once

#include "specrage/affinity.hpp"
#include "specrage/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace specrage {

using ConfigEcho = std::map<std::string, std::string>;

struct Checkpoint {
  SpecRageModel model;
  ConfigEcho config;
};

// Text checkpoints built from Mlp blocks; see docs/FORMATS.md.
void write_model(std::ostream& out, const SpecRageModel& model, const ConfigEcho& config = {});
Checkpoint read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const SpecRageModel& model, const ConfigEcho& config = {});
Checkpoint load_model(const std::filesystem::path& path);

// Siamese networks, kernel scales and the neighbour settings.
void write_affinity(std::ostream& out, const AffinityContext& ctx);
AffinityContext read_affinity(std::istream& in);
void save_affinity(const std::filesystem::path& path, const AffinityContext& ctx);
AffinityContext load_affinity(const std::filesystem::path& path);

class ModelIo {
 public:
  static SpecRageModel assemble(const ModelConfig& config, std::vector<Mlp> view_nets, Mlp fusion_net,
                                Mlp linear_map, Matrix ortho_weights, bool frozen);
};

}  // namespace specrage
