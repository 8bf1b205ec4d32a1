#include "flowmatch/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowmatch/errors.hpp"

namespace flowmatch {

namespace {

using nlohmann::json;

json params_to_json(const ParameterSet& params) {
  json layers = json::array();
  for (const Layer& l : params) {
    json w = json::array();
    for (Index i = 0; i < l.weight.rows(); ++i)
      for (Index j = 0; j < l.weight.cols(); ++j) w.push_back(l.weight(i, j));
    json b = json::array();
    for (Index i = 0; i < l.bias.size(); ++i) b.push_back(l.bias(i));
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", std::move(w)},
                      {"bias", std::move(b)}});
  }
  return layers;
}

ParameterSet params_from_json(const json& j) {
  ParameterSet params;
  for (const json& layer : j) {
    const Index rows = layer.at("rows").get<Index>();
    const Index cols = layer.at("cols").get<Index>();
    const json& w = layer.at("weight");
    const json& b = layer.at("bias");
    if (static_cast<Index>(w.size()) != rows * cols || static_cast<Index>(b.size()) != rows)
      throw_error(ErrorKind::kIo, "checkpoint: layer array has wrong length");
    Layer l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    Index k = 0;
    for (Index i = 0; i < rows; ++i)
      for (Index c = 0; c < cols; ++c) l.weight(i, c) = w[k++].get<double>();
    for (Index i = 0; i < rows; ++i) l.bias(i) = b[i].get<double>();
    params.push_back(std::move(l));
  }
  return params;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  const VectorFieldNet& net = ckpt.net;
  json doc;
  doc["format_version"] = ckpt.format_version;
  doc["arch"] = {{"input_dim", net.input_dim()},
                 {"hidden_dims", net.hidden_dims()},
                 {"activation", to_string(net.activation())}};
  doc["params"] = params_to_json(net.layers());
  doc["adam_state"] = {{"step", ckpt.adam.step},
                       {"lr", ckpt.adam.lr},
                       {"beta1", ckpt.adam.beta1},
                       {"beta2", ckpt.adam.beta2},
                       {"eps", ckpt.adam.eps},
                       {"m", params_to_json(ckpt.adam.m)},
                       {"v", params_to_json(ckpt.adam.v)}};
  doc["rng_seed"] = ckpt.rng_seed;
  doc["step"] = ckpt.step;
  doc["training_config"] = ckpt.training_config;
  return doc.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw_error(ErrorKind::kIo, std::string("checkpoint: ") + e.what());
  }
  try {
    Checkpoint ckpt;
    ckpt.format_version = doc.at("format_version").get<int>();
    if (ckpt.format_version != kCheckpointFormatVersion)
      throw_error(ErrorKind::kVersionMismatch,
                  "checkpoint: format_version " + std::to_string(ckpt.format_version) +
                      " is not supported (expected " +
                      std::to_string(kCheckpointFormatVersion) + ")");
    const json& arch = doc.at("arch");
    const int input_dim = arch.at("input_dim").get<int>();
    ckpt.net = VectorFieldNet(input_dim - 1, arch.at("hidden_dims").get<std::vector<int>>(),
                              activation_from_string(arch.at("activation").get<std::string>()));
    ckpt.net.layers() = params_from_json(doc.at("params"));
    ckpt.net.check();

    const json& adam = doc.at("adam_state");
    ckpt.adam.step = adam.at("step").get<long>();
    ckpt.adam.lr = adam.at("lr").get<double>();
    ckpt.adam.beta1 = adam.at("beta1").get<double>();
    ckpt.adam.beta2 = adam.at("beta2").get<double>();
    ckpt.adam.eps = adam.at("eps").get<double>();
    ckpt.adam.m = params_from_json(adam.at("m"));
    ckpt.adam.v = params_from_json(adam.at("v"));

    ckpt.rng_seed = doc.at("rng_seed").get<std::uint64_t>();
    ckpt.step = doc.at("step").get<long>();
    ckpt.training_config =
        doc.at("training_config").get<std::map<std::string, std::string>>();
    return ckpt;
  } catch (const json::exception& e) {
    throw_error(ErrorKind::kIo, std::string("checkpoint: malformed document: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_error(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out << checkpoint_to_string(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_error(ErrorKind::kIo, "cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace flowmatch
