// Copyright 2026 The FedPass Lab Authors
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

#include "fedpass/checkpoint.h"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fedpass/errors.h"

namespace fedpass {
namespace {

using nlohmann::json;

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

const json& Field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

json OptionalTensor(const Tensor& t) { return t.empty() ? json(nullptr) : TensorToJson(t); }

Tensor OptionalTensorFrom(const json& j) { return j.is_null() ? Tensor() : TensorFromJson(j); }

json LinearToJson(const Linear& l) {
  return {{"in_dim", l.in_dim}, {"out_dim", l.out_dim}, {"weight", TensorToJson(l.weight)},
          {"bias", OptionalTensor(l.bias)}};
}

Linear LinearFrom(const json& j) {
  Linear l;
  l.in_dim = Field(j, "in_dim").get<Index>();
  l.out_dim = Field(j, "out_dim").get<Index>();
  l.weight = TensorFromJson(Field(j, "weight"));
  l.bias = OptionalTensorFrom(Field(j, "bias"));
  if (l.weight.shape() != Shape{l.out_dim, l.in_dim}) throw FormatError("linear weight shape");
  return l;
}

json ConvToJson(const Conv2d& c) {
  return {{"in_channels", c.in_channels}, {"out_channels", c.out_channels},
          {"kernel", c.kernel},           {"weight", TensorToJson(c.weight)},
          {"bias", OptionalTensor(c.bias)}};
}

Conv2d ConvFrom(const json& j) {
  Conv2d c;
  c.in_channels = Field(j, "in_channels").get<Index>();
  c.out_channels = Field(j, "out_channels").get<Index>();
  c.kernel = Field(j, "kernel").get<Index>();
  c.weight = TensorFromJson(Field(j, "weight"));
  c.bias = OptionalTensorFrom(Field(j, "bias"));
  if (c.weight.shape() != Shape{c.out_channels, c.in_channels, c.kernel, c.kernel}) {
    throw FormatError("conv weight shape");
  }
  return c;
}

std::string ScopeName(PassportScope s) {
  return s == PassportScope::kPerSample ? "per_sample" : "per_batch";
}

PassportScope ScopeFrom(const std::string& s) {
  if (s == "per_batch") return PassportScope::kPerBatch;
  if (s == "per_sample") return PassportScope::kPerSample;
  throw FormatError("unknown passport scope '" + s + "'");
}

json PassportToJson(const PassportLayer& p) {
  json j;
  if (const auto* l = std::get_if<Linear>(&p.base)) {
    j["base"] = {{"type", "linear"}, {"layer", LinearToJson(*l)}};
  } else {
    j["base"] = {{"type", "conv2d"}, {"layer", ConvToJson(std::get<Conv2d>(p.base))}};
  }
  j["encoder"] = LinearToJson(p.autoencoder.encoder);
  j["decoder"] = LinearToJson(p.autoencoder.decoder);
  j["config"] = {{"N", p.config.range},
                 {"sigma2", p.config.sigma2},
                 {"shape", p.config.shape},
                 {"scope", ScopeName(p.config.scope)},
                 {"resample_means", p.config.resample_means}};
  return j;
}

PassportLayer PassportFrom(const json& j) {
  PassportLayer p;
  const json& base = Field(j, "base");
  const std::string type = Field(base, "type").get<std::string>();
  if (type == "linear") {
    p.base = LinearFrom(Field(base, "layer"));
  } else if (type == "conv2d") {
    p.base = ConvFrom(Field(base, "layer"));
  } else {
    throw FormatError("unknown passport base '" + type + "'");
  }
  p.autoencoder.encoder = LinearFrom(Field(j, "encoder"));
  p.autoencoder.decoder = LinearFrom(Field(j, "decoder"));
  const json& c = Field(j, "config");
  p.config.range = Field(c, "N").get<double>();
  p.config.sigma2 = Field(c, "sigma2").get<double>();
  p.config.shape = Field(c, "shape").get<Shape>();
  p.config.scope = ScopeFrom(Field(c, "scope").get<std::string>());
  p.config.resample_means = Field(c, "resample_means").get<bool>();
  p.config.Validate();
  return p;
}

json ReadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void CheckHeader(const json& j, const char* format, const std::string& path) {
  if (!j.is_object() || j.value("format", "") != format) {
    throw FormatError("'" + path + "' is not a " + format + " file");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw FormatError("'" + path + "' has unsupported version " +
                      std::to_string(j.value("version", 0)));
  }
}

json MeansToJson(const PassportMeans& means) {
  json j = json::object();
  for (const auto& [slot, mu] : means) j[std::to_string(slot)] = mu;
  return j;
}

PassportMeans MeansFrom(const json& j) {
  PassportMeans means;
  for (const auto& [slot, mu] : j.items()) {
    means[std::stoul(slot)] = mu.get<std::vector<double>>();
  }
  return means;
}

}  // namespace

json TensorToJson(const Tensor& t) {
  return {{"shape", t.shape()},
          {"data", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor TensorFromJson(const json& j) {
  try {
    const Shape shape = Field(j, "shape").get<Shape>();
    const std::vector<double> data = Field(j, "data").get<std::vector<double>>();
    return Tensor(shape, Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size())));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed tensor: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("malformed tensor: ") + e.what());
  }
}

json NetworkToJson(const Network& net) {
  json layers = json::array();
  for (const Layer& layer : net.layers) {
    layers.push_back(std::visit(
        Overloaded{
            [](const Linear& l) { return json{{"type", "linear"}, {"layer", LinearToJson(l)}}; },
            [](const Conv2d& c) { return json{{"type", "conv2d"}, {"layer", ConvToJson(c)}}; },
            [](const Relu&) { return json{{"type", "relu"}}; },
            [](const Flatten&) { return json{{"type", "flatten"}}; },
            [](const AvgPool2d& p) { return json{{"type", "avgpool2d"}, {"window", p.window}}; },
            [](const Standardize& s) {
              return json{{"type", "standardize"}, {"epsilon", s.epsilon}};
            },
            [](const PassportLayer& p) {
              return json{{"type", "passport"}, {"layer", PassportToJson(p)}};
            }},
        layer));
  }
  return {{"layers", layers}};
}

Network NetworkFromJson(const json& j) {
  Network net;
  try {
    for (const json& l : Field(j, "layers")) {
      const std::string type = Field(l, "type").get<std::string>();
      if (type == "linear") {
        net.layers.push_back(LinearFrom(Field(l, "layer")));
      } else if (type == "conv2d") {
        net.layers.push_back(ConvFrom(Field(l, "layer")));
      } else if (type == "relu") {
        net.layers.push_back(Relu{});
      } else if (type == "flatten") {
        net.layers.push_back(Flatten{});
      } else if (type == "avgpool2d") {
        net.layers.push_back(AvgPool2d{Field(l, "window").get<Index>()});
      } else if (type == "standardize") {
        net.layers.push_back(Standardize{Field(l, "epsilon").get<double>()});
      } else if (type == "passport") {
        net.layers.push_back(PassportFrom(Field(l, "layer")));
      } else {
        throw FormatError("unknown layer type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed network: ") + e.what());
  }
  return net;
}

json DefenseToJson(const DefenseSpec& spec) {
  json j{{"variant", DefenseName(spec)}, {"strength", DefenseStrength(spec)}};
  std::visit(Overloaded{[&](const FedPassDefense& d) {
                          j["sigma2"] = d.sigma2;
                          j["scope"] = ScopeName(d.scope);
                        },
                        [&](const GaussianNoiseDefense& d) { j["target"] = TargetName(d.target); },
                        [&](const SparsifyDefense& d) { j["target"] = TargetName(d.target); },
                        [](const auto&) {}},
             spec);
  return j;
}

DefenseSpec DefenseFromJson(const json& j) {
  try {
    const std::string variant = Field(j, "variant").get<std::string>();
    const double strength = j.value("strength", 0.0);
    const DefenseTarget target = ParseTarget(j.value("target", "embeddings"));
    DefenseSpec spec = MakeDefense(variant, strength, target, j.value("sigma2", 1.0));
    if (auto* f = std::get_if<FedPassDefense>(&spec)) {
      f->scope = ScopeFrom(j.value("scope", "per_batch"));
    }
    return spec;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed defense: ") + e.what());
  }
}

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  json j{{"format", kCheckpointFormat},
         {"version", kCheckpointVersion},
         {"defense", DefenseToJson(ckpt.defense)},
         {"seed", ckpt.seed},
         {"experiment", ckpt.experiment},
         {"active", NetworkToJson(ckpt.active)}};
  j["passive"] = json::array();
  for (const Network& net : ckpt.passive) j["passive"].push_back(NetworkToJson(net));
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << j.dump(1) << '\n';
}

Checkpoint LoadCheckpoint(const std::string& path) {
  const json j = ReadJson(path);
  CheckHeader(j, kCheckpointFormat, path);
  Checkpoint ckpt;
  try {
    ckpt.defense = DefenseFromJson(Field(j, "defense"));
    ckpt.seed = Field(j, "seed").get<std::uint64_t>();
    ckpt.experiment = j.value("experiment", json());
    ckpt.active = NetworkFromJson(Field(j, "active"));
    for (const json& p : Field(j, "passive")) ckpt.passive.push_back(NetworkFromJson(p));
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint '" + path + "': " + e.what());
  }
  return ckpt;
}

void SaveKeys(const std::string& path, const KeyFile& keys) {
  json j{{"format", kKeyFileFormat}, {"version", kCheckpointVersion},
         {"active", MeansToJson(keys.active)}};
  j["passive"] = json::array();
  for (const PassportMeans& m : keys.passive) j["passive"].push_back(MeansToJson(m));
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, S_IRUSR | S_IWUSR);
  if (fd < 0) throw Error("cannot write key file '" + path + "': " + std::strerror(errno));
  // An existing file keeps its old mode through open(); force owner-only.
  if (::fchmod(fd, S_IRUSR | S_IWUSR) != 0) {
    ::close(fd);
    throw Error("cannot restrict '" + path + "': " + std::strerror(errno));
  }
  const std::string text = j.dump(1) + "\n";
  std::size_t written = 0;
  while (written < text.size()) {
    const ssize_t n = ::write(fd, text.data() + written, text.size() - written);
    if (n < 0) {
      ::close(fd);
      throw Error("cannot write key file '" + path + "': " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  ::close(fd);
}

KeyFile LoadKeys(const std::string& path) {
  const json j = ReadJson(path);
  CheckHeader(j, kKeyFileFormat, path);
  KeyFile keys;
  try {
    keys.active = MeansFrom(Field(j, "active"));
    for (const json& p : Field(j, "passive")) keys.passive.push_back(MeansFrom(p));
  } catch (const std::exception& e) {
    throw FormatError("malformed key file '" + path + "': " + e.what());
  }
  return keys;
}

}  // namespace fedpass
