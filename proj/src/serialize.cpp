#include "snd/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "snd/errors.hpp"

namespace snd {

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

std::vector<char> encode_le(std::span<const float> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t raw = to_le(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(bytes.data() + 4 * i, &raw, 4);
  }
  return bytes;
}

std::vector<float> decode_le(const char* bytes, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t raw;
    std::memcpy(&raw, bytes + 4 * i, 4);
    out[i] = std::bit_cast<float>(to_le(raw));
  }
  return out;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Json spec_to_json(const NetworkSpec& spec) {
  Json layers = Json::array();
  for (const auto& l : spec.layers) {
    if (const auto* c = std::get_if<Conv2dSpec>(&l)) {
      layers.push_back({{"type", "conv2d"}, {"out_channels", c->out_channels}, {"kernel", c->kernel},
                        {"stride", c->stride}, {"padding", c->padding}});
    } else if (const auto* d = std::get_if<DenseSpec>(&l)) {
      layers.push_back({{"type", "dense"}, {"out_features", d->out_features}});
    } else {
      const auto& a = std::get<ActivationSpec>(l);
      layers.push_back({{"type", a.kind == Activation::elu ? "elu" : "relu"}});
    }
  }
  Json j{{"input_shape", spec.input_shape}, {"layers", layers}};
  j["local_layer"] = spec.local_layer ? Json(*spec.local_layer) : Json(nullptr);
  return j;
}

NetworkSpec spec_from_json(const Json& j) {
  NetworkSpec spec;
  try {
    spec.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& l : j.at("layers")) {
      const std::string type = l.at("type");
      if (type == "conv2d") {
        spec.layers.push_back(Conv2dSpec{l.at("out_channels"), l.at("kernel"), l.at("stride"), l.at("padding")});
      } else if (type == "dense") {
        spec.layers.push_back(DenseSpec{l.at("out_features")});
      } else if (type == "elu") {
        spec.layers.push_back(ActivationSpec{Activation::elu});
      } else if (type == "relu") {
        spec.layers.push_back(ActivationSpec{Activation::relu});
      } else {
        throw LoadError("unknown layer type '" + type + "'");
      }
    }
    if (j.contains("local_layer") && !j.at("local_layer").is_null()) spec.local_layer = j.at("local_layer").get<std::size_t>();
  } catch (const Json::exception& e) {
    throw LoadError(std::string("malformed network spec: ") + e.what());
  }
  return spec;
}

Json network_manifest(const Network& net) {
  Json params = Json::array();
  for (const auto& p : net.parameters()) params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  return {{"spec", spec_to_json(net.spec())}, {"seed", net.seed()}, {"gain", net.gain()}, {"parameters", params}};
}

Network network_from_manifest(const Json& manifest) {
  try {
    Network net(spec_from_json(manifest.at("spec")), manifest.at("gain").get<double>(),
                manifest.at("seed").get<std::uint64_t>());
    const auto& params = manifest.at("parameters");
    if (params.size() != net.parameters().size()) throw LoadError("manifest parameter count does not match topology");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].at("shape").get<Shape>() != net.parameters()[i].value.shape()) {
        throw LoadError("manifest shape mismatch for " + net.parameters()[i].name);
      }
    }
    return net;
  } catch (const Json::exception& e) {
    throw LoadError(std::string("malformed network manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw LoadError(std::string("invalid network manifest: ") + e.what());
  }
}

void append_values(std::span<const float> values, std::vector<float>& blob) {
  blob.insert(blob.end(), values.begin(), values.end());
}

void append_parameters(const std::vector<Param<float>>& params, std::vector<float>& blob) {
  for (const auto& p : params) append_values(p.value.values(), blob);
}

std::size_t read_parameters(std::vector<Param<float>>& params, std::span<const float> blob, std::size_t offset) {
  for (auto& p : params) {
    if (offset + p.value.size() > blob.size()) throw LoadError("parameter blob truncated at " + p.name);
    std::copy_n(blob.begin() + offset, p.value.size(), p.value.data());
    offset += p.value.size();
  }
  return offset;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 rng_from_string(const std::string& text) {
  std::istringstream in(text);
  std::mt19937_64 rng;
  in >> rng;
  if (!in) throw LoadError("malformed rng state");
  return rng;
}

Json adam_manifest(const Adam& adam) {
  const auto& c = adam.config();
  return {{"steps", adam.steps()},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"moments", adam.first_moments().size()}};
}

void append_adam(const Adam& adam, std::vector<float>& blob) {
  for (const auto& m : adam.first_moments()) append_values(m.values(), blob);
  for (const auto& v : adam.second_moments()) append_values(v.values(), blob);
}

std::size_t read_adam(Adam& adam, const Json& manifest, const std::vector<Param<float>>& params,
                      std::span<const float> blob, std::size_t offset) {
  const std::size_t count = manifest.at("moments").get<std::size_t>();
  if (count != 0 && count != params.size()) throw LoadError("optimizer moment count does not match parameters");
  auto read = [&](std::vector<Tensor>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      Tensor t(params[i].value.shape());
      if (offset + t.size() > blob.size()) throw LoadError("optimizer blob truncated at " + params[i].name);
      std::copy_n(blob.begin() + offset, t.size(), t.data());
      offset += t.size();
      out.push_back(std::move(t));
    }
  };
  std::vector<Tensor> m, v;
  read(m);
  read(v);
  adam.config().lr = manifest.at("lr").get<double>();
  adam.config().beta1 = manifest.at("beta1").get<double>();
  adam.config().beta2 = manifest.at("beta2").get<double>();
  adam.config().eps = manifest.at("eps").get<double>();
  adam.restore(manifest.at("steps").get<std::uint64_t>(), std::move(m), std::move(v));
  return offset;
}

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto bytes = encode_le(values);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() % 4 != 0) throw LoadError(path.string() + ": length is not a multiple of 4 bytes");
  return decode_le(bytes.data(), bytes.size() / 4);
}

std::uint64_t blob_checksum(std::span<const float> values) {
  std::uint64_t h = 1469598103934665603ull;
  for (float f : values) {
    const std::uint32_t raw = to_le(std::bit_cast<std::uint32_t>(f));
    for (int b = 0; b < 4; ++b) {
      h ^= (raw >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

void save_network(const Network& net, const std::filesystem::path& prefix) {
  std::vector<float> blob;
  append_parameters(net.parameters(), blob);
  Json manifest = network_manifest(net);
  manifest["blob_floats"] = blob.size();
  manifest["checksum"] = blob_checksum(blob);
  write_text_file(prefix.string() + ".json", manifest.dump(2) + "\n");
  write_f32_file(prefix.string() + ".bin", blob);
}

Network load_network(const std::filesystem::path& prefix) {
  Json manifest;
  try {
    manifest = Json::parse(read_text_file(prefix.string() + ".json"));
  } catch (const Json::exception& e) {
    throw LoadError(std::string("malformed network manifest: ") + e.what());
  }
  Network net = network_from_manifest(manifest);
  const auto blob = read_f32_file(prefix.string() + ".bin");
  if (blob.size() != net.parameter_count() || blob.size() != manifest.value("blob_floats", blob.size())) {
    throw LoadError("parameter blob has " + std::to_string(blob.size()) + " floats, expected " +
                    std::to_string(net.parameter_count()));
  }
  if (manifest.contains("checksum") && manifest["checksum"].get<std::uint64_t>() != blob_checksum(blob)) {
    throw LoadError("parameter blob checksum mismatch");
  }
  read_parameters(net.parameters(), blob, 0);
  return net;
}

void write_framed_f32(const std::filesystem::path& path, const Json& header, std::span<const float> values) {
  if (!header.contains("shape") || shape_size(header["shape"].get<Shape>()) != values.size()) {
    throw ContractError("framed f32 header shape does not match payload");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string head = header.dump() + "\n";
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  const auto bytes = encode_le(values);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::pair<Json, std::vector<float>> read_framed_f32(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw LoadError(path.string() + ": missing JSON header line");
  Json header;
  try {
    header = Json::parse(bytes.substr(0, nl));
  } catch (const Json::exception& e) {
    throw LoadError(path.string() + ": malformed header: " + e.what());
  }
  const std::size_t payload = bytes.size() - nl - 1;
  if (!header.contains("shape")) throw LoadError(path.string() + ": header lacks shape");
  const std::size_t expected = shape_size(header["shape"].get<Shape>());
  if (payload != expected * 4) {
    throw LoadError(path.string() + ": payload has " + std::to_string(payload) + " bytes, expected " +
                    std::to_string(expected * 4));
  }
  return {header, decode_le(bytes.data() + nl + 1, expected)};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text_file(const std::filesystem::path& path) { return read_all(path); }

}  // namespace snd
