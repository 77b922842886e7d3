#include "snd/checkpoint.hpp"

#include <sstream>

#include "snd/errors.hpp"
#include "snd/serialize.hpp"

namespace snd {

std::string checkpoint_config_key(const ExperimentConfig& config) {
  std::istringstream in(resolved_config(config));
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("run.", 0) == 0 && line.rfind("run.seed ", 0) != 0) continue;
    out += line + "\n";
  }
  return out;
}

ExperimentConfig checkpoint_config(const std::filesystem::path& prefix) {
  auto json_path = prefix;
  json_path += ".json";
  if (!std::filesystem::exists(json_path)) throw LoadError("checkpoint " + prefix.string() + " not found");
  const auto m = nlohmann::json::parse(read_text_file(json_path));
  return parse_config(m.at("config").get<std::string>(), json_path.string());
}

void save_checkpoint(const Trainer& trainer, const std::filesystem::path& prefix, const nlohmann::json& extra) {
  std::vector<float> blob;
  nlohmann::json m;
  m["version"] = kCheckpointVersion;
  m["code_version"] = kCodeVersion;
  m["config"] = checkpoint_config_key(trainer.config());
  m["state"] = trainer.checkpoint_manifest(blob);
  m["extra"] = extra.is_null() ? nlohmann::json::object() : extra;
  m["blob_floats"] = blob.size();
  m["blob_checksum"] = blob_checksum(blob);

  auto json_path = prefix;
  json_path += ".json";
  auto bin_path = prefix;
  bin_path += ".bin";
  auto tmp_json = json_path;
  tmp_json += ".tmp";
  auto tmp_bin = bin_path;
  tmp_bin += ".tmp";
  write_f32_file(tmp_bin, blob);
  write_text_file(tmp_json, m.dump() + "\n");
  std::filesystem::rename(tmp_bin, bin_path);
  std::filesystem::rename(tmp_json, json_path);
}

Trainer load_checkpoint(const ExperimentConfig& config, const std::filesystem::path& prefix, nlohmann::json* extra) {
  auto json_path = prefix;
  json_path += ".json";
  auto bin_path = prefix;
  bin_path += ".bin";
  if (!std::filesystem::exists(json_path) || !std::filesystem::exists(bin_path)) {
    throw LoadError("checkpoint " + prefix.string() + " not found");
  }
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint manifest " + json_path.string() + " is malformed: " + e.what());
  }
  if (m.value("version", -1) != kCheckpointVersion) {
    throw LoadError("checkpoint version " + m.value("version", nlohmann::json(-1)).dump() + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  if (m.at("config").get<std::string>() != checkpoint_config_key(config)) {
    throw LoadError("checkpoint " + prefix.string() + " was written for a different configuration");
  }
  const auto blob = read_f32_file(bin_path);
  if (blob.size() != m.at("blob_floats").get<std::size_t>()) {
    throw LoadError("checkpoint blob " + bin_path.string() + " has " + std::to_string(blob.size()) +
                    " values, manifest expects " + m.at("blob_floats").dump());
  }
  if (blob_checksum(blob) != m.at("blob_checksum").get<std::uint64_t>()) {
    throw LoadError("checkpoint blob " + bin_path.string() + " fails its checksum");
  }
  Trainer trainer(config);
  try {
    trainer.restore_checkpoint(m.at("state"), blob);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint manifest incomplete: ") + e.what());
  }
  if (extra != nullptr) *extra = m.at("extra");
  return trainer;
}

}  // namespace snd
