#include "snd/state_log.hpp"

#include "snd/errors.hpp"
#include "snd/serialize.hpp"

namespace snd {

void StateLog::validate() const {
  const std::size_t k = steps.size();
  if (rooms.size() != k || states.rank() != 4 || states.dim(0) != k) {
    throw ContractError("state log: states, steps and rooms disagree in length");
  }
  for (std::size_t i = 1; i < k; ++i) {
    if (steps[i] <= steps[i - 1]) throw ContractError("state log: step indices must strictly increase");
  }
}

StateLog StateLog::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw ContractError("state log slice out of range");
  StateLog out;
  out.states = states.rows(begin, end);
  out.steps.assign(steps.begin() + begin, steps.begin() + end);
  out.rooms.assign(rooms.begin() + begin, rooms.begin() + end);
  return out;
}

void save_state_log(const StateLog& log, const std::filesystem::path& path) {
  log.validate();
  Json header{{"kind", "state_log"}, {"shape", log.states.shape()}, {"steps", log.steps}, {"rooms", log.rooms}};
  write_framed_f32(path, header, log.states.values());
}

StateLog load_state_log(const std::filesystem::path& path) {
  auto [header, values] = read_framed_f32(path);
  if (header.value("kind", "") != "state_log") throw LoadError(path.string() + " is not a state log");
  StateLog log;
  log.states = Tensor(header.at("shape").get<Shape>(), std::move(values));
  log.steps = header.at("steps").get<std::vector<std::uint64_t>>();
  log.rooms = header.at("rooms").get<std::vector<std::uint32_t>>();
  try {
    log.validate();
  } catch (const ContractError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return log;
}

}  // namespace snd
