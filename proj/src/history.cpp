#include "volcano/history.hpp"

#include <fstream>

#include "volcano/errors.hpp"

namespace volcano {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

ordered_json history_to_json(const HistoryRecord& record) {
  const Observation& o = record.observation;
  ordered_json out;
  out["iter"] = o.iter;
  out["block_path"] = record.block_path;
  out["config"] = ordered_json::parse(to_json(o.config).dump());
  if (o.loss) {
    out["loss"] = *o.loss;
  } else {
    out["loss"] = nullptr;
  }
  if (const auto r = o.reward()) {
    out["reward"] = *r;
  } else {
    out["reward"] = nullptr;
  }
  out["cost_s"] = o.cost_s;
  out["fidelity"] = o.fidelity;
  out["status"] = std::string(to_string(o.status));
  return out;
}

HistoryRecord history_from_json(const json& line) {
  if (!line.is_object()) throw ParseError("history line must be a JSON object");
  HistoryRecord rec;
  Observation& o = rec.observation;
  try {
    o.iter = line.at("iter").get<std::size_t>();
    rec.block_path = line.at("block_path").get<std::vector<std::string>>();
    o.config = configuration_from_json(line.at("config"));
    const json& loss = line.at("loss");
    if (!loss.is_null()) o.loss = loss.get<double>();
    o.cost_s = line.at("cost_s").get<double>();
    o.fidelity = line.at("fidelity").get<double>();
    o.status = eval_status_from_string(line.at("status").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("history line: ") + e.what());
  }
  if (o.status == EvalStatus::ok && !o.loss) throw ParseError("history line: ok status without a loss");
  if (o.status != EvalStatus::ok) o.loss.reset();
  return rec;
}

std::string serialize_history_line(const HistoryRecord& record) { return history_to_json(record).dump(); }

HistoryRecord parse_history_line(std::string_view line) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("history line: ") + e.what());
  }
  return history_from_json(doc);
}

void write_history(const std::filesystem::path& path, const std::vector<HistoryRecord>& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& rec : history) out << serialize_history_line(rec) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<HistoryRecord> read_history(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::vector<HistoryRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(parse_history_line(line));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace volcano
