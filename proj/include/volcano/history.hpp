#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "volcano/blocks.hpp"

namespace volcano {

// One JSONL line per evaluation:
// {"iter", "block_path", "config", "loss", "reward", "cost_s", "fidelity", "status"}.
// Wall-clock timestamps are not persisted so that replays are byte-identical.
nlohmann::ordered_json history_to_json(const HistoryRecord& record);
HistoryRecord history_from_json(const nlohmann::json& line);

std::string serialize_history_line(const HistoryRecord& record);
HistoryRecord parse_history_line(std::string_view line);

// Throws IoError when the file cannot be written or read, ParseError (with the
// line number) on malformed lines.
void write_history(const std::filesystem::path& path, const std::vector<HistoryRecord>& history);
std::vector<HistoryRecord> read_history(const std::filesystem::path& path);

}  // namespace volcano
