#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "turnrl/trainer.hpp"

namespace turnrl::config {

// Flat key=value text with [section] headers; '#' and ';' start comments.
//
//   [trainer]
//   algorithm = turn_ppo
//   seed = 3
//   [env]
//   width = 3
//
// Keys are addressed as "section.key".
using Document = std::map<std::string, std::string>;

Document parse_ini(std::string_view text);       // throws ConfigError on bad lines
Document read_ini_file(const std::string& path);  // throws std::runtime_error if unreadable

// Every recognized "section.key", in serialization order.
const std::vector<std::string>& known_keys();

// Maps a bare or dotted key to its canonical "section.key". A bare key must
// be unique across sections.
std::string resolve_key(std::string_view key);

// Applies "key=value" on top of `doc`.
void apply_override(Document& doc, std::string_view assignment);

// Starts from the algorithm's defaults, then applies every entry. Unknown
// keys and malformed values raise trainer::ConfigError naming the key; the
// result is validated.
trainer::TrainConfig resolve(const Document& doc);

// Fully expanded form: resolve(to_document(c)) == c.
Document to_document(const trainer::TrainConfig& config);
std::string to_ini(const trainer::TrainConfig& config);

// Loads either an INI file or a run manifest (JSON with a "config" object).
Document load(const std::string& path);

}  // namespace turnrl::config
