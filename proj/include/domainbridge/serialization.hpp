#pragma once

#include <nlohmann/json.hpp>

#include "domainbridge/classifier.hpp"
#include "domainbridge/metrics.hpp"
#include "domainbridge/ui2i.hpp"

// JSON mappings for configs and reports. Readers accept partial objects and
// keep defaults for absent keys; unknown keys are rejected so typos surface.

namespace domainbridge {

void to_json(nlohmann::json& j, const ConfusionMatrix& cm);  // [[tp, fn], [fp, tn]]
void from_json(const nlohmann::json& j, ConfusionMatrix& cm);
void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

void to_json(nlohmann::json& j, const AdamSettings& a);
void from_json(const nlohmann::json& j, AdamSettings& a);
void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const Ui2iOptimizer& o);
void from_json(const nlohmann::json& j, Ui2iOptimizer& o);
void to_json(nlohmann::json& j, const UI2IConfig& c);
void from_json(const nlohmann::json& j, UI2IConfig& c);

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const char* what);

/// Parses a JSON file, wrapping parse failures in ConfigError.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Write-temp-then-rename so readers never observe a partial file.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace domainbridge
