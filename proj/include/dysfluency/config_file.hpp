#pragma once

// key=value configuration files ('#' starts a comment). Unknown keys are
// rejected.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "dysfluency/model.hpp"
#include "dysfluency/synth.hpp"

namespace dysfluency {

struct TrainConfig;

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::filesystem::path& path);

void apply_config(const KeyValues& kv, HeadConfig& cfg);
void apply_config(const KeyValues& kv, TrainConfig& cfg);
void apply_config(const KeyValues& kv, SynthConfig& cfg);

std::string to_key_values(const HeadConfig& cfg);
std::string to_key_values(const TrainConfig& cfg);

}  // namespace dysfluency
