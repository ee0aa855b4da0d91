#include "dysfluency/config_file.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dysfluency/training.hpp"

namespace dysfluency {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw InvalidArgument("config: '" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& value) {
  Int v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw InvalidArgument("config: '" + key + "' expects an integer, got '" + value + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw InvalidArgument("config: '" + key + "' expects true/false, got '" + value + "'");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

void apply_config(const KeyValues& kv, HeadConfig& cfg) {
  for (const auto& [k, v] : kv) {
    if (k == "feature_dim") {
      cfg.feature_dim = to_int<int>(k, v);
    } else if (k == "projector_dim") {
      cfg.projector_dim = to_int<int>(k, v);
    } else if (k == "num_classes") {
      cfg.num_classes = to_int<int>(k, v);
    } else if (k == "aux_outputs") {
      cfg.aux_outputs = to_int<int>(k, v);
    } else if (k == "dropout_rate") {
      cfg.dropout_rate = to_double(k, v);
    } else if (k == "head_seed" || k == "seed") {
      cfg.seed = to_int<std::uint64_t>(k, v);
    } else if (k == "pooling") {
      cfg.pooling = pooling_mode_from_string(v);
    } else if (k == "query_projection") {
      cfg.query_projection = to_bool(k, v);
    } else {
      throw InvalidArgument("head config: unknown key '" + k + "'");
    }
  }
}

void apply_config(const KeyValues& kv, TrainConfig& cfg) {
  for (const auto& [k, v] : kv) {
    if (k == "max_epochs") {
      cfg.max_epochs = to_int<int>(k, v);
    } else if (k == "patience") {
      cfg.patience = to_int<int>(k, v);
    } else if (k == "base_lr" || k == "lr") {
      cfg.base_lr = to_double(k, v);
    } else if (k == "batch_size") {
      cfg.batch_size = to_int<int>(k, v);
    } else if (k == "warmup_fraction") {
      cfg.warmup_fraction = to_double(k, v);
    } else if (k == "schedule") {
      if (v == "linear") {
        cfg.schedule = LrSchedule::kLinearDecay;
      } else if (v == "constant") {
        cfg.schedule = LrSchedule::kConstant;
      } else {
        throw InvalidArgument("train config: schedule must be linear or constant");
      }
    } else if (k == "beta1") {
      cfg.adamw.beta1 = to_double(k, v);
    } else if (k == "beta2") {
      cfg.adamw.beta2 = to_double(k, v);
    } else if (k == "epsilon") {
      cfg.adamw.epsilon = to_double(k, v);
    } else if (k == "weight_decay") {
      cfg.adamw.weight_decay = to_double(k, v);
    } else if (k == "alpha") {
      cfg.loss.alpha = to_double(k, v);
    } else if (k == "gamma") {
      cfg.loss.gamma = to_double(k, v);
    } else if (k == "w_main") {
      cfg.loss.w_main = to_double(k, v);
    } else if (k == "aux_class_weights") {
      const auto comma = v.find(',');
      if (comma == std::string::npos) throw InvalidArgument("train config: aux_class_weights expects w0,w1");
      cfg.loss.aux_class_weights = {to_double(k, v.substr(0, comma)), to_double(k, v.substr(comma + 1))};
      cfg.auto_aux_weights = false;
    } else if (k == "auto_aux_weights") {
      cfg.auto_aux_weights = to_bool(k, v);
    } else if (k == "aux_task") {
      cfg.aux_task = aux_task_from_string(v);
    } else if (k == "threshold") {
      cfg.threshold = to_double(k, v);
    } else if (k == "seed") {
      cfg.seed = to_int<std::uint64_t>(k, v);
    } else {
      throw InvalidArgument("train config: unknown key '" + k + "'");
    }
  }
}

void apply_config(const KeyValues& kv, SynthConfig& cfg) {
  // The vocabulary decides the default priors, so it is applied first.
  if (auto it = kv.find("vocab"); it != kv.end()) {
    if (it->second == "en6") {
      cfg = default_synth_config(ClassVocabulary::en6());
    } else if (it->second == "full7") {
      cfg = default_synth_config(ClassVocabulary::full7());
    } else {
      throw InvalidArgument("synth config: vocab must be en6 or full7");
    }
  }
  for (const auto& [k, v] : kv) {
    if (k == "vocab") continue;
    if (k == "num_speakers") {
      cfg.num_speakers = to_int<int>(k, v);
    } else if (k == "clips_per_speaker") {
      cfg.clips_per_speaker = to_int<int>(k, v);
    } else if (k == "feature_dim") {
      cfg.feature_dim = to_int<int>(k, v);
    } else if (k == "frames") {
      cfg.frames = to_int<int>(k, v);
    } else if (k == "amplitude") {
      cfg.amplitude = to_double(k, v);
    } else if (k == "noise_std") {
      cfg.noise_std = to_double(k, v);
    } else if (k == "speaker_bias_std") {
      cfg.speaker_bias_std = to_double(k, v);
    } else if (k == "shared_component") {
      cfg.shared_component = to_double(k, v);
    } else if (k == "feature_offset") {
      cfg.feature_offset = to_double(k, v);
    } else if (k == "span_min") {
      cfg.span_min = to_int<int>(k, v);
    } else if (k == "span_max") {
      cfg.span_max = to_int<int>(k, v);
    } else if (k == "german_fraction") {
      cfg.german_fraction = to_double(k, v);
    } else if (k == "multi_label_fraction") {
      set_multi_label_fraction(cfg, to_double(k, v));
    } else if (k == "dataset") {
      cfg.dataset = v;
    } else if (k == "seed") {
      cfg.seed = to_int<std::uint64_t>(k, v);
    } else {
      throw InvalidArgument("synth config: unknown key '" + k + "'");
    }
  }
}

std::string to_key_values(const HeadConfig& cfg) {
  std::ostringstream out;
  out << "feature_dim=" << cfg.feature_dim << "\nprojector_dim=" << cfg.projector_dim
      << "\nnum_classes=" << cfg.num_classes << "\naux_outputs=" << cfg.aux_outputs
      << "\ndropout_rate=" << num(cfg.dropout_rate) << "\nhead_seed=" << cfg.seed
      << "\npooling=" << to_string(cfg.pooling) << "\nquery_projection=" << (cfg.query_projection ? "true" : "false")
      << '\n';
  return out.str();
}

std::string to_key_values(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "max_epochs=" << cfg.max_epochs << "\npatience=" << cfg.patience << "\nbase_lr=" << num(cfg.base_lr)
      << "\nbatch_size=" << cfg.batch_size << "\nwarmup_fraction=" << num(cfg.warmup_fraction)
      << "\nschedule=" << (cfg.schedule == LrSchedule::kConstant ? "constant" : "linear")
      << "\nbeta1=" << num(cfg.adamw.beta1) << "\nbeta2=" << num(cfg.adamw.beta2)
      << "\nepsilon=" << num(cfg.adamw.epsilon) << "\nweight_decay=" << num(cfg.adamw.weight_decay)
      << "\nalpha=" << num(cfg.loss.alpha) << "\ngamma=" << num(cfg.loss.gamma) << "\nw_main=" << num(cfg.loss.w_main)
      << "\nauto_aux_weights=" << (cfg.auto_aux_weights ? "true" : "false") << "\naux_task=" << to_string(cfg.aux_task)
      << "\nthreshold=" << num(cfg.threshold) << "\nseed=" << cfg.seed << '\n';
  if (!cfg.auto_aux_weights) {
    out << "aux_class_weights=" << num(cfg.loss.aux_class_weights[0]) << ',' << num(cfg.loss.aux_class_weights[1])
        << '\n';
  }
  return out.str();
}

}  // namespace dysfluency
