#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "unibci/common.hpp"
#include "unibci/encoder.hpp"
#include "unibci/split.hpp"
#include "unibci/tokenizer.hpp"

namespace unibci {

// Flat run configuration: one key per field, serialized as key=value lines.
// The resolved config is mirrored next to every output so a run can be
// replayed exactly.
struct RunConfig {
  // run
  std::string dtype = "f32";  // f32 | f64
  std::uint64_t seed = 1;
  Index threads = 1;

  // architecture
  Index embed_dim = 64;
  Index n_layers = 4;
  Index n_heads = 8;
  Index window = 10;
  Index interval = 10;  // time steps per interval slice
  Index t_norm = 100;
  Index n_areas = 8;
  Index area_size = 32;
  Index d_text = 384;
  Index ffn_mult = 4;
  Index recon_hidden = 256;
  Index head_hidden = 256;
  double dropout = 0.1;
  bool aswa_scale = true;
  std::string recon_target = "token";  // token | emb
  bool shuffle_channels = false;

  // pretraining
  Index epochs = 40;
  Index batch_size = 128;
  double mask_ratio = 0.5;
  double lr = 5e-4;
  double lr_min = 1e-5;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // 0 disables clipping

  // fine-tuning
  double ft_lr = 1e-4;
  Index ft_batch_size = 64;
  Index ft_epochs = 50;
  bool head_pool_t = false;
  std::string task = "cls";  // cls | reg

  // evaluation split
  std::string split = "multi-day";
  double train_fraction = 0.8;
};

// Key=value text: one pair per line, '#' starts a comment, unknown keys are
// rejected. parse_config starts from defaults; parse_config_into updates an
// existing config in place (used for checkpoint-config + override layering).
RunConfig parse_config(const std::string& text);
void parse_config_into(RunConfig& cfg, const std::string& text);
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string serialize_config(const RunConfig& cfg);

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& json_text);

RunConfig load_config_file(const std::filesystem::path& path);
void write_config_file(const std::filesystem::path& path, const RunConfig& cfg);

// Range / consistency checks shared by every entry point.
void validate_config(const RunConfig& cfg);

inline EncoderConfig encoder_config(const RunConfig& cfg) {
  EncoderConfig e;
  e.d = cfg.embed_dim;
  e.n_layers = cfg.n_layers;
  e.n_heads = cfg.n_heads;
  e.window = cfg.window;
  e.d_ff = cfg.ffn_mult * cfg.embed_dim;
  e.dropout = cfg.dropout;
  e.aswa_scale = cfg.aswa_scale;
  return e;
}

inline TokenizerDims tokenizer_dims(const RunConfig& cfg) {
  TokenizerDims t;
  t.t_norm = cfg.t_norm;
  t.n_areas = cfg.n_areas;
  t.area_size = cfg.area_size;
  t.d = cfg.embed_dim;
  t.d_text = cfg.d_text;
  return t;
}

}  // namespace unibci
