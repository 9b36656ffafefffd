#include "unibci/config.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>

namespace unibci {
namespace {

using Member = std::variant<std::string RunConfig::*, std::uint64_t RunConfig::*,
                            Index RunConfig::*, double RunConfig::*, bool RunConfig::*>;

struct FieldDef {
  const char* key;
  Member member;
};

// Registration order is the serialization order.
const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> defs = {
      {"dtype", &RunConfig::dtype},
      {"seed", &RunConfig::seed},
      {"threads", &RunConfig::threads},
      {"embed_dim", &RunConfig::embed_dim},
      {"n_layers", &RunConfig::n_layers},
      {"n_heads", &RunConfig::n_heads},
      {"window", &RunConfig::window},
      {"interval", &RunConfig::interval},
      {"t_norm", &RunConfig::t_norm},
      {"n_areas", &RunConfig::n_areas},
      {"area_size", &RunConfig::area_size},
      {"d_text", &RunConfig::d_text},
      {"ffn_mult", &RunConfig::ffn_mult},
      {"recon_hidden", &RunConfig::recon_hidden},
      {"head_hidden", &RunConfig::head_hidden},
      {"dropout", &RunConfig::dropout},
      {"aswa_scale", &RunConfig::aswa_scale},
      {"recon_target", &RunConfig::recon_target},
      {"shuffle_channels", &RunConfig::shuffle_channels},
      {"epochs", &RunConfig::epochs},
      {"batch_size", &RunConfig::batch_size},
      {"mask_ratio", &RunConfig::mask_ratio},
      {"lr", &RunConfig::lr},
      {"lr_min", &RunConfig::lr_min},
      {"weight_decay", &RunConfig::weight_decay},
      {"beta1", &RunConfig::beta1},
      {"beta2", &RunConfig::beta2},
      {"adam_eps", &RunConfig::adam_eps},
      {"grad_clip", &RunConfig::grad_clip},
      {"ft_lr", &RunConfig::ft_lr},
      {"ft_batch_size", &RunConfig::ft_batch_size},
      {"ft_epochs", &RunConfig::ft_epochs},
      {"head_pool_t", &RunConfig::head_pool_t},
      {"task", &RunConfig::task},
      {"split", &RunConfig::split},
      {"train_fraction", &RunConfig::train_fraction},
  };
  return defs;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorKind::validation, "config: bad value for " + key + ": '" + value + "'");
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || p != value.data() + value.size()) bad_value(key, value);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(value, &pos);
    if (pos != value.size()) bad_value(key, value);
    return out;
  } catch (const std::exception&) {
    bad_value(key, value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const FieldDef& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  fail(ErrorKind::validation, "config: unknown key '" + key + "'");
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const FieldDef& f = find_field(key);
  std::visit(
      [&](auto member) {
        auto& slot = cfg.*member;
        using T = std::decay_t<decltype(slot)>;
        if constexpr (std::is_same_v<T, std::string>) {
          slot = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          slot = parse_bool(key, value);
        } else if constexpr (std::is_same_v<T, double>) {
          slot = parse_double(key, value);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          const std::int64_t v = parse_int(key, value);
          slot = static_cast<std::uint64_t>(v);
        } else {
          slot = static_cast<Index>(parse_int(key, value));
        }
      },
      f.member);
}

void parse_config_into(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::validation,
           "config: line " + std::to_string(line_no) + " is not key=value: '" + line + "'");
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  parse_config_into(cfg, text);
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& f : fields()) {
    out << f.key << "=";
    std::visit(
        [&](auto member) {
          const auto& slot = cfg.*member;
          using T = std::decay_t<decltype(slot)>;
          if constexpr (std::is_same_v<T, std::string>)
            out << slot;
          else if constexpr (std::is_same_v<T, bool>)
            out << (slot ? "true" : "false");
          else if constexpr (std::is_same_v<T, double>)
            out << format_double(slot);
          else
            out << slot;
        },
        f.member);
    out << "\n";
  }
  return out.str();
}

std::string config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& f : fields()) {
    std::visit([&](auto member) { j[f.key] = cfg.*member; }, f.member);
  }
  return j.dump();
}

RunConfig config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("config: bad JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::format, "config: JSON root must be an object");
  RunConfig cfg;
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    const FieldDef& f = find_field(key);
    try {
      std::visit(
          [&](auto member) {
            auto& slot = cfg.*member;
            using T = std::decay_t<decltype(slot)>;
            slot = item.value().template get<T>();
          },
          f.member);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::validation, "config: bad JSON value for " + key);
    }
  }
  return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::validation, "config: cannot open: " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str());
}

void write_config_file(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::validation, "config: cannot open for write: " + path.string());
  f << serialize_config(cfg);
  if (!f) fail(ErrorKind::validation, "config: write failed: " + path.string());
}

void validate_config(const RunConfig& cfg) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::validation, "config: " + msg);
  };
  require(cfg.dtype == "f32" || cfg.dtype == "f64", "dtype must be f32 or f64");
  require(cfg.threads >= 1, "threads must be >= 1");
  require(cfg.embed_dim >= 1, "embed_dim must be >= 1");
  require(cfg.n_layers >= 0, "n_layers must be >= 0");
  require(cfg.n_heads >= 1 && cfg.embed_dim % cfg.n_heads == 0, "n_heads must divide embed_dim");
  require(cfg.window >= 1, "window must be >= 1");
  require(cfg.interval >= 1 && cfg.t_norm >= 1, "interval and t_norm must be >= 1");
  require(cfg.t_norm % cfg.interval == 0, "interval must divide t_norm");
  require(cfg.n_areas >= 1 && cfg.area_size >= 1, "n_areas and area_size must be >= 1");
  require(cfg.d_text >= 1, "d_text must be >= 1");
  require(cfg.ffn_mult >= 1, "ffn_mult must be >= 1");
  require(cfg.recon_hidden >= 1 && cfg.head_hidden >= 1, "hidden widths must be >= 1");
  require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "dropout must be in [0,1)");
  require(cfg.recon_target == "token" || cfg.recon_target == "emb",
          "recon_target must be token or emb");
  require(cfg.epochs >= 1 && cfg.batch_size >= 1, "epochs and batch_size must be >= 1");
  require(cfg.mask_ratio >= 0.0 && cfg.mask_ratio <= 1.0, "mask_ratio must be in [0,1]");
  require(cfg.lr > 0.0 && cfg.lr_min >= 0.0, "lr must be > 0");
  require(cfg.weight_decay >= 0.0, "weight_decay must be >= 0");
  require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0,
          "betas must be in [0,1)");
  require(cfg.adam_eps > 0.0, "adam_eps must be > 0");
  require(cfg.grad_clip >= 0.0, "grad_clip must be >= 0");
  require(cfg.ft_lr > 0.0 && cfg.ft_batch_size >= 1 && cfg.ft_epochs >= 1,
          "fine-tune settings out of range");
  require(cfg.task == "cls" || cfg.task == "classification" || cfg.task == "reg" ||
              cfg.task == "regression",
          "task must be cls or reg");
  require(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0,
          "train_fraction must be in (0,1)");
  parse_split_mode(cfg.split);  // throws on unknown split names
}

}  // namespace unibci
