#include "dlm/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "dlm/hash.hpp"
#include "dlm/mathutil.hpp"
#include "dlm/parse.hpp"

namespace dlm {

namespace {

enum class KeyType { Int, Double, String, Bool, DoubleList };

struct KeySpec {
  const char* name;
  KeyType type;
  const char* default_value;
};

// The full key registry. Every effective config contains exactly these keys.
constexpr std::array<KeySpec, 50> kKeys = {{
    {"seed", KeyType::Int, "42"},
    {"run.jobs", KeyType::Int, "2"},
    {"taxonomy.n_sectors", KeyType::Int, "20"},
    {"corpus.datasets_per_sector", KeyType::Int, "200"},
    {"corpus.eval_datasets_per_sector", KeyType::Int, "8"},
    {"model.d_sem", KeyType::Int, "32"},
    {"model.d_cell", KeyType::Int, "32"},
    {"model.d_model", KeyType::Int, "64"},
    {"model.n_layers", KeyType::Int, "4"},
    {"model.n_heads", KeyType::Int, "4"},
    {"model.d_ff", KeyType::Int, "128"},
    {"model.n_classes_max", KeyType::Int, "10"},
    {"model.adapter_rank", KeyType::Int, "8"},
    {"model.hash_seed", KeyType::Int, "24601"},
    {"loss.w_sector", KeyType::Double, "1"},
    {"loss.w_class", KeyType::Double, "1"},
    {"loss.w_recon", KeyType::Double, "1"},
    {"train.steps", KeyType::Int, "1500"},
    {"train.batch", KeyType::Int, "8"},
    {"train.lr", KeyType::Double, "0.05"},
    {"train.lr_final", KeyType::Double, "0.005"},
    {"train.momentum", KeyType::Double, "0.9"},
    {"train.clip", KeyType::Double, "1"},
    {"train.mask_rate", KeyType::Double, "0.15"},
    {"train.zero_names_prob", KeyType::Double, "0.5"},
    {"train.table_rows_cap", KeyType::Int, "64"},
    {"finetune.steps", KeyType::Int, "250"},
    {"finetune.lr", KeyType::Double, "0.05"},
    {"finetune.adapter_lr", KeyType::Double, "0.01"},
    {"finetune.momentum", KeyType::Double, "0.9"},
    {"finetune.clip", KeyType::Double, "1"},
    {"finetune.train_frac", KeyType::Double, "0.7"},
    {"finetune.zero_names_prob", KeyType::Double, "0.5"},
    {"finetune.anchor_strength", KeyType::Double, "40"},
    {"finetune.min_rows", KeyType::Int, "20"},
    {"seq.n_tasks", KeyType::Int, "10"},
    {"seq.retention_on", KeyType::Bool, "1"},
    {"seq.memory_on", KeyType::Bool, "1"},
    {"eval.rates", KeyType::DoubleList, "0,0.1,0.2,0.3,0.5,0.7"},
    {"eval.folds", KeyType::Int, "10"},
    {"eval.budget_s", KeyType::Double, "60"},
    {"eval.n_seeds", KeyType::Int, "5"},
    {"eval.n_datasets", KeyType::Int, "20"},
    {"eval.epsilon_bound", KeyType::Double, "0.05"},
    {"eval.sector_tables", KeyType::Int, "100"},
    {"paths.out", KeyType::String, "out"},
    {"paths.model", KeyType::String, ""},
    {"paths.corpus", KeyType::String, ""},
    {"paths.taxonomy", KeyType::String, ""},
    {"paths.blocklist", KeyType::String, ""},
}};

const KeySpec* find_key(const std::string& name) {
  for (const auto& k : kKeys) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

std::string normalize_value(const KeySpec& spec, const std::string& raw) {
  switch (spec.type) {
    case KeyType::Int: {
      std::int64_t v = 0;
      auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      require(res.ec == std::errc() && res.ptr == raw.data() + raw.size(),
              ErrorCode::ConfigError, std::string("bad integer for ") + spec.name + ": " + raw);
      return std::to_string(v);
    }
    case KeyType::Double: {
      auto v = lex_numeric(raw);
      require(v.has_value(), ErrorCode::ConfigError,
              std::string("bad number for ") + spec.name + ": " + raw);
      return format_double(*v);
    }
    case KeyType::Bool: {
      if (raw == "1" || raw == "true" || raw == "on") return "1";
      if (raw == "0" || raw == "false" || raw == "off") return "0";
      throw_error(ErrorCode::ConfigError, std::string("bad bool for ") + spec.name + ": " + raw);
    }
    case KeyType::String:
      return raw;
    case KeyType::DoubleList: {
      std::string out;
      std::size_t start = 0;
      const std::string s = raw;
      for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ',') {
          const std::string part(trim_ascii(s.substr(start, i - start)));
          if (!part.empty()) {
            auto v = lex_numeric(part);
            require(v.has_value(), ErrorCode::ConfigError,
                    std::string("bad list entry for ") + spec.name + ": " + part);
            if (!out.empty()) out.push_back(',');
            out += format_double(*v);
          }
          start = i + 1;
        }
      }
      require(!out.empty(), ErrorCode::ConfigError, std::string("empty list for ") + spec.name);
      return out;
    }
  }
  return raw;
}

}  // namespace

Config Config::defaults() {
  Config c;
  for (const auto& k : kKeys) c.values_[k.name] = k.default_value;
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCode::ConfigError, "cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  Config c = defaults();
  c.apply_text(ss.str());
  return c;
}

void Config::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    const std::string trimmed(trim_ascii(line));
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    require(eq != std::string::npos, ErrorCode::ConfigError,
            "config line " + std::to_string(line_no) + " is not key = value");
    const std::string key(trim_ascii(trimmed.substr(0, eq)));
    const std::string value(trim_ascii(trimmed.substr(eq + 1)));
    set(key, value);
  }
}

void Config::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  require(spec != nullptr, ErrorCode::ConfigError, "unknown config key: " + key);
  values_[key] = normalize_value(*spec, value);
}

bool Config::has_key(const std::string& key) const { return values_.count(key) > 0; }

std::int64_t Config::get_int(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorCode::ConfigError, "missing config key " + key);
  return std::stoll(it->second);
}

double Config::get_double(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorCode::ConfigError, "missing config key " + key);
  return std::stod(it->second);
}

std::string Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorCode::ConfigError, "missing config key " + key);
  return it->second;
}

bool Config::get_bool(const std::string& key) const { return get_string(key) == "1"; }

std::vector<double> Config::get_double_list(const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<double> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= raw.size(); ++i) {
    if (i == raw.size() || raw[i] == ',') {
      const std::string part = raw.substr(start, i - start);
      if (!part.empty()) out.push_back(std::stod(part));
      start = i + 1;
    }
  }
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key;
    out.push_back('=');
    out += value;
    out.push_back('\n');
  }
  return out;
}

std::uint64_t Config::hash() const { return fnv1a64(canonical()); }

ModelDims Config::model_dims() const {
  ModelDims d;
  d.d_sem = static_cast<int>(get_int("model.d_sem"));
  d.d_cell = static_cast<int>(get_int("model.d_cell"));
  d.d_model = static_cast<int>(get_int("model.d_model"));
  d.n_layers = static_cast<int>(get_int("model.n_layers"));
  d.n_heads = static_cast<int>(get_int("model.n_heads"));
  d.d_ff = static_cast<int>(get_int("model.d_ff"));
  d.n_sectors = static_cast<int>(get_int("taxonomy.n_sectors"));
  d.n_classes_max = static_cast<int>(get_int("model.n_classes_max"));
  d.adapter_rank = static_cast<int>(get_int("model.adapter_rank"));
  return d;
}

EncoderConfig Config::encoder_config() const {
  EncoderConfig e;
  e.d_sem = static_cast<int>(get_int("model.d_sem"));
  e.d_cell = static_cast<int>(get_int("model.d_cell"));
  e.hash_seed = static_cast<std::uint64_t>(get_int("model.hash_seed"));
  return e;
}

}  // namespace dlm
