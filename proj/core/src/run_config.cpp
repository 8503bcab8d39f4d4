#include "invdec/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "invdec/error.hpp"
#include "invdec/rng.hpp"

namespace invdec::config {
namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& expected,
                            const std::string& got) {
  throw ConfigError(key + ": expected " + expected + ", got '" + got + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    bad_value(key, "a non-negative integer", s);
  }
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& s) {
  return static_cast<std::size_t>(parse_u64(key, s));
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, "a number", s);
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, "true or false", s);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& s, F parse_one) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) out.push_back(parse_one(key, item));
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += fmt(values[i]);
  }
  return out;
}

std::string str_u(std::uint64_t v) { return std::to_string(v); }

struct Field {
  const char* key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

#define INVDEC_SIZE_FIELD(KEY, REF)                                        \
  Field {                                                                  \
    KEY, [&c](const std::string& v) { REF = parse_size(KEY, v); },          \
        [&c] { return str_u(REF); }                                         \
  }
#define INVDEC_U64_FIELD(KEY, REF)                                         \
  Field {                                                                  \
    KEY, [&c](const std::string& v) { REF = parse_u64(KEY, v); },           \
        [&c] { return str_u(REF); }                                         \
  }
#define INVDEC_DOUBLE_FIELD(KEY, REF)                                      \
  Field {                                                                  \
    KEY, [&c](const std::string& v) { REF = parse_double(KEY, v); },        \
        [&c] { return format_double(REF); }                                 \
  }
#define INVDEC_BOOL_FIELD(KEY, REF)                                        \
  Field {                                                                  \
    KEY, [&c](const std::string& v) { REF = parse_bool(KEY, v); },          \
        [&c] { return std::string(REF ? "true" : "false"); }                \
  }

std::vector<Field> fields(RunConfig& c) {
  return {
      INVDEC_U64_FIELD("run.seed", c.seed),
      Field{"run.out", [&c](const std::string& v) { c.out = v; }, [&c] { return c.out; }},
      INVDEC_SIZE_FIELD("run.threads", c.threads),

      INVDEC_SIZE_FIELD("model.lookback", c.model.lookback),
      INVDEC_SIZE_FIELD("model.horizon", c.model.horizon),
      Field{"model.variates",
            [&c](const std::string& v) {
              c.variates_auto = v == "auto";
              if (!c.variates_auto) c.model.variates = parse_size("model.variates", v);
            },
            [&c] { return c.variates_auto ? std::string("auto") : str_u(c.model.variates); }},
      INVDEC_SIZE_FIELD("model.patch_len", c.model.patch_len),
      INVDEC_SIZE_FIELD("model.stride", c.model.stride),
      INVDEC_SIZE_FIELD("model.d_model", c.model.d_model),
      INVDEC_SIZE_FIELD("model.heads", c.model.heads),
      INVDEC_SIZE_FIELD("model.dec_heads", c.model.dec_heads),
      INVDEC_SIZE_FIELD("model.enc_layers", c.model.enc_layers),
      INVDEC_SIZE_FIELD("model.dec_layers", c.model.dec_layers),
      INVDEC_SIZE_FIELD("model.ffn_dim", c.model.ffn_dim),
      INVDEC_DOUBLE_FIELD("model.dropout", c.model.dropout),
      Field{"model.lambda_mode",
            [&c](const std::string& v) {
              if (v == "fixed") c.model.lambda_mode = model::LambdaMode::kFixed;
              else if (v == "learnable") c.model.lambda_mode = model::LambdaMode::kLearnable;
              else bad_value("model.lambda_mode", "fixed or learnable", v);
            },
            [&c] {
              return std::string(c.model.lambda_mode == model::LambdaMode::kFixed ? "fixed"
                                                                                  : "learnable");
            }},
      Field{"model.lambda",
            [&c](const std::string& v) {
              c.lambda_auto = v == "auto";
              if (!c.lambda_auto) c.model.lambda = parse_double("model.lambda", v);
            },
            [&c] { return c.lambda_auto ? std::string("auto") : format_double(c.model.lambda); }},
      INVDEC_DOUBLE_FIELD("model.lambda_init", c.model.lambda_init),
      Field{"model.encoder_scope",
            [&c](const std::string& v) {
              if (v == "variate") c.model.channel_independent_encoder = true;
              else if (v == "joint") c.model.channel_independent_encoder = false;
              else bad_value("model.encoder_scope", "variate or joint", v);
            },
            [&c] {
              return std::string(c.model.channel_independent_encoder ? "variate" : "joint");
            }},

      INVDEC_SIZE_FIELD("train.batch_size", c.train.batch_size),
      INVDEC_SIZE_FIELD("train.max_epochs", c.train.max_epochs),
      INVDEC_SIZE_FIELD("train.patience", c.train.patience),
      INVDEC_BOOL_FIELD("train.shuffle", c.train.shuffle),
      INVDEC_DOUBLE_FIELD("train.lr", c.train.adam.lr),
      INVDEC_DOUBLE_FIELD("train.beta1", c.train.adam.beta1),
      INVDEC_DOUBLE_FIELD("train.beta2", c.train.adam.beta2),
      INVDEC_DOUBLE_FIELD("train.eps", c.train.adam.eps),

      Field{"data.source",
            [&c](const std::string& v) {
              if (v == "csv") c.data.source = DataSource::kCsv;
              else if (v == "synth") c.data.source = DataSource::kSynth;
              else bad_value("data.source", "csv or synth", v);
            },
            [&c] { return std::string(c.data.source == DataSource::kCsv ? "csv" : "synth"); }},
      Field{"data.path", [&c](const std::string& v) { c.data.path = v; },
            [&c] { return c.data.path; }},
      Field{"data.timestamp",
            [&c](const std::string& v) {
              if (v == "auto") c.data.timestamp = data::TimestampMode::kAuto;
              else if (v == "drop") c.data.timestamp = data::TimestampMode::kDrop;
              else if (v == "data") c.data.timestamp = data::TimestampMode::kData;
              else bad_value("data.timestamp", "auto, drop or data", v);
            },
            [&c] {
              switch (c.data.timestamp) {
                case data::TimestampMode::kDrop: return std::string("drop");
                case data::TimestampMode::kData: return std::string("data");
                default: return std::string("auto");
              }
            }},
      INVDEC_DOUBLE_FIELD("data.train_frac", c.data.split.train_frac),
      INVDEC_DOUBLE_FIELD("data.val_frac", c.data.split.val_frac),
      INVDEC_DOUBLE_FIELD("data.test_frac", c.data.split.test_frac),

      Field{"ablation.axis", [&c](const std::string& v) { c.ablation.axis = v; },
            [&c] { return c.ablation.axis; }},
      Field{"ablation.values",
            [&c](const std::string& v) {
              c.ablation.values = parse_list<double>("ablation.values", v, parse_double);
            },
            [&c] { return join(c.ablation.values, format_double); }},
      Field{"ablation.horizons",
            [&c](const std::string& v) {
              c.ablation.horizons = parse_list<std::size_t>("ablation.horizons", v, parse_size);
            },
            [&c] { return join(c.ablation.horizons, str_u); }},
      Field{"ablation.seeds",
            [&c](const std::string& v) {
              c.ablation.seeds = parse_list<std::uint64_t>("ablation.seeds", v, parse_u64);
            },
            [&c] { return join(c.ablation.seeds, str_u); }},

      INVDEC_SIZE_FIELD("synth.variates", c.synth.variates),
      INVDEC_SIZE_FIELD("synth.length", c.synth.length),
      INVDEC_DOUBLE_FIELD("synth.coupling", c.synth.coupling),
      INVDEC_SIZE_FIELD("synth.lag", c.synth.lag),
      INVDEC_DOUBLE_FIELD("synth.noise", c.synth.noise),
      INVDEC_U64_FIELD("synth.seed", c.synth.seed),
      INVDEC_DOUBLE_FIELD("synth.ar_coef", c.synth.ar_coef),
      INVDEC_DOUBLE_FIELD("synth.sin_amplitude", c.synth.sin_amplitude),
      INVDEC_DOUBLE_FIELD("synth.period_min", c.synth.period_min),
      INVDEC_DOUBLE_FIELD("synth.period_max", c.synth.period_max),

      Field{"scaling.variates",
            [&c](const std::string& v) {
              c.scaling.variates = parse_list<std::size_t>("scaling.variates", v, parse_size);
            },
            [&c] { return join(c.scaling.variates, str_u); }},
      INVDEC_SIZE_FIELD("scaling.d_model", c.scaling.d_model),
      INVDEC_SIZE_FIELD("scaling.heads", c.scaling.heads),
      INVDEC_SIZE_FIELD("scaling.lookback", c.scaling.lookback),
      INVDEC_SIZE_FIELD("scaling.patch_len", c.scaling.patch_len),
      INVDEC_SIZE_FIELD("scaling.repetitions", c.scaling.repetitions),
  };
}

#undef INVDEC_SIZE_FIELD
#undef INVDEC_U64_FIELD
#undef INVDEC_DOUBLE_FIELD
#undef INVDEC_BOOL_FIELD

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double auto_lambda(std::size_t variates) {
  if (variates <= 21) return 0.3;
  if (variates >= 100) return 1.0;
  throw ConfigError("model.lambda: 'auto' has no value for C=" + std::to_string(variates) +
                    " (defined for C <= 21 and C >= 100); set model.lambda explicitly");
}

RunConfig RunConfig::from_kv(const KvConfig& kv) {
  RunConfig c;
  auto table = fields(c);
  for (const auto& [key, value] : kv.entries()) {
    bool matched = false;
    for (auto& f : table) {
      if (key == f.key) {
        f.set(value);
        matched = true;
        break;
      }
    }
    if (!matched) throw ConfigError(key + ": unknown configuration key");
  }
  try {
    c.data.split.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("data.train_frac, data.val_frac, data.test_frac: ") + e.what());
  }
  c.train.validate();
  if (c.threads == 0) throw ConfigError("run.threads: must be at least 1");
  c.train.seed = c.seed;
  return c;
}

KvConfig RunConfig::to_kv() const {
  RunConfig copy = *this;
  KvConfig kv;
  for (const auto& f : fields(copy)) kv.set(f.key, f.get());
  return kv;
}

void RunConfig::resolve(std::size_t data_variates) {
  if (variates_auto) {
    model.variates = data_variates;
    variates_auto = false;
  } else if (model.variates != data_variates) {
    throw ConfigError("model.variates: configured C=" + std::to_string(model.variates) +
                      " but the data has C=" + std::to_string(data_variates));
  }
  if (lambda_auto) {
    model.lambda = auto_lambda(model.variates);
    lambda_auto = false;
  }
  train.seed = seed;
  model.validate();
  train.validate();
}

std::string RunConfig::fingerprint() const {
  KvConfig kv = to_kv();
  kv.erase("run.out");
  kv.erase("run.threads");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(kv.to_text())));
  return buf;
}

std::vector<std::string> diff(const RunConfig& a, const RunConfig& b) {
  const KvConfig ka = a.to_kv(), kb = b.to_kv();
  std::vector<std::string> out;
  for (const auto& [k, v] : ka.entries()) {
    if (kb.get(k) != v) out.push_back(k);
  }
  return out;
}

}  // namespace invdec::config
