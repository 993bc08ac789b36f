// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "entroprune/errors.hpp"

namespace entroprune {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed", "out"}},
      {"model",
       {"image_h", "image_w", "channels", "patch_h", "patch_w", "embed_dim", "depth", "heads", "mlp_ratio",
        "num_classes"}},
      {"data", {"path", "eval_path", "classes", "samples_per_class", "eval_samples_per_class", "image_h", "image_w",
                "channels", "noise"}},
      {"train", {"epochs", "batch_size", "lr", "min_lr", "beta1", "beta2", "epsilon", "weight_decay", "warmup_steps",
                 "grad_clip"}},
      {"dilute", {"schedule", "T", "t_fraction", "granularity", "compensate", "epochs", "lr", "warmup_steps"}},
      {"select", {"method", "n", "ratio", "probe_size", "probe_batch", "target"}},
  };
  return keys;
}

// Reads typed values out of a table, naming the key on every failure.
class Reader {
 public:
  explicit Reader(const ConfigTable& t) : table_(t) {}

  bool has(const std::string& s, const std::string& k) const {
    const auto it = table_.find(s);
    return it != table_.end() && it->second.count(k);
  }
  bool has_section(const std::string& s) const { return table_.count(s) > 0; }

  void require(const std::string& s, const std::string& k) const {
    if (!has(s, k)) throw ConfigError("missing required key " + s + "." + k);
  }

  std::optional<std::string> str(const std::string& s, const std::string& k) const {
    if (!has(s, k)) return std::nullopt;
    return table_.at(s).at(k);
  }

  std::optional<std::int64_t> integer(const std::string& s, const std::string& k, std::int64_t lo,
                                      std::int64_t hi) const {
    const auto v = str(s, k);
    if (!v) return std::nullopt;
    std::int64_t x = 0;
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
    if (ec != std::errc() || p != v->data() + v->size()) bad(s, k, *v, "an integer");
    if (x < lo || x > hi) {
      throw ConfigError("value " + *v + " for " + s + "." + k + " is out of range [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    }
    return x;
  }

  std::optional<double> real(const std::string& s, const std::string& k, double lo, double hi,
                             bool open_low = false) const {
    const auto v = str(s, k);
    if (!v) return std::nullopt;
    char* end = nullptr;
    const double x = std::strtod(v->c_str(), &end);
    if (v->empty() || end != v->c_str() + v->size() || !std::isfinite(x)) bad(s, k, *v, "a finite number");
    if (x < lo || x > hi || (open_low && x == lo)) {
      std::ostringstream r;
      r << "value " << *v << " for " << s << "." << k << " is out of range " << (open_low ? "(" : "[") << lo << ", "
        << hi << "]";
      throw ConfigError(r.str());
    }
    return x;
  }

  std::optional<bool> boolean(const std::string& s, const std::string& k) const {
    const auto v = str(s, k);
    if (!v) return std::nullopt;
    if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
    if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
    bad(s, k, *v, "a boolean");
  }

  template <typename F>
  auto parsed(const std::string& s, const std::string& k, F parse) const -> std::optional<decltype(parse(""))> {
    const auto v = str(s, k);
    if (!v) return std::nullopt;
    try {
      return parse(*v);
    } catch (const std::exception& e) {
      throw ConfigError("invalid value '" + *v + "' for " + s + "." + k + ": " + e.what());
    }
  }

 private:
  [[noreturn]] static void bad(const std::string& s, const std::string& k, const std::string& v, const char* what) {
    throw ConfigError("value '" + v + "' for " + s + "." + k + " is not " + what);
  }

  const ConfigTable& table_;
};

template <typename V, typename O>
void set_if(V& dst, const std::optional<O>& v) {
  if (v) dst = static_cast<V>(*v);
}

constexpr std::int64_t kBig = 1'000'000'000;

}  // namespace

ConfigTable parse_config_table(const std::string& text) {
  ConfigTable table;
  std::istringstream in(text);
  std::string raw, section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const auto line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto where = " (line " + std::to_string(line_no) + ")";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header" + where);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!known_keys().count(section)) throw ConfigError("unknown section [" + section + "]" + where);
      table[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'" + where);
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) throw ConfigError("key " + key + " appears before any section" + where);
    if (key.empty()) throw ConfigError("empty key" + where);
    if (!known_keys().at(section).count(key)) throw ConfigError("unknown key " + section + "." + key + where);
    if (!table[section].emplace(key, value).second) throw ConfigError("duplicate key " + section + "." + key + where);
  }
  return table;
}

TrainConfig default_run_train_config() {
  TrainConfig t;
  t.batch_size = 32;
  t.optimizer.learning_rate = 2e-3;
  t.optimizer.warmup_steps = 60;
  return t;
}

MaskSchedule DiluteConfig::schedule_for(std::int64_t steps_per_epoch) const {
  const std::int64_t available =
      granularity == Granularity::kPerIteration ? static_cast<std::int64_t>(epochs) * steps_per_epoch : epochs;
  std::int64_t t = total ? *total : std::max<std::int64_t>(1, std::llround(t_fraction * static_cast<double>(available)));
  if (t > available) {
    throw ConfigError("dilute.T = " + std::to_string(t) + " exceeds the " + std::to_string(available) +
                      " available " + granularity_name(granularity) + " steps");
  }
  return {schedule, t, granularity};
}

int RunConfig::removal_n() const {
  const int n = select.count ? *select.count : removal_count(select.ratio, model.depth);
  if (n < 1 || n > model.depth) {
    throw ConfigError("select.n resolves to " + std::to_string(n) + ", outside [1, " + std::to_string(model.depth) + "]");
  }
  return n;
}

void RunConfig::apply_seed(std::uint64_t run_seed) {
  seed = run_seed;
  data.synth.seed = run_seed + 1;  // eval split: run_seed + 2
  train.seed = run_seed + 1;
  model.seed = run_seed + 3;
}

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  const auto table = parse_config_table(text);
  const Reader r(table);
  RunConfig c;

  set_if(c.seed, r.integer("run", "seed", 0, std::numeric_limits<std::int64_t>::max()));
  c.apply_seed(c.seed);
  if (auto out = r.str("run", "out")) c.out_dir = base_dir / *out;

  for (const char* k : {"embed_dim", "depth", "heads"}) r.require("model", k);
  auto& m = c.model;
  set_if(m.image_h, r.integer("model", "image_h", 1, 4096));
  set_if(m.image_w, r.integer("model", "image_w", 1, 4096));
  set_if(m.channels, r.integer("model", "channels", 1, 64));
  set_if(m.patch_h, r.integer("model", "patch_h", 1, 4096));
  set_if(m.patch_w, r.integer("model", "patch_w", 1, 4096));
  set_if(m.embed_dim, r.integer("model", "embed_dim", 1, 65536));
  set_if(m.depth, r.integer("model", "depth", 1, 256));
  set_if(m.heads, r.integer("model", "heads", 1, 1024));
  set_if(m.mlp_ratio, r.real("model", "mlp_ratio", 0.0, 64.0, true));
  set_if(m.num_classes, r.integer("model", "num_classes", 2, 65535));

  auto& d = c.data;
  if (auto p = r.str("data", "path")) d.train_path = base_dir / *p;
  if (auto p = r.str("data", "eval_path")) d.eval_path = base_dir / *p;
  for (const auto& [key, path] : {std::pair{"path", d.train_path}, std::pair{"eval_path", d.eval_path}}) {
    if (!path.empty() && !std::filesystem::exists(path)) {
      throw ConfigError(std::string("data.") + key + " does not exist: " + path.string());
    }
  }
  d.synth.image_h = m.image_h;
  d.synth.image_w = m.image_w;
  d.synth.channels = m.channels;
  d.synth.num_classes = r.has("model", "num_classes") ? m.num_classes : d.synth.num_classes;
  set_if(d.synth.num_classes, r.integer("data", "classes", 2, 12));
  set_if(d.synth.samples_per_class, r.integer("data", "samples_per_class", 1, kBig));
  set_if(d.eval_samples_per_class, r.integer("data", "eval_samples_per_class", 1, kBig));
  set_if(d.synth.image_h, r.integer("data", "image_h", 1, 4096));
  set_if(d.synth.image_w, r.integer("data", "image_w", 1, 4096));
  set_if(d.synth.channels, r.integer("data", "channels", 1, 64));
  set_if(d.synth.noise, r.real("data", "noise", 0.0, 10.0));
  if (!r.has("model", "num_classes")) m.num_classes = d.synth.num_classes;
  if (d.train_path.empty() && d.synth.num_classes != m.num_classes) {
    throw ConfigError("data.classes (" + std::to_string(d.synth.num_classes) + ") differs from model.num_classes (" +
                      std::to_string(m.num_classes) + ")");
  }
  if (d.train_path.empty() && (d.synth.image_h != m.image_h || d.synth.image_w != m.image_w ||
                               d.synth.channels != m.channels)) {
    throw ConfigError("data.image_h/image_w/channels differ from the model's input shape");
  }

  auto& t = c.train;
  auto& o = t.optimizer;
  set_if(t.epochs, r.integer("train", "epochs", 1, 100000));
  set_if(t.batch_size, r.integer("train", "batch_size", 1, 1 << 20));
  set_if(o.learning_rate, r.real("train", "lr", 0.0, 10.0, true));
  set_if(o.min_learning_rate, r.real("train", "min_lr", 0.0, 10.0));
  set_if(o.beta1, r.real("train", "beta1", 0.0, 1.0));
  set_if(o.beta2, r.real("train", "beta2", 0.0, 1.0));
  set_if(o.epsilon, r.real("train", "epsilon", 0.0, 1.0, true));
  set_if(o.weight_decay, r.real("train", "weight_decay", 0.0, 10.0));
  set_if(o.warmup_steps, r.integer("train", "warmup_steps", 0, kBig));
  set_if(o.grad_clip, r.real("train", "grad_clip", 0.0, 1e9));
  if (o.min_learning_rate > o.learning_rate) throw ConfigError("train.min_lr exceeds train.lr");
  if (o.beta1 >= 1.0) throw ConfigError("train.beta1 must be below 1");
  if (o.beta2 >= 1.0) throw ConfigError("train.beta2 must be below 1");

  auto& dl = c.dilute;
  if (r.has_section("dilute")) r.require("dilute", "schedule");
  set_if(dl.schedule, r.parsed("dilute", "schedule", parse_schedule_kind));
  if (auto v = r.integer("dilute", "T", 0, kBig)) dl.total = *v;
  set_if(dl.t_fraction, r.real("dilute", "t_fraction", 0.0, 1.0, true));
  set_if(dl.granularity, r.parsed("dilute", "granularity", parse_granularity));
  set_if(dl.compensate, r.boolean("dilute", "compensate"));
  set_if(dl.epochs, r.integer("dilute", "epochs", 1, 100000));
  set_if(dl.learning_rate, r.real("dilute", "lr", 0.0, 10.0, true));
  set_if(dl.warmup_steps, r.integer("dilute", "warmup_steps", 0, kBig));

  auto& s = c.select;
  if (r.has_section("select")) r.require("select", "method");
  if (auto v = r.str("select", "method")) {
    if (*v != "nose" && *v != "random" && *v != "first_n") {
      throw ConfigError("invalid value '" + *v + "' for select.method (nose, random or first_n)");
    }
    s.method = *v;
  }
  if (r.has("select", "n") && r.has("select", "ratio")) throw ConfigError("select.n and select.ratio are exclusive");
  if (auto v = r.integer("select", "n", 1, m.depth)) s.count = static_cast<int>(*v);
  set_if(s.ratio, r.real("select", "ratio", 0.0, 1.0, true));
  set_if(s.probe_size, r.integer("select", "probe_size", 1, kBig));
  set_if(s.probe_batch, r.integer("select", "probe_batch", 1, 1 << 20));
  set_if(s.target, r.parsed("select", "target", parse_te_target));

  try {
    m.validate();
    if (d.train_path.empty()) d.synth.validate();
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  c.removal_n();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace entroprune
