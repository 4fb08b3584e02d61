#include "fedmia/config.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "fedmia/util.hpp"

namespace fedmia {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

[[noreturn]] void fail(std::size_t line, const std::string& message) {
  throw ConfigError("config: line " + std::to_string(line) + ": " + message);
}

[[noreturn]] void fail_key(const std::string& key, const std::string& message) {
  throw ConfigError("config: key '" + key + "': " + message);
}

struct KeyValue {
  std::string value;
  std::size_t line = 0;
};

class KeyTable {
 public:
  void insert(const std::string& key, KeyValue kv) {
    if (entries_.count(key)) fail(kv.line, "duplicate key '" + key + "'");
    entries_[key] = std::move(kv);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string take(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::string value = it->second.value;
    entries_.erase(it);
    return value;
  }

  std::string take_required(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("config: missing required key '" + key + "'");
    std::string value = it->second.value;
    entries_.erase(it);
    return value;
  }

  void reject_leftovers() const {
    if (entries_.empty()) return;
    const auto& [key, kv] = *entries_.begin();
    fail(kv.line, "unknown key '" + key + "'");
  }

 private:
  std::map<std::string, KeyValue> entries_;
};

int parse_int(const std::string& key, const std::string& text) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail_key(key, "expected an integer, got '" + text + "'");
  }
  return value;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail_key(key, "expected a non-negative integer, got '" + text + "'");
  }
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail_key(key, "expected a number, got '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  fail_key(key, "expected true or false, got '" + text + "'");
}

std::vector<int> parse_layer_dims(const std::string& text) {
  if (text == "auto") return {};
  std::vector<int> dims;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    dims.push_back(parse_int("model.layer_dims", trim(field)));
  }
  if (dims.size() < 2) fail_key("model.layer_dims", "need at least 2 dims or 'auto'");
  for (int d : dims) {
    if (d < 1) fail_key("model.layer_dims", "dims must be positive");
  }
  return dims;
}

void check_fraction(const std::string& key, double value) {
  if (!(value > 0.0 && value < 1.0)) {
    fail_key(key, "must be in (0,1), got " + format_double(value));
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  KeyTable table;
  std::stringstream stream(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    if (value.empty()) fail(line_no, "empty value for key '" + key + "'");
    table.insert(key, {value, line_no});
  }

  ExperimentConfig cfg;
  const std::string kind = table.take_required("dataset.kind");
  if (kind == "synthetic") {
    cfg.kind = DatasetKind::Synthetic;
    cfg.synthetic.samples = parse_int("dataset.synthetic.samples",
                                      table.take_required("dataset.synthetic.samples"));
    cfg.synthetic.features = parse_int("dataset.synthetic.features",
                                       table.take_required("dataset.synthetic.features"));
    cfg.synthetic.classes = parse_int("dataset.synthetic.classes",
                                      table.take_required("dataset.synthetic.classes"));
    cfg.synthetic.separation = parse_real("dataset.synthetic.separation",
                                          table.take_required("dataset.synthetic.separation"));
    if (cfg.synthetic.classes < 2) fail_key("dataset.synthetic.classes", "must be >= 2");
    if (cfg.synthetic.samples < cfg.synthetic.classes) {
      fail_key("dataset.synthetic.samples", "must be >= classes");
    }
    if (cfg.synthetic.features < cfg.synthetic.classes - 1) {
      fail_key("dataset.synthetic.features", "must be >= classes - 1");
    }
    if (!(cfg.synthetic.separation > 0)) fail_key("dataset.synthetic.separation", "must be > 0");
  } else if (kind == "idx") {
    cfg.kind = DatasetKind::Idx;
    cfg.idx.train_images = table.take_required("dataset.idx.train_images");
    cfg.idx.train_labels = table.take_required("dataset.idx.train_labels");
    cfg.idx.test_images = table.take("dataset.idx.test_images", "");
    cfg.idx.test_labels = table.take("dataset.idx.test_labels", "");
    if (cfg.idx.test_images.empty() != cfg.idx.test_labels.empty()) {
      fail_key("dataset.idx.test_images", "test images and labels must be given together");
    }
  } else if (kind == "csv") {
    cfg.kind = DatasetKind::Csv;
    cfg.csv.path = table.take_required("dataset.csv.path");
  } else {
    fail_key("dataset.kind", "expected synthetic, idx, or csv, got '" + kind + "'");
  }

  cfg.layer_dims = parse_layer_dims(table.take("model.layer_dims", "auto"));

  cfg.learning_rate = parse_real("train.learning_rate", table.take("train.learning_rate", "0.05"));
  if (!(cfg.learning_rate > 0)) fail_key("train.learning_rate", "must be > 0");
  cfg.batch_size = parse_int("train.batch_size", table.take("train.batch_size", "32"));
  if (cfg.batch_size < 1) fail_key("train.batch_size", "must be >= 1");
  cfg.local_epochs = parse_int("train.local_epochs", table.take("train.local_epochs", "1"));
  if (cfg.local_epochs < 1) fail_key("train.local_epochs", "must be >= 1");

  cfg.n_clients = parse_int("federation.clients", table.take("federation.clients", "2"));
  if (cfg.n_clients < 1) fail_key("federation.clients", "must be >= 1");
  cfg.rounds = parse_int("federation.rounds", table.take("federation.rounds", "30"));
  if (cfg.rounds < 0) fail_key("federation.rounds", "must be >= 0");
  {
    const std::string strategy = table.take("federation.strategy", "fedavg");
    const auto parsed = strategy_from_string(strategy);
    if (!parsed) fail_key("federation.strategy", "unknown strategy '" + strategy + "'");
    cfg.strategy = *parsed;
  }
  cfg.reference_fraction = parse_real("federation.reference_fraction",
                                      table.take("federation.reference_fraction", "0.1"));
  if (!(cfg.reference_fraction >= 0.0 && cfg.reference_fraction < 1.0)) {
    fail_key("federation.reference_fraction", "must be in [0,1)");
  }
  {
    const std::string mode = table.take("federation.correct_confident_mode", "truth");
    if (mode == "truth") {
      cfg.cc_mode = CorrectConfidentMode::Truth;
    } else if (mode == "agreement") {
      cfg.cc_mode = CorrectConfidentMode::Agreement;
    } else {
      fail_key("federation.correct_confident_mode",
               "expected truth or agreement, got '" + mode + "'");
    }
  }
  cfg.checkpoints = parse_bool("federation.checkpoints",
                               table.take("federation.checkpoints", "false"));

  cfg.test_fraction = parse_real("split.test_fraction", table.take("split.test_fraction", "0.15"));
  check_fraction("split.test_fraction", cfg.test_fraction);
  cfg.holdout_fraction =
      parse_real("split.holdout_fraction", table.take("split.holdout_fraction", "0.2"));
  check_fraction("split.holdout_fraction", cfg.holdout_fraction);
  cfg.shadow_fraction =
      parse_real("split.shadow_fraction", table.take("split.shadow_fraction", "0.25"));
  check_fraction("split.shadow_fraction", cfg.shadow_fraction);
  if (cfg.test_fraction + cfg.holdout_fraction + cfg.shadow_fraction >= 0.95) {
    fail_key("split.test_fraction",
             "test + holdout + shadow fractions must leave at least 5% for training");
  }

  cfg.k_shadows = parse_int("attack.shadows", table.take("attack.shadows", "4"));
  if (cfg.k_shadows < 1) fail_key("attack.shadows", "must be >= 1");
  cfg.eval_size = parse_int("attack.eval_size", table.take("attack.eval_size", "500"));
  if (cfg.eval_size < 1) fail_key("attack.eval_size", "must be >= 1");
  cfg.mia_cadence = parse_int("attack.cadence", table.take("attack.cadence", "1"));
  if (cfg.mia_cadence < 0) fail_key("attack.cadence", "must be >= 0");
  cfg.shadow_epochs = parse_int("attack.shadow_epochs", table.take("attack.shadow_epochs", "0"));
  if (cfg.shadow_epochs < 0) fail_key("attack.shadow_epochs", "must be >= 0");

  cfg.seed = parse_u64("seed", table.take("seed", "1"));
  cfg.output_dir = table.take("output", "out");

  table.reject_leftovers();
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  ExperimentConfig cfg = parse_config(read_file(path));
  if (cfg.kind == DatasetKind::Idx) {
    for (const std::string& p :
         {cfg.idx.train_images, cfg.idx.train_labels, cfg.idx.test_images, cfg.idx.test_labels}) {
      if (!p.empty() && !std::filesystem::exists(p)) {
        throw ConfigError("config: referenced file does not exist: " + p);
      }
    }
  }
  if (cfg.kind == DatasetKind::Csv && !std::filesystem::exists(cfg.csv.path)) {
    throw ConfigError("config: referenced file does not exist: " + cfg.csv.path);
  }
  return cfg;
}

namespace {

std::string serialize_body(const ExperimentConfig& cfg, bool include_output) {
  std::string out;
  const auto emit = [&out](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };

  switch (cfg.kind) {
    case DatasetKind::Synthetic:
      emit("dataset.kind", "synthetic");
      emit("dataset.synthetic.samples", std::to_string(cfg.synthetic.samples));
      emit("dataset.synthetic.features", std::to_string(cfg.synthetic.features));
      emit("dataset.synthetic.classes", std::to_string(cfg.synthetic.classes));
      emit("dataset.synthetic.separation", format_double(cfg.synthetic.separation));
      break;
    case DatasetKind::Idx:
      emit("dataset.kind", "idx");
      emit("dataset.idx.train_images", cfg.idx.train_images);
      emit("dataset.idx.train_labels", cfg.idx.train_labels);
      if (!cfg.idx.test_images.empty()) {
        emit("dataset.idx.test_images", cfg.idx.test_images);
        emit("dataset.idx.test_labels", cfg.idx.test_labels);
      }
      break;
    case DatasetKind::Csv:
      emit("dataset.kind", "csv");
      emit("dataset.csv.path", cfg.csv.path);
      break;
  }

  if (cfg.layer_dims.empty()) {
    emit("model.layer_dims", "auto");
  } else {
    std::string dims;
    for (std::size_t i = 0; i < cfg.layer_dims.size(); ++i) {
      if (i) dims += ',';
      dims += std::to_string(cfg.layer_dims[i]);
    }
    emit("model.layer_dims", dims);
  }

  emit("train.learning_rate", format_double(cfg.learning_rate));
  emit("train.batch_size", std::to_string(cfg.batch_size));
  emit("train.local_epochs", std::to_string(cfg.local_epochs));
  emit("federation.clients", std::to_string(cfg.n_clients));
  emit("federation.rounds", std::to_string(cfg.rounds));
  emit("federation.strategy", to_string(cfg.strategy));
  emit("federation.reference_fraction", format_double(cfg.reference_fraction));
  emit("federation.correct_confident_mode",
       cfg.cc_mode == CorrectConfidentMode::Truth ? "truth" : "agreement");
  emit("federation.checkpoints", cfg.checkpoints ? "true" : "false");
  emit("split.test_fraction", format_double(cfg.test_fraction));
  emit("split.holdout_fraction", format_double(cfg.holdout_fraction));
  emit("split.shadow_fraction", format_double(cfg.shadow_fraction));
  emit("attack.shadows", std::to_string(cfg.k_shadows));
  emit("attack.eval_size", std::to_string(cfg.eval_size));
  emit("attack.cadence", std::to_string(cfg.mia_cadence));
  emit("attack.shadow_epochs", std::to_string(cfg.shadow_epochs));
  emit("seed", std::to_string(cfg.seed));
  if (include_output) emit("output", cfg.output_dir);
  return out;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& config) {
  return serialize_body(config, true);
}

std::string config_hash(const ExperimentConfig& config) {
  const std::uint64_t h = fnv1a64(serialize_body(config, false));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fedmia
