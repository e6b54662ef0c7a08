#include "judgecal/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "judgecal/core_model.hpp"
#include "judgecal/ensemble.hpp"
#include "judgecal/error.hpp"
#include "judgecal/harness.hpp"
#include "judgecal/io.hpp"
#include "judgecal/regression.hpp"
#include "judgecal/repair.hpp"

namespace judgecal::cli {

namespace fs = std::filesystem;

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> defaults = [] {
    const LossWeights w;
    const SolverConfig s;
    const RepairConfig r;
    const SynthConfig synth = default_profile(1, 1);
    std::string variants;
    for (const auto& v : r.line_key_variants) variants += (variants.empty() ? "" : ",") + v;
    return std::map<std::string, std::string>{
        {"lambda_g", format_double(w.lambda_g)},
        {"lambda_v_plus", format_double(w.lambda_v_plus)},
        {"lambda_v_minus", format_double(w.lambda_v_minus)},
        {"tolerance", format_double(s.tolerance)},
        {"max_iterations", std::to_string(s.max_iterations)},
        {"restarts", std::to_string(s.restarts)},
        {"clamp_epsilon", format_double(s.clamp_epsilon)},
        {"sqrt_epsilon", format_double(s.sqrt_epsilon)},
        {"init_delta_max", format_double(s.init_delta_max)},
        {"seed", "0"},
        {"similarity_threshold", std::to_string(r.similarity_threshold)},
        {"strict", "false"},
        {"line_key_variants", variants},
        {"threshold", ""},
        {"generators", "14"},
        {"validators", "14"},
        {"items_per_generator", std::to_string(synth.items_per_generator)},
        {"missing_rate", format_double(synth.missing_rate)},
        {"repairable_fraction", format_double(synth.repairable_fraction)},
        {"missing_generator_share", format_double(synth.missing_generator_share)},
        {"missing_item_dropout", format_double(synth.missing_item_dropout)},
    };
  }();
  return defaults;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> values;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (!config_defaults().contains(key)) {
      throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(number) + ": unknown key '" + key + "'");
    }
    values[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return values;
}

std::map<std::string, std::string> parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return parse_config(in);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::IoError, "sha256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream content;
  content << in.rdbuf();
  return sha256_hex(content.str());
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["tool_version"] = std::string(kToolVersion);
  j["seed"] = seed;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& p : inputs) files.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}});
  j["inputs"] = files;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

std::string RunManifest::config_hash() const {
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  return sha256_hex(cfg.dump()).substr(0, 8);
}

namespace {

// Resolved values for the config keys one subcommand reads: defaults, then
// the --config file, then explicit flags.
class Settings {
 public:
  void bind(CLI::App* app, const std::string& key, const std::string& help) {
    auto* opt = key == "strict" ? app->add_flag("--strict{true}", flags_[key], help)
                                : app->add_option("--" + key, flags_[key], help);
    options_[key] = opt;
  }

  void resolve(const std::string& config_path) {
    std::map<std::string, std::string> file;
    if (!config_path.empty()) file = parse_config(fs::path(config_path));
    for (const auto& [key, opt] : options_) {
      if (opt->count() > 0) {
        values_[key] = flags_[key];
      } else if (auto it = file.find(key); it != file.end()) {
        values_[key] = it->second;
      } else {
        values_[key] = config_defaults().at(key);
      }
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }
  const std::string& text(const std::string& key) const { return values_.at(key); }

  double real(const std::string& key) const {
    const auto& s = text(key);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) bad(key);
    return v;
  }

  long long integer(const std::string& key) const {
    const auto& s = text(key);
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) bad(key);
    return v;
  }

  std::uint64_t seed() const {
    const auto& s = text("seed");
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) bad("seed");
    return v;
  }

  bool boolean(const std::string& key) const {
    const auto& s = text(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    bad(key);
    return false;
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(text(key));
    for (std::string part; std::getline(ss, part, ',');) {
      if (auto t = trim(part); !t.empty()) out.push_back(t);
    }
    return out;
  }

 private:
  [[noreturn]] void bad(const std::string& key) const {
    throw Error(ErrorKind::InvalidConfig, "bad value '" + text(key) + "' for " + key);
  }

  std::map<std::string, std::string> flags_;
  std::map<std::string, CLI::Option*> options_;
  std::map<std::string, std::string> values_;
};

struct Command {
  explicit Command(CLI::App* sub) : app(sub) {}

  CLI::App* app;
  Settings settings;
  std::string config_path;
  std::string out_dir;
};

void add_common(Command& c, bool needs_seed = true) {
  c.app->add_option("--config", c.config_path, "flat key = value settings file")->check(CLI::ExistingFile);
  c.app->add_option("--out", c.out_dir, "output directory")->required();
  if (needs_seed) c.settings.bind(c.app, "seed", "random seed");
}

void bind_solver(Command& c) {
  for (const char* key : {"lambda_g", "lambda_v_plus", "lambda_v_minus", "tolerance", "max_iterations",
                          "restarts", "clamp_epsilon", "sqrt_epsilon", "init_delta_max"}) {
    c.settings.bind(c.app, key, "regression setting");
  }
}

LossWeights weights_from(const Settings& s) {
  LossWeights w;
  w.lambda_g = s.real("lambda_g");
  w.lambda_v_plus = s.real("lambda_v_plus");
  w.lambda_v_minus = s.real("lambda_v_minus");
  if (w.lambda_g < 0 || w.lambda_v_plus < 0 || w.lambda_v_minus < 0) {
    throw Error(ErrorKind::InvalidConfig, "loss weights must be non-negative");
  }
  return w;
}

SolverConfig solver_from(const Settings& s) {
  SolverConfig c;
  c.tolerance = s.real("tolerance");
  c.max_iterations = static_cast<int>(s.integer("max_iterations"));
  c.restarts = static_cast<int>(s.integer("restarts"));
  c.clamp_epsilon = s.real("clamp_epsilon");
  c.sqrt_epsilon = s.real("sqrt_epsilon");
  c.init_delta_max = s.real("init_delta_max");
  c.seed = s.seed();
  c.validate();
  return c;
}

MissingPolicy policy_from(const Settings& s) {
  return s.boolean("strict") ? MissingPolicy::CountAsInvalid : MissingPolicy::Exclude;
}

// Files a command reads; checked so that no output replaces one of them.
class Inputs {
 public:
  const fs::path& add(const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorKind::IoError, "missing input " + p.string());
    paths_.push_back(p);
    return paths_.back();
  }
  const std::vector<fs::path>& paths() const { return paths_; }

  void guard_directory(const fs::path& dir) const {
    const auto target = fs::weakly_canonical(dir);
    for (const auto& p : paths_) {
      if (fs::weakly_canonical(p).parent_path() == target) {
        throw Error(ErrorKind::InvalidConfig, "output directory " + dir.string() + " holds input " + p.string());
      }
    }
  }

  void guard(const fs::path& output) const {
    const auto target = fs::weakly_canonical(output);
    for (const auto& p : paths_) {
      if (fs::weakly_canonical(p) == target) {
        throw Error(ErrorKind::InvalidConfig, "refusing to overwrite input " + p.string());
      }
    }
  }

 private:
  std::vector<fs::path> paths_;
};

class Outputs {
 public:
  Outputs(fs::path dir, const Inputs& inputs) : dir_(std::move(dir)), inputs_(inputs) {
    inputs_.guard_directory(dir_);
    fs::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& content) const {
    const auto path = dir_ / name;
    inputs_.guard(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << content;
  }

  template <typename Writer>
  void write_with(const std::string& name, Writer&& writer) const {
    std::ostringstream buf;
    writer(buf);
    write(name, buf.str());
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  const Inputs& inputs_;
};

void write_manifest(const Outputs& out, const std::string& name, const std::string& command,
                    const Inputs& inputs, const Settings& settings) {
  RunManifest m;
  m.command = command;
  m.inputs = inputs.paths();
  m.config = settings.values();
  m.seed = settings.values().contains("seed") ? settings.seed() : 0;
  out.write(name, m.to_json());
}

struct Store {
  std::vector<Judgment> judgments;
  std::vector<AnnotationRecord> annotations;
  std::vector<FeedbackItem> items;
};

Store load_store(const fs::path& dir, Inputs& inputs, bool need_annotations) {
  Store store;
  store.judgments = io::read_judgments(inputs.add(dir / "judgments.jsonl"));
  if (fs::exists(dir / "annotations.jsonl")) {
    store.annotations = io::read_annotations(inputs.add(dir / "annotations.jsonl"));
  } else if (need_annotations) {
    throw Error(ErrorKind::NoAnnotations, "store has no annotations.jsonl");
  }
  if (fs::exists(dir / "items.jsonl")) store.items = io::read_feedback_items(inputs.add(dir / "items.jsonl"));
  return store;
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    if (auto t = trim(line); !t.empty() && t[0] != '#') ids.push_back(t);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<std::string> annotated_ids(const std::vector<AnnotationRecord>& annotations) {
  std::set<std::string> ids;
  for (const auto& a : annotations) ids.insert(a.generator);
  return {ids.begin(), ids.end()};
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out.push_back(sep);
    out += p;
  }
  return out;
}

// ---------------------------------------------------------------- synth

int cmd_synth(Command& c, std::ostream& out) {
  Inputs inputs;
  const auto& s = c.settings;
  SynthConfig cfg = default_profile(static_cast<std::size_t>(s.integer("generators")),
                                    static_cast<std::size_t>(s.integer("validators")), s.seed(),
                                    static_cast<std::size_t>(s.integer("items_per_generator")));
  cfg.missing_rate = s.real("missing_rate");
  cfg.repairable_fraction = s.real("repairable_fraction");
  cfg.missing_generator_share = s.real("missing_generator_share");
  cfg.missing_item_dropout = s.real("missing_item_dropout");
  const SynthCorpus corpus = synth_generate(cfg);

  Outputs o(c.out_dir, inputs);
  o.write_with("raw.jsonl", [&](std::ostream& f) { io::write_raw_outputs(f, corpus.raw); });
  o.write_with("items.jsonl", [&](std::ostream& f) { io::write_feedback_items(f, corpus.items); });
  o.write_with("annotations.jsonl", [&](std::ostream& f) { io::write_annotations(f, corpus.annotations); });
  o.write_with("judgments.jsonl", [&](std::ostream& f) { io::write_judgments(f, corpus.judgments); });
  o.write_with("truth.tsv", [&](std::ostream& f) {
    f << "parameter\tid\tvalue\n";
    for (std::size_t i = 0; i < cfg.g.size(); ++i) f << "g\t" << generator_id(i) << '\t' << format_double(cfg.g[i]) << '\n';
    for (std::size_t j = 0; j < cfg.v_plus.size(); ++j) {
      f << "v_plus\t" << validator_id(j) << '\t' << format_double(cfg.v_plus[j]) << '\n';
    }
    for (std::size_t j = 0; j < cfg.v_minus.size(); ++j) {
      f << "v_minus\t" << validator_id(j) << '\t' << format_double(cfg.v_minus[j]) << '\n';
    }
    for (const auto& [id, p] : ground_truth_precision(corpus.annotations)) {
      f << "precision\t" << id << '\t' << format_double(p) << '\n';
    }
  });
  o.write_with("injection.tsv", [&](std::ostream& f) {
    f << "fault\terror_kind\trepairable\tcount\n";
    for (std::size_t k = 0; k < kFaultKinds; ++k) {
      const auto kind = static_cast<FaultKind>(k);
      f << to_string(kind) << '\t' << to_string(missing_kind_of(kind)) << '\t'
        << (is_repairable(kind) ? "true" : "false") << '\t' << corpus.ledger.count(kind) << '\n';
    }
  });
  write_manifest(o, "manifest.json", "synth", inputs, c.settings);

  std::size_t missing = 0;
  for (const auto& j : corpus.judgments) missing += j.label.is_missing();
  out << "judgments\t" << corpus.judgments.size() << "\nmissing\t" << missing << "\ninjected\t"
      << corpus.ledger.injected << "\nrepairable\t" << corpus.ledger.repairable << '\n';
  return 0;
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::vector<std::string> judgments;
  std::vector<std::string> raw;
  std::vector<std::string> items;
  std::vector<std::string> annotations;
};

int cmd_ingest(Command& c, const IngestArgs& args, std::ostream& out) {
  if (args.judgments.empty() && args.raw.empty()) {
    throw Error(ErrorKind::InvalidConfig, "ingest needs --judgments or --raw files");
  }
  Inputs inputs;
  const auto variants = c.settings.list("line_key_variants");

  std::vector<AnnotationRecord> annotations;
  std::map<ItemKey, std::pair<FeedbackCategory, std::string>> seen_annotations;
  for (const auto& p : args.annotations) {
    auto records = io::read_annotations(inputs.add(p));
    out << p << "\tannotations\t" << records.size() << '\n';
    for (auto& a : records) {
      auto [it, inserted] = seen_annotations.emplace(a.key(), std::pair{a.category, p});
      if (!inserted) {
        if (it->second.first != a.category) {
          throw Error(ErrorKind::DuplicateConflict, "annotation for " + a.generator + "/" + a.task +
                                                        " disagrees between " + it->second.second +
                                                        " and " + p);
        }
        continue;
      }
      annotations.push_back(std::move(a));
    }
  }

  std::vector<FeedbackItem> items;
  for (const auto& p : args.items) {
    auto records = io::read_feedback_items(inputs.add(p));
    out << p << "\titems\t" << records.size() << '\n';
    items.insert(items.end(), records.begin(), records.end());
  }
  if (items.empty()) {
    for (const auto& a : annotations) items.push_back({a.generator, a.task, a.line, a.feedback});
  }
  {
    std::set<ItemKey> keys;
    std::vector<FeedbackItem> unique;
    for (auto& item : items) {
      if (keys.insert(item.key()).second) unique.push_back(std::move(item));
    }
    items = std::move(unique);
  }

  std::vector<Judgment> judgments;
  for (const auto& p : args.judgments) {
    auto records = io::read_judgments(inputs.add(p));
    out << p << "\tjudgments\t" << records.size() << '\n';
    judgments.insert(judgments.end(), records.begin(), records.end());
  }
  std::vector<RawValidatorOutput> raw;
  for (const auto& p : args.raw) {
    auto records = io::read_raw_outputs(inputs.add(p), variants);
    out << p << "\traw\t" << records.size() << '\n';
    raw.insert(raw.end(), records.begin(), records.end());
  }
  if (!raw.empty()) {
    if (items.empty()) throw Error(ErrorKind::InvalidConfig, "raw outputs need --items or --annotations");
    raw = io::dedupe_raw_outputs(raw);
    const FeedbackCorpus corpus(items);
    for (const auto& r : raw) judgments.push_back(parse_exact(r, corpus));
  }
  judgments = dedupe_judgments(judgments);

  Outputs o(c.out_dir, inputs);
  o.write_with("judgments.jsonl", [&](std::ostream& f) { io::write_judgments(f, judgments); });
  if (!raw.empty()) o.write_with("raw.jsonl", [&](std::ostream& f) { io::write_raw_outputs(f, raw); });
  if (!items.empty()) o.write_with("items.jsonl", [&](std::ostream& f) { io::write_feedback_items(f, items); });
  if (!annotations.empty()) {
    o.write_with("annotations.jsonl", [&](std::ostream& f) { io::write_annotations(f, annotations); });
  }
  write_manifest(o, "manifest.json", "ingest", inputs, c.settings);
  out << "stored\tjudgments\t" << judgments.size() << "\nstored\tannotations\t" << annotations.size()
      << "\nstored\titems\t" << items.size() << '\n';
  return 0;
}

// ---------------------------------------------------------------- repair

int cmd_repair(Command& c, const std::string& store_dir, std::ostream& out) {
  Inputs inputs;
  const fs::path dir(store_dir);
  RepairConfig config;
  config.similarity_threshold = static_cast<int>(c.settings.integer("similarity_threshold"));
  config.strict = c.settings.boolean("strict");
  config.line_key_variants = c.settings.list("line_key_variants");
  config.validate();

  const auto raw = io::read_raw_outputs(inputs.add(dir / "raw.jsonl"), config.line_key_variants);
  const auto items = io::read_feedback_items(inputs.add(dir / "items.jsonl"));
  std::vector<AnnotationRecord> annotations;
  if (fs::exists(dir / "annotations.jsonl")) annotations = io::read_annotations(inputs.add(dir / "annotations.jsonl"));

  const auto result = repair_pipeline(raw, FeedbackCorpus(items), config);

  Outputs o(c.out_dir, inputs);
  o.write_with("judgments.jsonl", [&](std::ostream& f) { io::write_judgments(f, result.judgments); });
  o.write_with("raw.jsonl", [&](std::ostream& f) { io::write_raw_outputs(f, result.repaired_raw); });
  o.write_with("items.jsonl", [&](std::ostream& f) { io::write_feedback_items(f, items); });
  if (!annotations.empty()) {
    o.write_with("annotations.jsonl", [&](std::ostream& f) { io::write_annotations(f, annotations); });
  }
  o.write_with("repair_report.tsv", [&](std::ostream& f) {
    f << "error_kind\tcount_before\tcount_repaired\tcount_remaining\n";
    for (auto kind : {MissingKind::MissingFeedback, MissingKind::LabelMismatch, MissingKind::LineMismatch,
                      MissingKind::MalformedRecord}) {
      const auto& k = result.stats[kind];
      f << to_string(kind) << '\t' << k.count_before << '\t' << k.count_repaired << '\t' << k.count_remaining
        << '\n';
    }
  });
  o.write_with("repair_summary.tsv", [&](std::ostream& f) {
    f << "metric\tvalue\n";
    f << "total\t" << result.stats.total << '\n';
    f << "missing_before\t" << format_double(result.stats.missing_before()) << '\n';
    f << "missing_after\t" << format_double(result.stats.missing_after()) << '\n';
    f << "missing_policy\t" << (config.strict ? "count-as-invalid" : "exclude") << '\n';
  });
  write_manifest(o, "manifest.json", "repair", inputs, c.settings);

  out << std::fixed << std::setprecision(2) << "missing before\t" << 100.0 * result.stats.missing_before()
      << "%\nmissing after\t" << 100.0 * result.stats.missing_after() << "%\n";
  return 0;
}

// ---------------------------------------------------------------- matrix

int cmd_matrix(Command& c, const std::string& store_dir, std::ostream& out) {
  Inputs inputs;
  const auto store = load_store(store_dir, inputs, false);
  const auto policy = policy_from(c.settings);
  const auto matrix = build_matrix(store.judgments, policy);

  Outputs o(c.out_dir, inputs);
  o.write_with("matrix.tsv", [&](std::ostream& f) {
    f << "generator\tvalidator\tvalid\tinvalid\tmissing\tfraction\n";
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
      for (std::size_t j = 0; j < matrix.cols(); ++j) {
        const auto& cell = matrix.cell(i, j);
        f << matrix.generators()[i] << '\t' << matrix.validators()[j] << '\t' << cell.valid_count << '\t'
          << cell.invalid_count << '\t' << cell.missing_count << '\t'
          << (cell.fraction ? format_double(*cell.fraction) : "NA") << '\n';
      }
    }
  });
  if (!store.annotations.empty()) {
    o.write_with("reliability.tsv", [&](std::ostream& f) {
      f << "validator\tv_plus\tv_minus\tn_valid_items\tn_invalid_items\n";
      for (const auto& r : compute_reliability(store.judgments, store.annotations, policy)) {
        f << r.validator << '\t' << (r.v_plus ? format_double(*r.v_plus) : "NA") << '\t'
          << (r.v_minus ? format_double(*r.v_minus) : "NA") << '\t' << r.n_valid_items << '\t'
          << r.n_invalid_items << '\n';
      }
    });
    o.write_with("agreement.tsv", [&](std::ostream& f) {
      const auto h = agreement_histogram(store.judgments, store.annotations);
      f << "truth\tagreeing_validators\titems\n";
      for (std::size_t k = 0; k < h.valid_truth.size(); ++k) f << "valid\t" << k << '\t' << h.valid_truth[k] << '\n';
      for (std::size_t k = 0; k < h.invalid_truth.size(); ++k) {
        f << "invalid\t" << k << '\t' << h.invalid_truth[k] << '\n';
      }
    });
  }
  write_manifest(o, "manifest.json", "matrix", inputs, c.settings);
  out << "generators\t" << matrix.rows() << "\nvalidators\t" << matrix.cols() << "\nempty_cells\t"
      << matrix.empty_cells().size() << '\n';
  return 0;
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string store;
  std::string method = "veto";
  std::string validator;
  std::string anchors;
};

std::optional<VotingStrategy> strategy_for(const std::string& method, std::uint32_t panel,
                                           const Settings& s) {
  const bool explicit_threshold = !s.text("threshold").empty();
  auto threshold = [&](std::uint32_t fallback) {
    return explicit_threshold ? static_cast<std::uint32_t>(s.integer("threshold")) : fallback;
  };
  if (method == "majority") return VotingStrategy::valid_threshold(threshold(default_majority_threshold(panel)));
  if (method == "supermajority") {
    return VotingStrategy::valid_threshold(threshold(default_supermajority_threshold(panel)));
  }
  if (method == "veto") return VotingStrategy::invalid_veto(threshold(default_veto_threshold(panel)));
  return std::nullopt;
}

int cmd_estimate(Command& c, const EstimateArgs& args, std::ostream& out) {
  static const std::set<std::string> kMethods = {"mean", "single", "majority", "supermajority", "veto",
                                                 "regression"};
  if (!kMethods.contains(args.method)) throw Error(ErrorKind::InvalidConfig, "unknown method " + args.method);
  Inputs inputs;
  const auto store = load_store(args.store, inputs, false);
  const auto policy = policy_from(c.settings);
  const auto truth = store.annotations.empty() ? GeneratorValues{} : ground_truth_precision(store.annotations);
  const auto matrix = build_matrix(store.judgments, policy);

  GeneratorValues estimates;
  std::string threshold_text;
  std::optional<CalibrationEstimate> fit_result;
  std::vector<std::string> anchor_ids;
  Anchors anchors;

  if (args.method == "mean") {
    estimates = mean_baseline(matrix);
  } else if (args.method == "single") {
    const auto j = matrix.validator_index(args.validator);
    if (!j) throw Error(ErrorKind::InvalidConfig, "unknown validator '" + args.validator + "'");
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
      if (const auto& f = matrix.cell(i, *j).fraction) estimates[matrix.generators()[i]] = *f;
    }
  } else if (args.method == "regression") {
    if (!args.anchors.empty()) anchor_ids = read_id_list(inputs.add(args.anchors));
    if (!anchor_ids.empty()) anchors = make_anchors(matrix, store.judgments, store.annotations, anchor_ids);
    fit_result = fit(matrix, anchors, weights_from(c.settings), solver_from(c.settings));
    for (std::size_t i = 0; i < matrix.rows(); ++i) estimates[matrix.generators()[i]] = fit_result->params.g[i];
  } else {
    const ItemTallies tallies(store.judgments, store.items);
    const auto strategy = *strategy_for(args.method, tallies.panel_size(), c.settings);
    threshold_text = std::to_string(strategy.threshold);
    estimates = tallies.precision(strategy);
  }

  Outputs o(c.out_dir, inputs);
  GeneratorValues predicted_annotated;
  GeneratorValues truth_annotated;
  o.write_with("estimates.tsv", [&](std::ostream& f) {
    f << "generator\tmethod\tthreshold\testimate\ttruth\tabs_error\n";
    for (const auto& [gen, value] : estimates) {
      f << gen << '\t' << args.method << '\t' << (threshold_text.empty() ? "NA" : threshold_text) << '\t'
        << format_double(value) << '\t';
      if (auto t = truth.find(gen); t != truth.end()) {
        f << format_double(t->second) << '\t' << format_double(std::abs(value - t->second)) << '\n';
        predicted_annotated[gen] = value;
        truth_annotated[gen] = t->second;
      } else {
        f << "NA\tNA\n";
      }
    }
  });
  if (fit_result) {
    const std::set<std::string> anchored(anchor_ids.begin(), anchor_ids.end());
    o.write_with("fit_report.tsv", [&](std::ostream& f) {
      f << "parameter\testimate\trole\n";
      const auto& p = fit_result->params;
      for (std::size_t i = 0; i < p.g.size(); ++i) {
        const auto& id = matrix.generators()[i];
        f << "g[" << id << "]\t" << format_double(p.g[i]) << '\t' << (anchored.contains(id) ? "anchored" : "free")
          << '\n';
      }
      for (std::size_t j = 0; j < p.v_plus.size(); ++j) {
        const bool a = !anchors.empty() && anchors.v_plus[j].has_value();
        f << "v_plus[" << matrix.validators()[j] << "]\t" << format_double(p.v_plus[j]) << '\t'
          << (a ? "anchored" : "free") << '\n';
      }
      for (std::size_t j = 0; j < p.v_minus.size(); ++j) {
        const bool a = !anchors.empty() && anchors.v_minus[j].has_value();
        f << "v_minus[" << matrix.validators()[j] << "]\t" << format_double(p.v_minus[j]) << '\t'
          << (a ? "anchored" : "free") << '\n';
      }
    });
    o.write_with("fit_summary.tsv", [&](std::ostream& f) {
      f << "metric\tvalue\n";
      f << "training_loss\t" << format_double(fit_result->training_loss) << '\n';
      f << "iterations\t" << fit_result->iterations << '\n';
      f << "converged\t" << (fit_result->converged ? "true" : "false") << '\n';
      f << "restart_index\t" << fit_result->restart_index << '\n';
      f << "seed\t" << fit_result->seed << '\n';
    });
  }
  write_manifest(o, "manifest.json", "estimate", inputs, c.settings);

  out << "generators\t" << estimates.size() << '\n';
  if (!predicted_annotated.empty()) {
    const auto report = error_metrics(predicted_annotated, truth_annotated);
    out << "annotated_max_abs_error\t" << format_double(report.max_abs_error) << '\n';
  }
  if (fit_result) out << "converged\t" << (fit_result->converged ? "true" : "false") << '\n';
  return 0;
}

// ------------------------------------------------------- calibrate-threshold

int cmd_calibrate(Command& c, const std::string& store_dir, const std::string& family_name,
                  const std::string& calibration_path, std::ostream& out) {
  StrategyFamily family;
  if (family_name == "veto") {
    family = StrategyFamily::InvalidVeto;
  } else if (family_name == "majority") {
    family = StrategyFamily::ValidThreshold;
  } else {
    throw Error(ErrorKind::InvalidConfig, "unknown family " + family_name);
  }
  Inputs inputs;
  const auto store = load_store(store_dir, inputs, true);
  auto ids = calibration_path.empty() ? annotated_ids(store.annotations)
                                      : read_id_list(inputs.add(calibration_path));
  const auto all_truth = ground_truth_precision(store.annotations);
  GeneratorValues truth;
  for (const auto& id : ids) {
    auto it = all_truth.find(id);
    if (it == all_truth.end()) throw Error(ErrorKind::NoAnnotations, "generator " + id + " is not annotated");
    truth[id] = it->second;
  }
  const ItemTallies tallies(store.judgments, store.items);
  const auto result = calibrate_threshold(tallies, truth, family);

  Outputs o(c.out_dir, inputs);
  o.write_with("threshold_sweep.tsv", [&](std::ostream& f) {
    f << "family\tthreshold\tmax_abs_error\tmean_abs_error\tselected\n";
    for (const auto& [t, report] : result.sweep) {
      f << to_string(family) << '\t' << t << '\t' << format_double(report.max_abs_error) << '\t'
        << format_double(report.mean_abs_error) << '\t' << (t == result.strategy.threshold ? "true" : "false")
        << '\n';
    }
  });
  write_manifest(o, "manifest.json", "calibrate-threshold", inputs, c.settings);
  out << "threshold\t" << result.strategy.threshold << "\nmax_abs_error\t"
      << format_double(result.report.max_abs_error) << '\n';
  return 0;
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
  std::string store;
  std::string annotated;
  std::optional<std::size_t> s_min;
  std::optional<std::size_t> s_max;
  std::vector<std::string> methods;
};

int cmd_experiment(Command& c, const ExperimentArgs& args, std::ostream& out) {
  Inputs inputs;
  const auto store = load_store(args.store, inputs, true);
  const auto ids = args.annotated.empty() ? annotated_ids(store.annotations) : read_id_list(inputs.add(args.annotated));

  ExperimentConfig config;
  config.weights = weights_from(c.settings);
  config.solver = solver_from(c.settings);
  config.policy = policy_from(c.settings);
  config.seed = c.settings.seed();

  const ExperimentData data(store.judgments, store.annotations, store.items, config.policy);
  const auto report = compare_methods(data, ids, config, args.s_min.value_or(0), args.s_max);

  const std::set<std::string> wanted(args.methods.begin(), args.methods.end());
  auto keep = [&](const std::string& name) { return wanted.empty() || wanted.contains(name); };

  RunManifest manifest;
  manifest.config = c.settings.values();
  const std::string tag = "seed" + std::to_string(config.seed) + "_" + manifest.config_hash();

  Outputs o(c.out_dir, inputs);
  o.write_with("experiment_" + tag + ".tsv", [&](std::ostream& f) {
    f << "s\tmethod\tdetail\tcombination\tcalibration\theld_out\tmax_abs_error\tmean_abs_error\tthreshold\n";
    for (std::size_t r = 0; r < report.summary.size(); ++r) {
      const auto& row = report.summary[r];
      if (!keep(row.method)) continue;
      const auto& result = report.results[r];
      for (std::size_t k = 0; k < result.combinations.size(); ++k) {
        const auto& combo = result.combinations[k];
        f << row.s << '\t' << row.method << '\t' << (row.detail.empty() ? "NA" : row.detail) << '\t' << k << '\t'
          << (combo.calibration.empty() ? "-" : join(combo.calibration, '+')) << '\t' << join(combo.held_out, '+')
          << '\t' << format_double(combo.report.max_abs_error) << '\t'
          << format_double(combo.report.mean_abs_error) << '\t'
          << (combo.threshold ? std::to_string(*combo.threshold) : "NA") << '\n';
      }
    }
  });
  o.write_with("summary_" + tag + ".tsv", [&](std::ostream& f) {
    f << "s\tmethod\tdetail\tcombinations\tmean_max_abs_error\tmean_mean_abs_error\n";
    for (const auto& row : report.summary) {
      if (!keep(row.method)) continue;
      f << row.s << '\t' << row.method << '\t' << (row.detail.empty() ? "NA" : row.detail) << '\t'
        << row.combinations << '\t' << format_double(row.mean_max_ae) << '\t' << format_double(row.mean_mean_ae)
        << '\n';
    }
  });
  write_manifest(o, "manifest_" + tag + ".json", "experiment", inputs, c.settings);

  out << std::fixed << std::setprecision(2);
  for (const auto& row : report.summary) {
    if (!keep(row.method)) continue;
    out << "s=" << row.s << '\t' << std::left << std::setw(20) << row.method << std::right << "max "
        << 100.0 * row.mean_max_ae << "%\tmean " << 100.0 * row.mean_mean_ae << "%\n";
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Estimate generator precision from biased LLM validators", "judgecal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  Command synth{app.add_subcommand("synth", "generate a synthetic corpus with injected faults")};
  add_common(synth);
  for (const char* key : {"generators", "validators", "items_per_generator", "missing_rate", "repairable_fraction",
                          "missing_generator_share", "missing_item_dropout"}) {
    synth.settings.bind(synth.app, key, "synthetic corpus setting");
  }

  IngestArgs ingest_args;
  Command ingest{app.add_subcommand("ingest", "validate and store judgment, raw and annotation files")};
  add_common(ingest, false);
  ingest.app->add_option("--judgments", ingest_args.judgments, "judgment JSONL files");
  ingest.app->add_option("--raw", ingest_args.raw, "raw validator output JSONL files");
  ingest.app->add_option("--items", ingest_args.items, "generated feedback item JSONL files");
  ingest.app->add_option("--annotations", ingest_args.annotations, "annotation JSONL files");
  ingest.settings.bind(ingest.app, "line_key_variants", "comma-separated line key spellings");

  std::string repair_store;
  Command repair{app.add_subcommand("repair", "repair missing judgments")};
  add_common(repair, false);
  repair.app->add_option("--store", repair_store, "store directory")->required();
  for (const char* key : {"similarity_threshold", "strict", "line_key_variants"}) {
    repair.settings.bind(repair.app, key, "repair setting");
  }

  std::string matrix_store;
  Command matrix{app.add_subcommand("matrix", "validation matrix and validator reliability")};
  add_common(matrix, false);
  matrix.app->add_option("--store", matrix_store, "store directory")->required();
  matrix.settings.bind(matrix.app, "strict", "count missing judgments as invalid");

  EstimateArgs estimate_args;
  Command estimate{app.add_subcommand("estimate", "per-generator precision estimates")};
  add_common(estimate);
  estimate.app->add_option("--store", estimate_args.store, "store directory")->required();
  estimate.app->add_option("--method", estimate_args.method, "mean|single|majority|supermajority|veto|regression")
      ->capture_default_str();
  estimate.app->add_option("--validator", estimate_args.validator, "validator for --method single");
  estimate.app->add_option("--anchors", estimate_args.anchors, "file of annotated generator ids to anchor on");
  estimate.settings.bind(estimate.app, "threshold", "ensemble threshold");
  estimate.settings.bind(estimate.app, "strict", "count missing judgments as invalid");
  bind_solver(estimate);

  std::string calibrate_store;
  std::string family = "veto";
  std::string calibration_path;
  Command calibrate{app.add_subcommand("calibrate-threshold", "pick an ensemble threshold on annotated generators")};
  add_common(calibrate, false);
  calibrate.app->add_option("--store", calibrate_store, "store directory")->required();
  calibrate.app->add_option("--family", family, "veto|majority")->capture_default_str();
  calibrate.app->add_option("--calibration", calibration_path, "file of generator ids (default: all annotated)");

  ExperimentArgs experiment_args;
  std::string methods_text;
  Command experiment{app.add_subcommand("experiment", "leave-s-out comparison of estimation methods")};
  add_common(experiment);
  experiment.app->add_option("--store", experiment_args.store, "store directory")->required();
  experiment.app->add_option("--annotated", experiment_args.annotated, "file of annotated generator ids");
  experiment.app->add_option("--s_min", experiment_args.s_min, "smallest calibration set size");
  experiment.app->add_option("--s_max", experiment_args.s_max, "largest calibration set size");
  experiment.app->add_option("--methods", methods_text, "comma-separated report rows to keep");
  experiment.settings.bind(experiment.app, "strict", "count missing judgments as invalid");
  bind_solver(experiment);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    auto dispatch = [&](Command& c, auto&& body) {
      c.settings.resolve(c.config_path);
      return body();
    };
    if (*synth.app) return dispatch(synth, [&] { return cmd_synth(synth, out); });
    if (*ingest.app) return dispatch(ingest, [&] { return cmd_ingest(ingest, ingest_args, out); });
    if (*repair.app) return dispatch(repair, [&] { return cmd_repair(repair, repair_store, out); });
    if (*matrix.app) return dispatch(matrix, [&] { return cmd_matrix(matrix, matrix_store, out); });
    if (*estimate.app) return dispatch(estimate, [&] { return cmd_estimate(estimate, estimate_args, out); });
    if (*calibrate.app) {
      return dispatch(calibrate, [&] { return cmd_calibrate(calibrate, calibrate_store, family, calibration_path, out); });
    }
    if (*experiment.app) {
      std::stringstream ss(methods_text);
      for (std::string m; std::getline(ss, m, ',');) {
        if (auto t = trim(m); !t.empty()) experiment_args.methods.push_back(t);
      }
      return dispatch(experiment, [&] { return cmd_experiment(experiment, experiment_args, out); });
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace judgecal::cli
