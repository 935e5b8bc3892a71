#include "oko/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "oko/errors.hpp"

namespace oko {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool is_non_negative_int(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Collects every violation while walking the config tree.
class Checker {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& where, const std::string& msg) { errors.push_back(where + ": " + msg); }

  bool object(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) {
      fail(where, "expected an object");
      return false;
    }
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, _] : j.items())
      if (!allowed.count(k)) fail(where, "unknown field '" + k + "'");
    return true;
  }

  void number(const json& j, const char* key, const std::string& where, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) return fail(where + "." + key, "expected a number");
    out = j[key].get<double>();
  }
  void unsigned_int(const json& j, const char* key, const std::string& where, std::size_t& out) {
    if (!j.contains(key)) return;
    if (!is_non_negative_int(j[key])) return fail(where + "." + key, "expected a non-negative integer");
    out = j[key].get<std::size_t>();
  }
  void integer(const json& j, const char* key, const std::string& where, int& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) return fail(where + "." + key, "expected an integer");
    out = j[key].get<int>();
  }
  void boolean(const json& j, const char* key, const std::string& where, bool& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_boolean()) return fail(where + "." + key, "expected true or false");
    out = j[key].get<bool>();
  }
  void string(const json& j, const char* key, const std::string& where, std::string& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_string()) return fail(where + "." + key, "expected a string");
    out = j[key].get<std::string>();
  }
  void path(const json& j, const char* key, const std::string& where, fs::path& out, const fs::path& base) {
    std::string s;
    string(j, key, where, s);
    if (s.empty()) return;
    fs::path p(s);
    out = p.is_absolute() || base.empty() ? p : base / p;
  }
};

std::string distribution_name(DistributionKind k) {
  return k == DistributionKind::kHeavyTailed ? "heavy_tailed" : "uniform";
}

void parse_loss_override(Checker& c, const json& j, const std::string& where, Method m, LossSpec& spec) {
  if (!c.object(j, where, {"kind", "smoothing", "focal_gamma", "weight_scale"})) return;
  if (j.contains("kind")) {
    std::string name;
    c.string(j, "kind", where, name);
    try {
      const LossKind kind = loss_kind_from_string(name);
      const bool ok = m == Method::kOko ? (kind == LossKind::kOkoHard || kind == LossKind::kOkoSoft)
                                        : kind == default_loss_for(m).kind;
      if (!ok) c.fail(where + ".kind", "loss '" + name + "' is not valid for method '" + to_string(m) + "'");
      else spec.kind = kind;
    } catch (const std::exception&) {
      if (!name.empty()) c.fail(where + ".kind", "unknown loss '" + name + "'");
    }
  }
  c.number(j, "smoothing", where, spec.smoothing);
  c.number(j, "focal_gamma", where, spec.focal_gamma);
  c.number(j, "weight_scale", where, spec.weight_scale);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + p.string());
  out << text;
  if (!out) throw InvalidArgument("write failed for " + p.string());
}

}  // namespace

int ExperimentConfig::num_classes() const {
  if (blobs) return blobs->num_classes;
  return idx ? idx->num_classes : 0;
}

TrainConfig ExperimentConfig::train_config(Method m, std::uint64_t seed) const {
  TrainConfig tc;
  tc.method = m;
  const auto it = losses.find(m);
  tc.loss = it != losses.end() ? it->second : default_loss_for(m);
  tc.k = k;
  tc.epochs = optimizer.epochs;
  tc.batch_size = optimizer.batch_size;
  tc.lr = optimizer.lr;
  tc.momentum = optimizer.momentum;
  tc.seed = seed;
  tc.aux_odd_head = aux_odd_head && m == Method::kOko;
  tc.aux_weight = aux_weight;
  tc.hidden = optimizer.hidden;
  tc.temperature = temperature;
  return tc;
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
  Checker c;
  ExperimentConfig cfg;
  if (!c.object(j, "config", {"dataset", "distribution", "methods", "loss_overrides", "k", "aux_odd_head",
                              "aux_weight", "temperature", "train_sizes", "seeds", "optimizer",
                              "test_fraction", "ece_bins", "output_dir"}))
    throw ValidationError(c.errors);

  // dataset
  if (!j.contains("dataset")) {
    c.fail("config", "missing required field 'dataset'");
  } else {
    const json& d = j["dataset"];
    std::string kind;
    if (d.is_object()) c.string(d, "kind", "dataset", kind);
    if (kind == "blobs") {
      BlobSource b;
      c.object(d, "dataset", {"kind", "num_classes", "dim", "separation", "pool_per_class"});
      c.integer(d, "num_classes", "dataset", b.num_classes);
      c.unsigned_int(d, "dim", "dataset", b.dim);
      c.number(d, "separation", "dataset", b.separation);
      c.unsigned_int(d, "pool_per_class", "dataset", b.pool_per_class);
      if (b.num_classes < 2) c.fail("dataset.num_classes", "need at least 2 classes");
      if (b.dim == 0) c.fail("dataset.dim", "must be positive");
      if (!(b.separation >= 0.0) || !std::isfinite(b.separation)) c.fail("dataset.separation", "must be finite and >= 0");
      if (b.pool_per_class < 2) c.fail("dataset.pool_per_class", "must be at least 2");
      cfg.blobs = b;
    } else if (kind == "idx") {
      IdxSource s;
      c.object(d, "dataset", {"kind", "train_images", "train_labels", "test_images", "test_labels", "num_classes"});
      c.path(d, "train_images", "dataset", s.train_images, base_dir);
      c.path(d, "train_labels", "dataset", s.train_labels, base_dir);
      c.path(d, "test_images", "dataset", s.test_images, base_dir);
      c.path(d, "test_labels", "dataset", s.test_labels, base_dir);
      c.integer(d, "num_classes", "dataset", s.num_classes);
      if (s.train_images.empty() || s.train_labels.empty())
        c.fail("dataset", "idx sources need train_images and train_labels");
      if (s.test_images.empty() != s.test_labels.empty())
        c.fail("dataset", "test_images and test_labels must be given together");
      if (s.num_classes < 0 || s.num_classes == 1) c.fail("dataset.num_classes", "must be 0 (infer) or >= 2");
      cfg.idx = s;
    } else {
      c.fail("dataset.kind", "expected \"blobs\" or \"idx\"");
    }
  }

  if (j.contains("distribution")) {
    const json& d = j["distribution"];
    if (c.object(d, "distribution", {"kind", "head_mass", "head_classes"})) {
      std::string kind = "uniform";
      c.string(d, "kind", "distribution", kind);
      if (kind == "heavy_tailed") cfg.distribution.kind = DistributionKind::kHeavyTailed;
      else if (kind != "uniform") c.fail("distribution.kind", "expected \"uniform\" or \"heavy_tailed\"");
      c.number(d, "head_mass", "distribution", cfg.distribution.head_mass);
      c.integer(d, "head_classes", "distribution", cfg.distribution.head_classes);
    }
  }
  if (cfg.num_classes() > 0) {
    try {
      cfg.distribution.validate(cfg.num_classes());
    } catch (const std::exception& e) {
      c.fail("distribution", e.what());
    }
  }

  if (!j.contains("methods")) {
    c.fail("config", "missing required field 'methods'");
  } else if (!j["methods"].is_array() || j["methods"].empty()) {
    c.fail("methods", "expected a non-empty array of method names");
  } else {
    for (const auto& m : j["methods"]) {
      if (!m.is_string()) {
        c.fail("methods", "method names must be strings");
        continue;
      }
      try {
        const Method meth = method_from_string(m.get<std::string>());
        if (std::find(cfg.methods.begin(), cfg.methods.end(), meth) != cfg.methods.end())
          c.fail("methods", "duplicate method '" + m.get<std::string>() + "'");
        else
          cfg.methods.push_back(meth);
      } catch (const std::exception&) {
        c.fail("methods", "unknown method '" + m.get<std::string>() + "'");
      }
    }
  }
  for (Method m : cfg.methods) cfg.losses[m] = default_loss_for(m);
  if (j.contains("loss_overrides")) {
    const json& o = j["loss_overrides"];
    if (!o.is_object()) {
      c.fail("loss_overrides", "expected an object keyed by method");
    } else {
      for (const auto& [name, spec] : o.items()) {
        const std::string where = "loss_overrides." + name;
        Method m;
        try {
          m = method_from_string(name);
        } catch (const std::exception&) {
          c.fail(where, "unknown method");
          continue;
        }
        if (!cfg.losses.count(m)) {
          c.fail(where, "method is not in the roster");
          continue;
        }
        parse_loss_override(c, spec, where, m, cfg.losses[m]);
      }
    }
  }

  c.integer(j, "k", "config", cfg.k);
  c.boolean(j, "aux_odd_head", "config", cfg.aux_odd_head);
  c.number(j, "aux_weight", "config", cfg.aux_weight);
  c.number(j, "temperature", "config", cfg.temperature);
  c.number(j, "test_fraction", "config", cfg.test_fraction);
  c.unsigned_int(j, "ece_bins", "config", cfg.ece_bins);
  {
    fs::path out = cfg.output_dir;
    c.path(j, "output_dir", "config", out, base_dir);
    if (!j.contains("output_dir") && !base_dir.empty()) out = base_dir / cfg.output_dir;
    cfg.output_dir = out;
  }
  if (cfg.k < 0) c.fail("k", "must be non-negative");
  if (cfg.num_classes() > 0 && cfg.k > cfg.num_classes() - 1) c.fail("k", "k + 1 distinct classes are required per set");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) c.fail("test_fraction", "must lie in (0, 1)");
  if (cfg.ece_bins == 0) c.fail("ece_bins", "must be positive");
  if (!(cfg.aux_weight >= 0.0)) c.fail("aux_weight", "must be >= 0");

  auto read_list = [&](const char* key, auto& out) {
    if (!j.contains(key)) return c.fail("config", std::string("missing required field '") + key + "'");
    const json& a = j[key];
    if (!a.is_array() || a.empty()) return c.fail(key, "expected a non-empty array");
    for (const auto& v : a) {
      if (!is_non_negative_int(v)) {
        c.fail(key, "entries must be non-negative integers");
        continue;
      }
      out.push_back(v.get<typename std::decay_t<decltype(out)>::value_type>());
    }
  };
  read_list("train_sizes", cfg.train_sizes);
  read_list("seeds", cfg.seeds);
  for (std::size_t n : cfg.train_sizes)
    if (n == 0) c.fail("train_sizes", "sizes must be positive");

  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    if (c.object(o, "optimizer", {"epochs", "batch_size", "lr", "momentum", "hidden"})) {
      c.unsigned_int(o, "epochs", "optimizer", cfg.optimizer.epochs);
      c.unsigned_int(o, "batch_size", "optimizer", cfg.optimizer.batch_size);
      c.number(o, "lr", "optimizer", cfg.optimizer.lr);
      c.number(o, "momentum", "optimizer", cfg.optimizer.momentum);
      if (o.contains("hidden")) {
        cfg.optimizer.hidden.clear();
        if (!o["hidden"].is_array()) c.fail("optimizer.hidden", "expected an array of layer widths");
        else
          for (const auto& w : o["hidden"]) {
            if (!is_non_negative_int(w) || w.get<std::size_t>() == 0) c.fail("optimizer.hidden", "widths must be positive integers");
            else cfg.optimizer.hidden.push_back(w.get<std::size_t>());
          }
      }
    }
  }

  for (Method m : cfg.methods) {
    try {
      cfg.train_config(m, 0).validate();
    } catch (const std::exception& e) {
      c.fail("method " + to_string(m), e.what());
    }
  }
  if (!c.errors.empty()) throw ValidationError(c.errors);
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError({path.string() + ": cannot open config file"});
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }
  return parse_config(j, path.parent_path());
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.blobs) {
    j["dataset"] = {{"kind", "blobs"}, {"num_classes", cfg.blobs->num_classes}, {"dim", cfg.blobs->dim},
                    {"separation", cfg.blobs->separation}, {"pool_per_class", cfg.blobs->pool_per_class}};
  } else if (cfg.idx) {
    j["dataset"] = {{"kind", "idx"}, {"train_images", cfg.idx->train_images.string()},
                    {"train_labels", cfg.idx->train_labels.string()}, {"test_images", cfg.idx->test_images.string()},
                    {"test_labels", cfg.idx->test_labels.string()}, {"num_classes", cfg.idx->num_classes}};
  }
  j["distribution"] = {{"kind", distribution_name(cfg.distribution.kind)},
                       {"head_mass", cfg.distribution.head_mass},
                       {"head_classes", cfg.distribution.head_classes}};
  json methods = json::array();
  json losses = json::object();
  for (Method m : cfg.methods) {
    methods.push_back(to_string(m));
    const LossSpec& l = cfg.losses.at(m);
    losses[to_string(m)] = {{"kind", to_string(l.kind)}, {"smoothing", l.smoothing},
                            {"focal_gamma", l.focal_gamma}, {"weight_scale", l.weight_scale}};
  }
  j["methods"] = methods;
  j["loss_overrides"] = losses;
  j["k"] = cfg.k;
  j["aux_odd_head"] = cfg.aux_odd_head;
  j["aux_weight"] = cfg.aux_weight;
  j["temperature"] = cfg.temperature;
  j["train_sizes"] = cfg.train_sizes;
  j["seeds"] = cfg.seeds;
  j["optimizer"] = {{"epochs", cfg.optimizer.epochs}, {"batch_size", cfg.optimizer.batch_size},
                    {"lr", cfg.optimizer.lr}, {"momentum", cfg.optimizer.momentum},
                    {"hidden", cfg.optimizer.hidden}};
  j["test_fraction"] = cfg.test_fraction;
  j["ece_bins"] = cfg.ece_bins;
  j["output_dir"] = cfg.output_dir.string();
  return j;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("output_dir");
  return fnv1a64(j.dump());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  const std::uint64_t h = config_hash(cfg);
  if (cfg.blobs) {
    RngStream gen(h, 10);
    const auto pool = make_blobs(cfg.blobs->num_classes, cfg.blobs->pool_per_class, cfg.blobs->dim,
                                 cfg.blobs->separation, gen);
    RngStream split_rng(h, 11);
    auto s = split_train_test(pool, cfg.test_fraction, split_rng);
    return {std::move(s.train), std::move(s.test)};
  }
  if (!cfg.idx) throw InvalidArgument("config has no dataset source");
  const IdxSource& src = *cfg.idx;
  LabeledDataset train = load_idx(src.train_images, src.train_labels, src.num_classes);
  if (!src.test_images.empty()) {
    LabeledDataset test = load_idx(src.test_images, src.test_labels, train.num_classes());
    if (test.dim() != train.dim()) throw InvalidArgument("train and test images differ in size");
    return {std::move(train), std::move(test)};
  }
  RngStream split_rng(h, 11);
  auto s = split_train_test(train, cfg.test_fraction, split_rng);
  return {std::move(s.train), std::move(s.test)};
}

json record_to_json(const RunRecord& r) {
  json j = {{"config_hash", r.config_hash}, {"method", to_string(r.method)}, {"train_size", r.train_size},
            {"seed", r.seed}, {"status", r.ok ? "ok" : "failed"}, {"wall_clock_seconds", r.wall_clock_seconds}};
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["train_class_counts"] = r.train_class_counts;
  j["final_train_loss"] = r.final_train_loss;
  j["steps"] = r.steps;
  j["report"] = json::parse(report_to_json(r.report));
  return j;
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  try {
    r.config_hash = j.at("config_hash").get<std::string>();
    r.method = method_from_string(j.at("method").get<std::string>());
    r.train_size = j.at("train_size").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const std::string status = j.at("status").get<std::string>();
    if (status != "ok" && status != "failed") throw InvalidArgument("bad status '" + status + "'");
    r.ok = status == "ok";
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    if (!r.ok) {
      r.error = j.value("error", "");
      return r;
    }
    r.train_class_counts = j.at("train_class_counts").get<std::vector<std::size_t>>();
    r.final_train_loss = j.at("final_train_loss").get<double>();
    r.steps = j.at("steps").get<std::size_t>();
    r.report = report_from_json(j.at("report").dump());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed run record: ") + e.what());
  }
  return r;
}

std::string record_stem(const RunRecord& r) {
  return to_string(r.method) + "_n" + std::to_string(r.train_size) + "_s" + std::to_string(r.seed);
}

RunRecord execute_run(const ExperimentConfig& cfg, const PreparedData& data, Method method,
                      std::size_t train_size, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config_hash = hash_hex(config_hash(cfg));
  rec.method = method;
  rec.train_size = train_size;
  rec.seed = seed;
  try {
    RngStream subsample_rng(seed, 3);
    const LabeledDataset train_ds = apply_distribution(data.train_pool, cfg.distribution, train_size, subsample_rng);
    const TrainConfig tc = cfg.train_config(method, seed);
    const TrainResult res = train(train_ds, tc);
    std::vector<Vec> probs;
    probs.reserve(data.test.size());
    for (std::size_t i = 0; i < data.test.size(); ++i)
      probs.push_back(predict_proba(res.params, data.test.row(i), tc.eval_temperature()));
    rec.report = evaluate(probs, data.test.labels(), cfg.ece_bins);
    rec.train_class_counts = train_ds.class_counts();
    rec.final_train_loss = res.log.epoch_loss.empty() ? 0.0 : res.log.epoch_loss.back();
    rec.steps = res.log.steps;
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

TrainSummary run_experiment(const ExperimentConfig& cfg, std::size_t workers, std::ostream& log) {
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "config.json", config_to_json(cfg).dump(2) + "\n");

  struct Cell {
    Method method;
    std::size_t size;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Method m : cfg.methods)
    for (std::size_t n : cfg.train_sizes)
      for (std::uint64_t s : cfg.seeds) cells.push_back({m, n, s});

  TrainSummary out;
  out.records.resize(cells.size());
  std::optional<PreparedData> data;
  std::string data_error;
  try {
    data = prepare_data(cfg);
  } catch (const std::exception& e) {
    data_error = std::string("data preparation failed: ") + e.what();
  }

  std::mutex log_mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      RunRecord rec;
      if (data) {
        rec = execute_run(cfg, *data, c.method, c.size, c.seed);
      } else {
        rec.config_hash = hash_hex(config_hash(cfg));
        rec.method = c.method;
        rec.train_size = c.size;
        rec.seed = c.seed;
        rec.error = data_error;
      }
      const std::string stem = record_stem(rec);
      std::string io_error;
      try {
        write_text(cfg.output_dir / (stem + ".json"), record_to_json(rec).dump(2) + "\n");
        if (rec.ok) write_bins_csv(cfg.output_dir / (stem + ".bins.csv"), rec.report.bins);
      } catch (const std::exception& e) {
        io_error = e.what();
        rec.ok = false;
        rec.error = io_error;
      }
      {
        std::lock_guard lock(log_mu);
        if (rec.ok)
          log << stem << ": accuracy " << rec.report.accuracy << ", ece " << rec.report.ece << "\n";
        else
          log << stem << ": FAILED: " << rec.error << "\n";
      }
      out.records[i] = std::move(rec);
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& r : out.records) out.failed += !r.ok;
  return out;
}

ReportResult build_report(const fs::path& dir, std::ostream& log) {
  if (!fs::is_directory(dir)) throw InvalidArgument(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto& p = e.path();
    if (e.is_regular_file() && p.extension() == ".json" && p.filename() != "config.json") files.push_back(p);
  }
  std::sort(files.begin(), files.end());

  ReportResult res;
  std::vector<RunRecord> records;
  for (const auto& p : files) {
    try {
      std::ifstream in(p);
      records.push_back(record_from_json(json::parse(in)));
    } catch (const std::exception& e) {
      log << "warning: skipping " << p.filename().string() << ": " << e.what() << "\n";
      res.skipped.push_back(p.filename().string());
    }
  }
  std::vector<RunRecord> ok;
  for (auto& r : records) {
    if (r.ok) ok.push_back(std::move(r));
    else ++res.failed_runs;
  }
  if (ok.empty()) throw InvalidArgument("no usable run records in " + dir.string());
  std::sort(ok.begin(), ok.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.method, a.train_size, a.seed) < std::tie(b.method, b.train_size, b.seed);
  });

  std::string long_csv = "method,size,seed,metric,value\n";
  for (std::size_t i = 0; i < ok.size();) {
    std::size_t j = i;
    MethodSummary s;
    s.method = ok[i].method;
    std::vector<XentEntropyMeans> means;
    for (; j < ok.size() && ok[j].method == s.method; ++j) {
      const auto& r = ok[j].report;
      s.mean_accuracy += r.accuracy;
      s.mean_ece += r.ece;
      s.mean_brier += r.brier;
      s.mean_rc += r.mean_rc;
      s.mean_entropy_incorrect += r.mean_entropy_incorrect;
      means.push_back(r.means());
      const std::string prefix = to_string(s.method) + "," + std::to_string(ok[j].train_size) + "," +
                                 std::to_string(ok[j].seed) + ",";
      for (const auto& [name, v] : std::initializer_list<std::pair<const char*, double>>{
               {"accuracy", r.accuracy}, {"ece", r.ece}, {"ece_one_vs_all", r.ece_one_vs_all},
               {"brier", r.brier}, {"mean_rc", r.mean_rc}, {"mean_xent", r.mean_xent},
               {"mean_entropy", r.mean_entropy}, {"mean_entropy_correct", r.mean_entropy_correct},
               {"mean_entropy_incorrect", r.mean_entropy_incorrect}})
        long_csv += prefix + name + "," + fmt(v) + "\n";
    }
    s.runs = j - i;
    const double n = static_cast<double>(s.runs);
    s.mean_accuracy /= n;
    s.mean_ece /= n;
    s.mean_brier /= n;
    s.mean_rc /= n;
    s.mean_entropy_incorrect /= n;
    s.mae_xent_entropy = mae_entropy_vs_xent(means);
    res.rows.push_back(s);
    i = j;
  }

  std::string summary =
      "method,runs,mean_accuracy,mean_ece,mae_xent_entropy,mean_brier,mean_rc,mean_entropy_incorrect\n";
  for (const auto& s : res.rows) {
    summary += to_string(s.method) + "," + std::to_string(s.runs) + "," + fmt(s.mean_accuracy) + "," +
               fmt(s.mean_ece) + "," + fmt(s.mae_xent_entropy) + "," + fmt(s.mean_brier) + "," +
               fmt(s.mean_rc) + "," + fmt(s.mean_entropy_incorrect) + "\n";
  }
  for (const auto& f : res.skipped) summary += "# skipped malformed record: " + f + "\n";
  if (res.failed_runs > 0) summary += "# failed runs excluded: " + std::to_string(res.failed_runs) + "\n";
  write_text(dir / "summary.csv", summary);
  write_text(dir / "long.csv", long_csv);
  return res;
}

}  // namespace oko
