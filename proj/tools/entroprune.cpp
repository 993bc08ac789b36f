// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// entroprune: command-line front end. Every command writes its reports to
// --out (JSON plus flat CSV) and prints the JSON summary on stdout.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 verification failure,
// 5 numeric failure, 1 anything else.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "entroprune/bench.hpp"
#include "entroprune/config.hpp"
#include "entroprune/dilution.hpp"
#include "entroprune/entropy.hpp"
#include "entroprune/errors.hpp"
#include "entroprune/fuser.hpp"
#include "entroprune/nose.hpp"
#include "entroprune/pipeline.hpp"
#include "entroprune/serialization.hpp"
#include "entroprune/spectral.hpp"
#include "entroprune/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace entroprune;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dtype = "f32";
};

RunConfig resolve(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : RunConfig::load(g.config);
  if (g.seed) c.apply_seed(*g.seed);
  if (!g.out.empty()) c.out_dir = g.out;
  fs::create_directories(c.out_dir);
  return c;
}

// Makes data generation follow a loaded checkpoint's geometry.
void adopt_model(RunConfig& c, const ViTConfig& m) {
  c.model = m;
  c.data.synth.image_h = m.image_h;
  c.data.synth.image_w = m.image_w;
  c.data.synth.channels = m.channels;
  c.data.synth.num_classes = m.num_classes;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

json eval_json(const EvalResult& e) { return {{"top1", e.top1}, {"top5", e.top5}, {"samples", e.samples}}; }

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad integer '") + item + "' in " + what);
    }
  }
  return out;
}

LabeledDataset train_split(const RunConfig& c, const std::string& path) {
  return path.empty() ? training_data(c) : load_dataset(path);
}

LabeledDataset eval_split(const RunConfig& c, const std::string& path) {
  return path.empty() ? evaluation_data(c) : load_dataset(path);
}

template <typename F>
void with_dtype(const std::string& dtype, F&& f) {
  if (dtype == "f32") {
    f(static_cast<float*>(nullptr));
  } else if (dtype == "f64") {
    f(static_cast<double*>(nullptr));
  } else {
    throw ConfigError("--dtype must be f32 or f64, got '" + dtype + "'");
  }
}

template <typename T>
double equivalence_tolerance() {
  return sizeof(T) == sizeof(float) ? 1e-5 : 1e-10;
}

// ---- commands ---------------------------------------------------------------

void cmd_dataset_synth(const Globals& g, const std::string& split) {
  const auto c = resolve(g);
  json j;
  j["files"] = json::array();
  if (split == "train" || split == "both") {
    const auto d = synthesize(c.data.synth, "train");
    save_dataset(d, c.out_dir / "train.eltd");
    j["files"].push_back({{"path", (c.out_dir / "train.eltd").string()}, {"samples", d.size()}});
  }
  if (split == "test" || split == "both") {
    const auto d = evaluation_data(c);
    save_dataset(d, c.out_dir / "test.eltd");
    j["files"].push_back({{"path", (c.out_dir / "test.eltd").string()}, {"samples", d.size()}});
  }
  if (j["files"].empty()) throw ConfigError("--split must be train, test or both");
  emit(j);
}

void cmd_dataset_info(const std::string& path) {
  const auto d = load_dataset(path);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(d.num_classes), 0);
  for (auto l : d.labels) ++counts[l];
  const auto [lo, hi] = std::minmax_element(d.images.begin(), d.images.end());
  double sum = 0.0;
  for (float v : d.images) sum += v;
  emit({{"path", path},
        {"split", d.split},
        {"samples", d.size()},
        {"height", d.height},
        {"width", d.width},
        {"channels", d.channels},
        {"classes", d.num_classes},
        {"class_counts", counts},
        {"pixel_min", d.images.empty() ? 0.0 : *lo},
        {"pixel_max", d.images.empty() ? 0.0 : *hi},
        {"pixel_mean", d.images.empty() ? 0.0 : sum / static_cast<double>(d.images.size())}});
}

template <typename T>
void cmd_train(const Globals& g, const std::string& data_path, const std::string& eval_path) {
  const auto c = resolve(g);
  const auto train = train_split(c, data_path);
  const auto test = eval_split(c, eval_path);
  ViTModel<T> model(c.model);
  const auto log = train_model(model, c.train, train);
  const auto e = evaluate(model, test);
  save_checkpoint(model, c.out_dir / "model.epck");
  write_text(c.out_dir / "train_log.csv", log.to_csv());
  json j = {{"checkpoint", (c.out_dir / "model.epck").string()},
            {"dtype", g.dtype},
            {"parameters", model.stored_parameter_count()},
            {"epochs", c.train.epochs},
            {"steps", log.steps.size()},
            {"final_loss", log.steps.empty() ? 0.0 : log.steps.back().loss},
            {"eval", eval_json(e)}};
  write_text(c.out_dir / "train.json", j.dump(2));
  emit(j);
}

template <typename T>
void cmd_eval(const Globals& g, const std::string& ckpt, const std::string& data_path, int batch) {
  auto c = resolve(g);
  const auto model = load_checkpoint<T>(ckpt);
  adopt_model(c, model.config());
  const auto e = evaluate(model, eval_split(c, data_path), batch);
  json j = {{"checkpoint", ckpt}, {"eval", eval_json(e)}};
  write_text(c.out_dir / "eval.json", j.dump(2));
  emit(j);
}

template <typename T>
void cmd_entropy(const Globals& g, const std::string& ckpt, const std::string& data_path,
                 std::optional<std::int64_t> probe_size, bool dump) {
  auto c = resolve(g);
  const auto model = load_checkpoint<T>(ckpt);
  adopt_model(c, model.config());
  if (probe_size) c.select.probe_size = *probe_size;
  const auto data = train_split(c, data_path);
  const auto probe = run_probe(c, data);
  const auto report = entropy_profile(model, data, probe);
  write_text(c.out_dir / "entropy.json", report.to_json());
  write_text(c.out_dir / "entropy.csv", report.to_csv());
  if (dump) dump_activations(model, data, probe, all_taps(model.depth()), c.out_dir / "activations.eact");
  std::cout << report.to_json() << std::endl;
}

template <typename T>
void cmd_select(const Globals& g, const std::string& ckpt, const std::string& data_path, const std::string& method,
                std::optional<int> n, std::optional<double> ratio, std::optional<std::int64_t> probe_size,
                const std::string& target) {
  auto c = resolve(g);
  const auto model = load_checkpoint<T>(ckpt);
  adopt_model(c, model.config());
  if (!method.empty()) c.select.method = method;
  if (n && ratio) throw ConfigError("--n and --ratio are exclusive");
  if (n) c.select.count = *n;
  if (ratio) {
    if (!(*ratio > 0.0 && *ratio <= 1.0)) throw ConfigError("--ratio must lie in (0, 1]");
    c.select.count.reset();
    c.select.ratio = *ratio;
  }
  if (probe_size) c.select.probe_size = *probe_size;
  if (!target.empty()) c.select.target = parse_te_target(target);
  if (c.select.method != "nose" && c.select.method != "random" && c.select.method != "first_n") {
    throw ConfigError("select.method must be nose, random or first_n");
  }
  const auto data = train_split(c, data_path);
  const auto state = select_layers(model, c, data, c.removal_n(), c.seed);
  write_text(c.out_dir / "selection.json", state.to_json());
  write_text(c.out_dir / "selection.csv", state.to_csv());
  std::cout << state.to_json() << std::endl;
}

template <typename T>
void cmd_dilute(const Globals& g, const std::string& ckpt, const std::string& selection, const std::string& layers,
                const std::string& data_path, const std::string& eval_path, const std::string& schedule,
                std::optional<std::int64_t> total, const std::string& granularity, bool naive,
                std::optional<int> epochs) {
  auto c = resolve(g);
  auto model = load_checkpoint<T>(ckpt);
  adopt_model(c, model.config());
  if (selection.empty() == layers.empty()) throw ConfigError("give exactly one of --selection or --layers");
  const auto picked = selection.empty() ? parse_int_list(layers, "--layers")
                                        : SelectionState::from_json(read_text(selection)).selected;
  if (!schedule.empty()) c.dilute.schedule = parse_schedule_kind(schedule);
  if (total) c.dilute.total = *total;
  if (!granularity.empty()) c.dilute.granularity = parse_granularity(granularity);
  if (naive) c.dilute.compensate = false;
  if (epochs) {
    if (*epochs < 1) throw ConfigError("--epochs must be positive");
    c.dilute.epochs = *epochs;
  }
  const auto data = train_split(c, data_path);
  const auto tc = dilution_train_config(c, picked);
  const auto sched = c.dilute.schedule_for((data.size() + tc.batch_size - 1) / tc.batch_size);
  const auto log = train_dilute(model, tc, sched, data);
  save_checkpoint(model, c.out_dir / "diluted.epck");
  write_text(c.out_dir / "dilute_log.csv", log.to_csv());
  const auto stability = gradient_stability_report(log, tc.compensate);
  write_text(c.out_dir / "stability.csv", stability.to_csv());
  json j = {{"checkpoint", (c.out_dir / "diluted.epck").string()},
            {"selected", picked},
            {"schedule", schedule_kind_name(sched.kind)},
            {"T", sched.total_steps},
            {"granularity", granularity_name(sched.granularity)},
            {"compensate", tc.compensate},
            {"steps", log.steps.size()},
            {"relative_loss_variance", stability.relative_loss_variance},
            {"eval", eval_json(evaluate(model, eval_split(c, eval_path)))}};
  write_text(c.out_dir / "dilute.json", j.dump(2));
  emit(j);
}

template <typename T>
void cmd_fuse(const Globals& g, const std::string& ckpt, int batch) {
  const auto c = resolve(g);
  const auto model = load_checkpoint<T>(ckpt);
  auto outcome = fuse(model);
  for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << '\n';
  const auto report = verify_equivalence(model, outcome.model, random_images<T>(model.config(), batch, c.seed),
                                         equivalence_tolerance<T>());
  save_checkpoint(outcome.model, c.out_dir / "fused.epck");
  write_text(c.out_dir / "fusion.json", report.to_json());
  std::cout << report.to_json() << std::endl;
  if (!report.passed) throw VerificationError("fused model deviates from its diluted source");
}

template <typename T>
void cmd_verify(const Globals& g, const std::string& a, const std::string& b, int batch, std::optional<double> tol) {
  const auto c = resolve(g);
  const auto ma = load_checkpoint<T>(a);
  const auto mb = load_checkpoint<T>(b);
  const auto report =
      verify_equivalence(ma, mb, random_images<T>(ma.config(), batch, c.seed), tol ? *tol : equivalence_tolerance<T>());
  write_text(c.out_dir / "verify.json", report.to_json());
  std::cout << report.to_json() << std::endl;
  if (!report.passed) throw VerificationError("models are not equivalent within tolerance");
}

template <typename T>
void cmd_spectrum(const Globals& g, const std::string& ckpt, const std::string& compare, const std::string& data_path,
                  std::optional<std::int64_t> probe_size) {
  auto c = resolve(g);
  const auto model = load_checkpoint<T>(ckpt);
  adopt_model(c, model.config());
  if (probe_size) c.select.probe_size = *probe_size;
  const auto data = train_split(c, data_path);
  const auto probe = run_probe(c, data);
  const auto report = spectrum_report(model, data, probe);
  write_text(c.out_dir / "spectrum.json", report.to_json());
  write_text(c.out_dir / "spectrum_profile.csv", report.profile_csv());
  write_text(c.out_dir / "spectrum_bands.csv", report.bands_csv());
  if (!compare.empty()) {
    const auto other = load_checkpoint<T>(compare);
    const auto deltas = compare_reports(report, spectrum_report(other, data, probe));
    write_text(c.out_dir / "band_delta.csv", band_delta_csv(deltas));
  }
  std::cout << report.to_json() << std::endl;
}

template <typename T>
void cmd_bench(const Globals& g, const std::string& ckpt, int batch, int reps, int warmup, std::int64_t budget) {
  const auto c = resolve(g);
  const auto model = load_checkpoint<T>(ckpt);
  const auto r = bench(model, batch, reps, warmup, budget, c.seed);
  write_text(c.out_dir / "bench.json", r.to_json());
  write_text(c.out_dir / "bench.csv", r.to_csv());
  std::cout << r.to_json() << std::endl;
}

template <typename T>
void cmd_masking(const Globals& g, const std::string& ckpt, const std::string& counts, int repeats,
                 const std::string& data_path, const std::string& eval_path) {
  auto c = resolve(g);
  const auto model = load_checkpoint<T>(ckpt);
  adopt_model(c, model.config());
  const auto n = parse_int_list(counts, "--counts");
  const auto train = train_split(c, data_path);
  const auto rows = masking_study(model, n, repeats, c.seed, eval_split(c, eval_path), train, run_probe(c, train),
                                  c.select.target);
  std::vector<double> te, acc;
  json j;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    te.push_back(r.te_mean);
    acc.push_back(r.accuracy_mean);
    j["rows"].push_back({{"count", r.count},
                         {"repeats", r.repeats},
                         {"accuracy_mean", r.accuracy_mean},
                         {"accuracy_var", r.accuracy_var},
                         {"te_mean", r.te_mean},
                         {"te_var", r.te_var}});
  }
  j["spearman_te_accuracy"] = rows.size() >= 2 ? spearman(te, acc) : 0.0;
  write_text(c.out_dir / "masking.csv", masking_table_csv(rows));
  write_text(c.out_dir / "masking.json", j.dump(2));
  emit(j);
}

template <typename T>
void cmd_sweep(const Globals& g, const std::string& ckpt, const std::string& data_path, const std::string& eval_path) {
  auto c = resolve(g);
  const auto dense = load_checkpoint<T>(ckpt);
  adopt_model(c, dense.config());
  if (dense.depth() < 3) throw ConfigError("removal-sweep needs depth >= 3");
  const auto train = train_split(c, data_path);
  const auto test = eval_split(c, eval_path);
  const auto base = dense.stored_parameter_count();
  std::ostringstream csv;
  csv.precision(17);
  csv << "n,ratio,selected,params,param_ratio,top1,top5\n";
  json j;
  j["dense"] = {{"params", base}, {"eval", eval_json(evaluate(dense, test))}};
  j["rows"] = json::array();
  for (int n = 1; n <= dense.depth() - 2; ++n) {
    const auto sel = select_layers(dense, c, train, n, c.seed);
    const auto out = dilute_and_fuse(dense, sel.selected, c, train);
    const auto e = evaluate(out.fused, test);
    const auto params = out.fused.stored_parameter_count();
    std::string picked;
    for (int b : sel.selected) picked += (picked.empty() ? "" : " ") + std::to_string(b);
    const double ratio = static_cast<double>(n) / dense.depth();
    csv << n << ',' << ratio << ',' << picked << ',' << params << ',' << static_cast<double>(params) / base << ','
        << e.top1 << ',' << e.top5 << '\n';
    j["rows"].push_back(
        {{"n", n}, {"ratio", ratio}, {"selected", sel.selected}, {"params", params}, {"eval", eval_json(e)}});
  }
  write_text(c.out_dir / "removal_sweep.csv", csv.str());
  write_text(c.out_dir / "removal_sweep.json", j.dump(2));
  emit(j);
}

template <typename T>
void cmd_transplant(const Globals& g, const std::string& donor_path, const std::string& host_path,
                    const std::string& eval_path) {
  auto c = resolve(g);
  const auto donor = load_checkpoint<T>(donor_path);
  const auto host = load_checkpoint<T>(host_path);
  adopt_model(c, host.config());
  const auto test = eval_split(c, eval_path);
  const auto points = compatibility_curve(donor, host, test);
  json j;
  j["host_accuracy"] = evaluate(host, test).top1;
  j["points"] = json::array();
  for (const auto& p : points) j["points"].push_back({{"block", p.block}, {"accuracy", p.accuracy}});
  write_text(c.out_dir / "transplant.csv", compatibility_csv(points));
  write_text(c.out_dir / "transplant.json", j.dump(2));
  emit(j);
}

int run(int argc, char** argv) {
  CLI::App app{"Entropy-guided attention layer pruning for vision transformers"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration file");
  app.add_option("--seed", g.seed, "Run seed (overrides [run] seed)");
  app.add_option("--out", g.out, "Output directory (overrides [run] out)");
  app.add_option("--dtype", g.dtype, "Compute precision")->check(CLI::IsMember({"f32", "f64"}));

  std::string ckpt, data_path, eval_path, method, target, selection, layers, schedule, granularity, compare, split = "both";
  std::string a, b, counts = "1,2,3,4", donor, host;
  std::optional<int> n, epochs;
  std::optional<double> ratio, tol;
  std::optional<std::int64_t> probe_size, total;
  int batch = 64, reps = 5, warmup = 1, repeats = 10, eval_batch = 256;
  std::int64_t budget = kDefaultMemoryBudget;
  bool naive = false, dump = false;
  std::string info_path;

  auto* dataset = app.add_subcommand("dataset", "Synthesize or inspect ELTD datasets");
  dataset->require_subcommand(1);
  dataset->fallthrough();
  auto* synth = dataset->add_subcommand("synth", "Write train.eltd / test.eltd from the [data] section");
  synth->add_option("--split", split, "train, test or both");
  auto* info = dataset->add_subcommand("info", "Summarize a dataset file");
  info->add_option("path", info_path)->required();

  auto* train = app.add_subcommand("train", "Train a dense model");
  train->add_option("--data", data_path, "Training ELTD file");
  train->add_option("--eval-data", eval_path, "Held-out ELTD file");

  auto* eval = app.add_subcommand("eval", "Top-1 / top-5 accuracy of a checkpoint");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--data", eval_path, "Held-out ELTD file");
  eval->add_option("--batch", eval_batch);

  auto* entropy = app.add_subcommand("entropy", "Per-layer entropy report");
  entropy->add_option("--checkpoint", ckpt)->required();
  entropy->add_option("--data", data_path, "Probe source ELTD file");
  entropy->add_option("--probe-size", probe_size);
  entropy->add_flag("--dump-activations", dump, "Also write activations.eact");

  auto* select = app.add_subcommand("select", "Choose attention layers to remove");
  select->add_option("--checkpoint", ckpt)->required();
  select->add_option("--data", data_path, "Probe source ELTD file");
  select->add_option("--method", method, "nose, random or first_n");
  select->add_option("--n", n, "Number of layers");
  select->add_option("--ratio", ratio, "Removal ratio in (0, 1]");
  select->add_option("--probe-size", probe_size);
  select->add_option("--target", target, "last_block or logits");

  auto* dilute = app.add_subcommand("dilute", "Dilute selected attention layers during training");
  dilute->add_option("--checkpoint", ckpt)->required();
  dilute->add_option("--selection", selection, "selection.json from select");
  dilute->add_option("--layers", layers, "Comma-separated block indices");
  dilute->add_option("--data", data_path);
  dilute->add_option("--eval-data", eval_path);
  dilute->add_option("--schedule", schedule, "linear or cosine");
  dilute->add_option("--T", total, "Steps until M reaches 0");
  dilute->add_option("--granularity", granularity, "iteration or epoch");
  dilute->add_flag("--naive", naive, "Disable feature compensation");
  dilute->add_option("--epochs", epochs);

  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse fully diluted blocks and verify the result");
  fuse_cmd->add_option("--checkpoint", ckpt)->required();
  fuse_cmd->add_option("--batch", batch, "Random inputs used for verification");

  auto* verify = app.add_subcommand("verify", "Compare two checkpoints tap by tap");
  verify->add_option("a", a)->required();
  verify->add_option("b", b)->required();
  verify->add_option("--batch", batch);
  verify->add_option("--tol", tol);

  auto* spectrum = app.add_subcommand("spectrum", "Frequency profile of block outputs");
  spectrum->add_option("--checkpoint", ckpt)->required();
  spectrum->add_option("--compare", compare, "Second checkpoint for band deltas");
  spectrum->add_option("--data", data_path);
  spectrum->add_option("--probe-size", probe_size);

  auto* bench_cmd = app.add_subcommand("bench", "Throughput and memory-bound proxy");
  bench_cmd->add_option("--checkpoint", ckpt)->required();
  bench_cmd->add_option("--batch", batch);
  bench_cmd->add_option("--reps", reps)->check(CLI::Range(3, 1000000));
  bench_cmd->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--budget-bytes", budget);

  auto* study = app.add_subcommand("study", "Masking, removal-sweep and transplant studies");
  study->require_subcommand(1);
  study->fallthrough();
  auto* masking = study->add_subcommand("masking", "Remained accuracy and TE of random masked sets");
  masking->add_option("--checkpoint", ckpt)->required();
  masking->add_option("--counts", counts);
  masking->add_option("--repeats", repeats)->check(CLI::PositiveNumber);
  masking->add_option("--data", data_path);
  masking->add_option("--eval-data", eval_path);
  auto* sweep = study->add_subcommand("removal-sweep", "Select, dilute, fuse and evaluate for N = 1 .. depth - 2");
  sweep->add_option("--checkpoint", ckpt)->required();
  sweep->add_option("--data", data_path);
  sweep->add_option("--eval-data", eval_path);
  auto* transplant_cmd = study->add_subcommand("transplant", "Swap single donor blocks into a host");
  transplant_cmd->add_option("--donor", donor)->required();
  transplant_cmd->add_option("--host", host)->required();
  transplant_cmd->add_option("--eval-data", eval_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  with_dtype(g.dtype, [&]<typename T>(T*) {
    if (synth->parsed()) cmd_dataset_synth(g, split);
    if (info->parsed()) cmd_dataset_info(info_path);
    if (train->parsed()) cmd_train<T>(g, data_path, eval_path);
    if (eval->parsed()) cmd_eval<T>(g, ckpt, eval_path, eval_batch);
    if (entropy->parsed()) cmd_entropy<T>(g, ckpt, data_path, probe_size, dump);
    if (select->parsed()) cmd_select<T>(g, ckpt, data_path, method, n, ratio, probe_size, target);
    if (dilute->parsed()) {
      cmd_dilute<T>(g, ckpt, selection, layers, data_path, eval_path, schedule, total, granularity, naive, epochs);
    }
    if (fuse_cmd->parsed()) cmd_fuse<T>(g, ckpt, batch);
    if (verify->parsed()) cmd_verify<T>(g, a, b, batch, tol);
    if (spectrum->parsed()) cmd_spectrum<T>(g, ckpt, compare, data_path, probe_size);
    if (bench_cmd->parsed()) cmd_bench<T>(g, ckpt, batch, reps, warmup, budget);
    if (masking->parsed()) cmd_masking<T>(g, ckpt, counts, repeats, data_path, eval_path);
    if (sweep->parsed()) cmd_sweep<T>(g, ckpt, data_path, eval_path);
    if (transplant_cmd->parsed()) cmd_transplant<T>(g, donor, host, eval_path);
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return 4;
  } catch (const ModeError& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 5;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
