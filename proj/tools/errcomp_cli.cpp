// errcomp: command-line front end for training, streaming evaluation, sweeps
// and the sketch benchmark.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "errcomp/errcomp.hpp"

extern char** environ;

namespace {

using namespace errcomp;

ExperimentConfig load_config(const std::string& path) {
  nlohmann::json doc = path.empty() ? nlohmann::json::object() : read_json_file(path);
  apply_env_overrides(doc, [](const char* n) { return std::getenv(n); },
                      errcomp_env_names(environ));
  return config_from_json(doc);
}

// Writes to the file when a path is given, stdout otherwise.
template <class F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write(out);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  for (const auto& tok : split_csv_line(csv)) {
    auto v = parse_double(tok);
    if (!v) throw InvalidParameter("bad sweep value '" + tok + "'");
    out.push_back(*v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming error compensation for click models under distribution shift"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "Experiment config (JSON)");

  auto* train = app.add_subcommand("train", "Train the base model and write a checkpoint");
  std::string train_out;
  train->add_option("-o,--out", train_out, "Checkpoint path (default: output.checkpoint)");

  auto* run = app.add_subcommand("run", "Stream the test slots and report per-slot metrics");
  std::string run_results, run_trace, run_snapshot;
  run->add_option("-o,--results", run_results, "Results CSV (default: output.results_csv or stdout)");
  run->add_option("--trace", run_trace, "Diagnostics JSON-lines (default: output.trace_jsonl)");
  run->add_option("--snapshot", run_snapshot, "Write the final sketch of the first memory method");

  auto* sw = app.add_subcommand("sweep", "Sweep one hyperparameter of the memory method");
  std::string sweep_param, sweep_values, sweep_out;
  sw->add_option("-p,--param", sweep_param, "lambda | K_arrays | L_bits | tau | gamma | sigma")
      ->required();
  sw->add_option("-v,--values", sweep_values, "Comma-separated values")->required();
  sw->add_option("-o,--out", sweep_out, "Curve CSV (default stdout)");

  auto* bn = app.add_subcommand("bench", "Sketch read/write throughput at several fill levels");
  std::size_t bench_ops = 10000;
  std::string bench_out;
  std::size_t bench_dim = 32;
  bn->add_option("--ops", bench_ops, "Timed operations per fill level");
  bn->add_option("--dim", bench_dim, "Key dimension");
  bn->add_option("-o,--out", bench_out, "Report path (default stdout)");

  auto* dr = app.add_subcommand("drift-report", "Per-slot drift diagnostics CSV");
  std::string drift_out;
  dr->add_option("-o,--out", drift_out, "CSV path (default stdout)");

  auto* sn = app.add_subcommand("snapshot", "Write or inspect an error-sketch snapshot");
  std::string snap_out, snap_inspect;
  sn->add_option("-o,--out", snap_out, "Stream every slot into a fresh sketch and save it");
  sn->add_option("--inspect", snap_inspect, "Print the header of an existing snapshot");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto cfg = load_config(config_path);
      auto data = prepare_data(cfg);
      std::vector<double> losses;
      auto model = train_base_model(cfg, data, &losses);
      for (std::size_t e = 0; e < losses.size(); ++e)
        std::cerr << "epoch " << e << " loss " << fmt_double(losses[e]) << '\n';
      const std::string path = train_out.empty() ? cfg.output.checkpoint : train_out;
      if (path.empty()) throw InvalidParameter("train: no checkpoint path (use --out)");
      save_checkpoint(path, data.schema, model);
      std::cerr << "wrote " << path << '\n';
    } else if (*run) {
      auto cfg = load_config(config_path);
      if (run_results.empty()) run_results = cfg.output.results_csv;
      if (run_trace.empty()) run_trace = cfg.output.trace_jsonl;
      if (run_snapshot.empty()) run_snapshot = cfg.output.snapshot;
      std::ofstream trace;
      RunHooks hooks;
      if (!run_trace.empty()) {
        trace.open(run_trace);
        if (!trace) throw std::runtime_error("cannot open '" + run_trace + "'");
        hooks.trace = &trace;
      }
      bool saved = false;
      hooks.final_memory = [&](Method, const AnyMemory& mem) {
        if (saved || run_snapshot.empty()) return;
        if (const auto* s = std::get_if<ErrorSketch>(&mem)) {
          write_bytes(run_snapshot, s->snapshot());
          saved = true;
        }
      };
      auto prep = prepare(cfg);
      if (!cfg.output.checkpoint.empty()) save_checkpoint(cfg.output.checkpoint, prep.data.schema, *prep.model);
      auto result = run_methods(cfg, prep, hooks);
      emit(run_results, [&](std::ostream& o) { write_results_csv(o, result); });
    } else if (*sw) {
      auto cfg = load_config(config_path);
      auto res = sweep(cfg, sweep_param_from_string(sweep_param), parse_values(sweep_values));
      std::cerr << "frozen baseline: auc " << fmt_double(res.baseline.auc) << " gauc "
                << fmt_double(res.baseline.gauc) << '\n';
      emit(sweep_out, [&](std::ostream& o) { write_sweep_csv(o, res); });
    } else if (*bn) {
      auto cfg = load_config(config_path);
      BenchOptions opt;
      opt.ops = bench_ops;
      opt.oracle_capacity = cfg.memory.oracle_capacity < 10000 ? cfg.memory.oracle_capacity : 10000;
      const SrpParams p{bench_dim, cfg.memory.bits_per_hash, cfg.memory.num_arrays, cfg.memory.seed};
      auto rep = bench(p, opt);
      emit(bench_out, [&](std::ostream& o) { write_bench_report(o, rep); });
    } else if (*dr) {
      auto cfg = load_config(config_path);
      auto prep = prepare(cfg);
      const BaseModel& model = *prep.model;
      auto report = drift_report(prep.data.slots, [&](const Example& ex) { return model.embed(ex.ids); });
      emit(drift_out, [&](std::ostream& o) { write_drift_csv(o, report); });
    } else if (*sn) {
      if (!snap_inspect.empty()) {
        const auto bytes = read_bytes(snap_inspect);
        const auto p = ErrorSketch::snapshot_params(bytes);
        auto s = ErrorSketch::restore(bytes, p);
        std::cout << "dim=" << p.dim << " bits_per_hash=" << p.bits_per_hash
                  << " num_arrays=" << p.num_hashes << " seed=" << p.seed
                  << " records=" << s.writes_accepted() << " bytes=" << bytes.size() << '\n';
      } else {
        if (snap_out.empty()) throw InvalidParameter("snapshot: use --out or --inspect");
        auto cfg = load_config(config_path);
        cfg.memory.kind = MemoryKind::sketch;
        auto prep = prepare(cfg);
        ErrorSketch sketch(SrpParams{prep.model->hidden_dim(), cfg.memory.bits_per_hash,
                                     cfg.memory.num_arrays, cfg.memory.seed},
                           cfg.memory.readout);
        for (const auto& slot : prep.data.slots)
          for (const auto& ex : slot) {
            auto fr = prep.model->forward(ex);
            sketch.write(fr.hidden, ex.label, fr.y_base, cfg.memory.sigma);
          }
        write_bytes(snap_out, sketch.snapshot());
        std::cerr << "wrote " << snap_out << " (" << sketch.writes_accepted() << " records)\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
