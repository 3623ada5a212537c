#include "cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "spikesplit/bottleneck.hpp"
#include "spikesplit/checkpoint.hpp"
#include "spikesplit/dataset.hpp"
#include "spikesplit/error.hpp"
#include "spikesplit/random.hpp"
#include "spikesplit/trainer.hpp"
#include "spikesplit/transport.hpp"

namespace spikesplit::cli {

namespace {

std::filesystem::path default_file(const ArchitectureSpec& arch, const char* suffix) {
  return data_dir() / (arch.name + suffix);
}

ArchitectureSpec arch_or_usage(const std::string& name) {
  try {
    return build_arch(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<HardwareProfile> profiles_from(const std::optional<std::filesystem::path>& file) {
  return file ? load_profiles(*file) : default_profiles();
}

const HardwareProfile& profile_or_usage(const std::vector<HardwareProfile>& all, const std::string& name) {
  try {
    return find_profile(all, name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::string fmt_mj(double v) { return format_fixed(v, 3); }

void emit(const Table& table, Format format, std::ostream& out) {
  if (format == Format::tsv) {
    write_tsv(out, table);
  } else {
    out << format_aligned(table);
  }
}

void maybe_write(const std::optional<std::string>& path, const Table& table) {
  if (path) write_text_file(*path, format_tsv(table));
}

/// Text rendering of a table: grouped byte counts, rounded decimals.
Table humanize_compress(const Table& t) {
  Table h = t;
  for (auto& r : h.rows) {
    for (const char* col : {"baseline_bytes", "spike_bytes"}) {
      auto& f = r[t.column(col)];
      f = format_grouped(parse_uint(f));
    }
  }
  return h;
}

Table humanize_energy(const Table& t) {
  Table h = t;
  for (auto& r : h.rows) {
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      const std::string& name = t.header[i];
      if (name == "gflops" || name == "gsyops") {
        r[i] = format_fixed(parse_double(r[i]), 2);
      } else if (name == "fr") {
        r[i] = format_fixed(parse_double(r[i]), 4);
      } else if (name.ends_with("_mj")) {
        r[i] = fmt_mj(parse_double(r[i]));
      } else if (name.starts_with("ratio_")) {
        r[i] = format_fixed(parse_double(r[i]), 2);
      }
    }
  }
  return h;
}

Tensor random_batch(const Shape3& s, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor img({n, s.c, s.h, s.w});
  for (auto& v : img.values()) v = rng.uniform();
  return img;
}

std::string join_floats(const std::vector<float>& v) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v[i]));
    if (i) out += ' ';
    out += buf;
  }
  return out;
}

Endpoint endpoint_or_default(const std::string& text) {
  if (!text.empty()) return Endpoint::parse(text);
  if (auto env = Endpoint::from_env()) return *env;
  return Endpoint{"127.0.0.1", 7878};
}

Shape3 shape_or_usage(const std::string& text) {
  try {
    return parse_shape3(text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void add_model_options(CLI::App* sub, ModelOptions& m, std::string& bottleneck) {
  sub->add_option("--arch", m.arch, "Architecture name or .arch path")->capture_default_str();
  sub->add_option("--split", m.split, "Split point (1-based block index)")->capture_default_str();
  sub->add_option("--timesteps,-T", m.timesteps, "Simulation timesteps")->capture_default_str()->check(
      CLI::Range(1, 255));
  sub->add_option("--seed", m.seed, "Weight seed shared by edge and cloud")->capture_default_str();
  sub->add_option("--checkpoint", m.checkpoint, "Load weights from a checkpoint instead of --seed");
  sub->add_option("--bottleneck", bottleneck, "Insert a CxHxW bottleneck at --split");
}

}  // namespace

Table compress_report(const CompressOptions& opts) {
  const ArchitectureSpec arch = arch_or_usage(opts.arch);
  if (opts.timesteps < 1) throw UsageError("--timesteps must be >= 1");
  const auto candidates = load_candidates(opts.candidates.value_or(default_file(arch, "_candidates.tsv")));
  Table t;
  t.header = {"split", "T", "original", "compressed", "baseline_bytes", "spike_bytes", "ratio", "accuracy_drop"};
  for (const auto& c : candidates) {
    arch.check_split(c.split);
    const Shape3 original = arch.split_shape(c.split);
    if (original != c.original) {
      throw ShapeError("candidate file lists " + to_string(c.original) + " at split " + std::to_string(c.split) +
                       ", " + arch.name + " emits " + to_string(original));
    }
    const auto cfg = make_bottleneck(original, c.compressed, opts.timesteps);
    const auto rep = transmission_report(cfg, c.split, opts.element_bytes);
    t.add_row({std::to_string(c.split), std::to_string(opts.timesteps), to_string(rep.original),
               to_string(rep.compressed), std::to_string(rep.baseline_payload_bytes),
               std::to_string(rep.spike_payload_bytes), std::to_string(rep.compression_ratio.rounded()),
               format_fixed(c.accuracy_drop, 2)});
  }
  return t;
}

std::vector<EnergyReport> energy_reports(const EnergyOptions& opts) {
  const ArchitectureSpec arch = arch_or_usage(opts.arch);
  const auto profiles = profiles_from(opts.profiles_file);
  const HardwareProfile& baseline = profile_or_usage(profiles, opts.baseline_profile);
  std::vector<HardwareProfile> spike;
  if (opts.profiles.empty()) {
    spike = profiles;
  } else {
    for (const auto& name : opts.profiles) spike.push_back(profile_or_usage(profiles, name));
  }

  std::vector<EnergyReport> out;
  if (opts.measure_samples) {
    Model model = Model::build(arch, opts.seed);
    model.calibrate_statistics(random_batch(arch.input, 4, opts.seed + 2), opts.timesteps);
    for (std::size_t split = 1; split <= arch.num_splits(); ++split) {
      EnergyInputs in;
      in.split = split;
      in.timesteps = opts.timesteps;
      in.firing_rate = measure_model_firing_rate(model, split, opts.timesteps, *opts.measure_samples, opts.seed);
      in.fr_source = Provenance::measured;
      out.push_back(energy_report(arch, in, baseline, spike));
    }
    return out;
  }
  const auto path = opts.fr_file.value_or(default_file(arch, "_energy.tsv"));
  if (!std::filesystem::exists(path)) throw std::runtime_error("firing-rate file not found: " + path.string());
  for (const auto& row : load_firing_rates(path)) {
    EnergyInputs in;
    in.split = row.split;
    in.firing_rate = row.fr;
    in.fr_source = Provenance::tabulated;
    in.timesteps = opts.timesteps;
    if (!opts.computed_flops) in.gflops = row.gflops;
    out.push_back(energy_report(arch, in, baseline, spike));
  }
  return out;
}

Table energy_table(const std::vector<EnergyReport>& reports, bool exact) {
  Table t;
  t.header = {"split", "gflops", "flops_source", "fr", "fr_source", "T", "gsyops"};
  if (reports.empty()) return t;
  t.header.push_back("e_baseline_" + reports.front().baseline_profile + "_mj");
  for (const auto& p : reports.front().spike) {
    t.header.push_back("e_spike_" + p.profile + "_mj");
    t.header.push_back("ratio_" + p.profile);
  }
  for (const auto& r : reports) {
    std::vector<std::string> row = {std::to_string(r.split_point),
                                    format_exact(r.gflops),
                                    std::string(to_string(r.flops_source)),
                                    format_exact(r.firing_rate),
                                    std::string(to_string(r.fr_source)),
                                    std::to_string(r.timesteps),
                                    format_exact(r.gsyops),
                                    format_exact(r.e_baseline_mj)};
    for (const auto& p : r.spike) {
      row.push_back(format_exact(p.e_spike_mj));
      row.push_back(format_exact(p.ratio));
    }
    t.add_row(std::move(row));
  }
  return exact ? t : humanize_energy(t);
}

SplitPlan make_plan(const PlanOptions& opts) {
  const ArchitectureSpec arch = arch_or_usage(opts.arch);
  auto candidates = load_candidates(opts.candidates.value_or(default_file(arch, "_candidates.tsv")));
  const auto fr_path = opts.fr_file.value_or(default_file(arch, "_energy.tsv"));
  const bool have_rates = std::filesystem::exists(fr_path);
  if (opts.fr_file && !have_rates) throw std::runtime_error("firing-rate file not found: " + fr_path.string());
  if (opts.objective == Objective::min_energy && !have_rates) {
    throw UsageError("min_energy needs firing rates (--fr-file)");
  }
  if (have_rates) {
    const auto profiles = profiles_from(opts.profiles_file);
    const auto rates = load_firing_rates(fr_path);
    attach_edge_energy(candidates, arch, rates, profile_or_usage(profiles, opts.baseline_profile),
                       profile_or_usage(profiles, opts.profile));
  }
  return plan_network(arch, candidates, opts.objective, opts.max_drop);
}

Table plan_table(const SplitPlan& plan) {
  Table t;
  t.header = {"split", "feasible", "compressed", "T", "ratio", "accuracy_drop", "spike_bytes", "edge_energy_mj",
              "global"};
  for (const auto& p : plan.points) {
    if (!p.chosen) {
      t.add_row({std::to_string(p.split), "0", "-", "-", "-", "-", "-", "-", "0"});
      continue;
    }
    const auto& c = *p.chosen;
    const bool global = plan.global && *plan.global == c;
    t.add_row({std::to_string(p.split), "1", to_string(c.compressed), std::to_string(c.timesteps),
               std::to_string(c.ratio.rounded()), format_fixed(c.accuracy_drop, 2), std::to_string(c.spike_bytes),
               c.edge_energy_mj ? format_exact(*c.edge_energy_mj) : "-", global ? "1" : "0"});
  }
  return t;
}

std::string format_plan(const SplitPlan& plan) {
  std::ostringstream os;
  os << "plan for " << plan.arch_name << ": objective " << to_string(plan.objective) << ", max drop "
     << format_fixed(plan.max_drop, 2) << "%\n";
  Table shown = plan_table(plan);
  const std::size_t e = shown.column("edge_energy_mj");
  for (auto& r : shown.rows) {
    if (r[e] != "-") r[e] = fmt_mj(parse_double(r[e]));
  }
  os << format_aligned(shown);
  if (plan.global) {
    const auto& g = *plan.global;
    os << "global: split " << g.split << ", " << to_string(g.compressed) << ", ratio " << g.ratio.rounded()
       << ", drop " << format_fixed(g.accuracy_drop, 2) << "%";
    if (g.edge_energy_mj) os << ", edge energy " << fmt_mj(*g.edge_energy_mj) << " mJ";
    os << "\n";
  } else {
    os << "global: infeasible\n";
  }
  for (const auto& d : plan.diagnostics) os << "note: " << d << "\n";
  return os.str();
}

Model build_model(const ModelOptions& opts) {
  const ArchitectureSpec arch = arch_or_usage(opts.arch);
  arch.check_split(opts.split);
  if (opts.checkpoint) return model_from_checkpoint(arch, load_checkpoint(*opts.checkpoint));
  Model m = Model::build(arch, opts.seed);
  if (opts.bottleneck) {
    m.insert_bottleneck(opts.split, make_bottleneck(arch.split_shape(opts.split), *opts.bottleneck, opts.timesteps),
                        opts.seed + 1);
  }
  m.calibrate_statistics(random_batch(arch.input, 4, opts.seed + 2), opts.timesteps);
  return m;
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Split-computing toolkit for spiking networks", argv.empty() ? "spikesplit" : argv.front()};
  app.require_subcommand(1);
  std::string data_dir_flag;
  app.add_option("--data-dir", data_dir_flag, "Directory with .arch and .tsv data (overrides SPIKESPLIT_DATA_DIR)");

  std::string format_flag = "text";
  std::optional<std::string> out_path;
  auto add_output = [&](CLI::App* sub) {
    sub->add_option("--format", format_flag, "stdout format")->check(CLI::IsMember({"text", "tsv"}))
        ->capture_default_str();
    sub->add_option("--out", out_path, "Also write the table as TSV to this file");
  };

  CompressOptions copt;
  auto* compress = app.add_subcommand("compress-report", "Bottleneck byte counts and ratios per split point");
  compress->add_option("--arch", copt.arch)->capture_default_str();
  compress->add_option("--timesteps,-T", copt.timesteps)->capture_default_str()->check(CLI::PositiveNumber);
  compress->add_option("--candidates", copt.candidates, "Candidate TSV (default: shipped table)");
  compress->add_option("--element-bytes", copt.element_bytes, "Baseline bytes per element")
      ->capture_default_str()->check(CLI::PositiveNumber);
  add_output(compress);

  EnergyOptions eopt;
  auto* energy = app.add_subcommand("energy-report", "SyOPs and energy per split point");
  energy->add_option("--arch", eopt.arch)->capture_default_str();
  energy->add_option("--timesteps,-T", eopt.timesteps)->capture_default_str()->check(CLI::PositiveNumber);
  auto* fr_opt = energy->add_option("--fr-file", eopt.fr_file, "TSV with split, fr and optional gflops");
  energy->add_option("--measure", eopt.measure_samples, "Measure fr on N random images with random weights")
      ->excludes(fr_opt);
  energy->add_option("--seed", eopt.seed)->capture_default_str();
  energy->add_flag("--computed-flops", eopt.computed_flops, "Use architecture MAC counts instead of tabulated GFLOPs");
  energy->add_option("--baseline-profile", eopt.baseline_profile)->capture_default_str();
  energy->add_option("--profile", eopt.profiles, "Spike-side profile (repeatable; default all)");
  energy->add_option("--profiles-file", eopt.profiles_file, "Hardware profile TSV");
  add_output(energy);

  PlanOptions popt;
  std::string objective_flag = "max_ratio";
  auto* plan = app.add_subcommand("plan", "Choose split point and bottleneck under an accuracy-drop limit");
  plan->add_option("--arch", popt.arch)->capture_default_str();
  plan->add_option("--candidates", popt.candidates);
  plan->add_option("--max-drop", popt.max_drop, "Accuracy-drop limit in percentage points")->capture_default_str();
  plan->add_option("--objective", objective_flag)
      ->check(CLI::IsMember({"max_ratio", "max-ratio", "min_energy", "min-energy"}))->capture_default_str();
  plan->add_option("--fr-file", popt.fr_file);
  plan->add_option("--profile", popt.profile, "Profile used for edge energy")->capture_default_str();
  plan->add_option("--baseline-profile", popt.baseline_profile)->capture_default_str();
  plan->add_option("--profiles-file", popt.profiles_file);
  add_output(plan);

  ModelOptions sopt;
  std::string serve_bn;
  std::string serve_endpoint;
  auto* serve = app.add_subcommand("serve", "Run the cloud half until SIGINT/SIGTERM");
  add_model_options(serve, sopt, serve_bn);
  serve->add_option("--endpoint", serve_endpoint, "host:port to bind (env SPIKESPLIT_ENDPOINT)");

  ModelOptions iopt;
  std::string infer_bn;
  std::string infer_endpoint;
  std::size_t count = 1;
  std::uint64_t image_seed = 100;
  std::size_t retries = 1;
  bool verify_local = false;
  auto* infer = app.add_subcommand("infer", "Run the edge half and fetch logits from a server");
  add_model_options(infer, iopt, infer_bn);
  infer->add_option("--endpoint", infer_endpoint, "Server host:port (env SPIKESPLIT_ENDPOINT)");
  infer->add_option("--count", count, "Number of random images")->capture_default_str()->check(CLI::PositiveNumber);
  infer->add_option("--image-seed", image_seed)->capture_default_str();
  infer->add_option("--retries", retries, "Reconnect attempts after a connection failure")->capture_default_str();
  infer->add_flag("--verify-local", verify_local, "Compare with single-process inference");

  BlobTaskSpec task;
  TwoStepConfig two;
  std::string toy_arch = "toy";
  std::string toy_bn;
  std::string ckpt_path = "toy.ckpt";
  std::optional<std::string> metrics_path;
  std::uint64_t toy_seed = 1;
  std::size_t epochs = 30;
  std::size_t finetune_epochs = 30;
  double lr = 0.1;
  std::size_t toy_T = 2;
  auto* train_toy = app.add_subcommand("train-toy", "Two-step training on the synthetic blob task");
  train_toy->add_option("--arch", toy_arch)->capture_default_str();
  train_toy->add_option("--seed", toy_seed)->capture_default_str();
  train_toy->add_option("--epochs", epochs, "Step-1 epochs")->capture_default_str();
  train_toy->add_option("--finetune-epochs", finetune_epochs, "Step-2 epochs")->capture_default_str();
  train_toy->add_option("--lr", lr)->capture_default_str();
  train_toy->add_option("--timesteps,-T", toy_T)->capture_default_str()->check(CLI::Range(1, 255));
  train_toy->add_option("--split", two.split)->capture_default_str();
  train_toy->add_option("--bottleneck", toy_bn, "CxHxW (default: the split shape, ratio 1)");
  train_toy->add_option("--samples-per-class", task.samples_per_class)->capture_default_str();
  train_toy->add_option("--out", ckpt_path, "Checkpoint path")->capture_default_str();
  train_toy->add_option("--metrics", metrics_path, "Per-epoch metrics TSV");

  try {
    std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (!data_dir_flag.empty()) ::setenv("SPIKESPLIT_DATA_DIR", data_dir_flag.c_str(), 1);
  const Format format = format_flag == "tsv" ? Format::tsv : Format::text;

  try {
    if (*compress) {
      const Table t = compress_report(copt);
      emit(format == Format::text ? humanize_compress(t) : t, format, out);
      maybe_write(out_path, t);
      return kOk;
    }
    if (*energy) {
      const auto reports = energy_reports(eopt);
      emit(energy_table(reports, format == Format::tsv), format, out);
      maybe_write(out_path, energy_table(reports, true));
      return kOk;
    }
    if (*plan) {
      popt.objective = parse_objective(objective_flag);
      const SplitPlan p = make_plan(popt);
      if (format == Format::tsv) {
        write_tsv(out, plan_table(p));
      } else {
        out << format_plan(p);
      }
      maybe_write(out_path, plan_table(p));
      if (!p.feasible()) {
        err << "infeasible: no split point satisfies max drop " << format_fixed(popt.max_drop, 2) << "%\n";
        return kInfeasible;
      }
      return kOk;
    }
    if (*serve) {
      if (!serve_bn.empty()) sopt.bottleneck = shape_or_usage(serve_bn);
      auto model = std::make_shared<const Model>(build_model(sopt));
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      CloudServer server(endpoint_or_default(serve_endpoint));
      server.add_model(model, sopt.split);
      server.start();
      out << "listening on " << endpoint_or_default(serve_endpoint).host << ":" << server.port() << " ("
          << model->arch().name << ", split " << sopt.split << ")" << std::endl;
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
      out << "served " << server.requests_served() << " requests" << std::endl;
      return kOk;
    }
    if (*infer) {
      if (!infer_bn.empty()) iopt.bottleneck = shape_or_usage(infer_bn);
      const Model model = build_model(iopt);
      EdgeClient client(endpoint_or_default(infer_endpoint));
      bool all_match = true;
      for (std::size_t i = 0; i < count; ++i) {
        const Tensor image = random_batch(model.arch().input, 1, image_seed + i);
        std::vector<float> logits;
        for (std::size_t attempt = 0;; ++attempt) {
          try {
            logits = edge_infer(client, model, iopt.split, image, iopt.timesteps);
            break;
          } catch (const RetryableError& e) {
            if (attempt >= retries) throw;
            err << "retrying after: " << e.what() << "\n";
          }
        }
        out << "logits[" << i << "]: " << join_floats(logits) << "\n";
        if (verify_local) {
          const bool match = logits == local_logits(model, image, iopt.timesteps);
          all_match = all_match && match;
          out << "local match[" << i << "]: " << (match ? "yes" : "no") << "\n";
        }
      }
      const SessionStats& s = client.stats();
      out << "frames_sent: " << s.frames_sent << "\n"
          << "payload_bytes_total: " << s.payload_bytes_total << "\n"
          << "header_overhead_bytes: " << s.header_overhead_bytes << "\n"
          << "round_trips: " << s.round_trips << "\n";
      return all_match ? kOk : kFailure;
    }
    if (*train_toy) {
      const ArchitectureSpec arch = arch_or_usage(toy_arch);
      arch.check_split(two.split);
      task.input = arch.input;
      task.classes = arch.classes;
      task.seed = toy_seed;
      const Dataset data = make_blob_dataset(task);
      two.step1.epochs = epochs;
      two.step1.learning_rate = lr;
      two.step1.timesteps = toy_T;
      two.step1.shuffle_seed = toy_seed + 1;
      two.step2 = two.step1;
      two.step2.epochs = finetune_epochs;
      two.bottleneck_out = toy_bn.empty() ? arch.split_shape(two.split) : shape_or_usage(toy_bn);
      two.bottleneck_seed = toy_seed + 2;
      const TwoStepResult r = train_two_step(Model::build(arch, toy_seed), data, two);

      Table m;
      m.header = {"step", "epoch", "lr", "batch_loss", "loss", "accuracy"};
      auto add = [&m](const char* step, const TrainMetrics& tm) {
        for (const auto& e : tm.epochs) {
          m.add_row({step, std::to_string(e.epoch), format_exact(e.learning_rate), format_exact(e.batch_loss),
                     format_exact(e.loss), format_exact(e.accuracy)});
        }
      };
      add("1", r.step1);
      add("2", r.step2);
      if (metrics_path) write_text_file(*metrics_path, format_tsv(m));
      save_checkpoint(r.checkpoint, ckpt_path);
      const double a1 = r.step1.last().accuracy;
      const double a2 = r.step2.last().accuracy;
      out << "step 1: " << epochs << " epochs, train accuracy " << format_fixed(100 * a1, 2) << "%\n"
          << "step 2: bottleneck " << to_string(two.bottleneck_out) << " at split " << two.split << ", "
          << finetune_epochs << " epochs, train accuracy " << format_fixed(100 * a2, 2) << "% (drop "
          << format_fixed(accuracy_drop(a1, a2), 2) << " points)\n"
          << "checkpoint: " << ckpt_path << "\n";
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << "\n";
    return kProtocol;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace spikesplit::cli
