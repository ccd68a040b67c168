#include "dfuse/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "depthfuse/checkpoint.hpp"
#include "depthfuse/data_io.hpp"
#include "depthfuse/error.hpp"
#include "depthfuse/gradcheck.hpp"
#include "depthfuse/metrics.hpp"
#include "depthfuse/synthetic.hpp"
#include "depthfuse/trainer.hpp"
#include "dfuse/run_config.hpp"
#include "dfuse/visualize.hpp"

namespace dfuse {
namespace {

namespace fs = std::filesystem;
using namespace depthfuse;

struct SynthArgs {
  fs::path out;
  std::size_t count = 0;
  std::string size = "32x32";
  std::uint64_t seed = 1;
  std::optional<std::size_t> test;
  std::size_t val = 0;
  std::size_t min_primitives = 0;
  std::size_t max_primitives = 4;
  double depth_min = 1.0;
  double depth_max = 10.0;
};

struct TrainArgs {
  std::optional<fs::path> config;
  fs::path data;
  fs::path out;
  std::optional<fs::path> resume;
  std::size_t log_every = 50;
};

struct EvalArgs {
  std::optional<fs::path> checkpoint;
  fs::path data;
  std::optional<double> cap;
  std::string split = "test";
  std::optional<fs::path> config;
  bool echo_truth = false;
};

struct PredictArgs {
  fs::path checkpoint;
  fs::path image;
  fs::path out;
  std::optional<fs::path> png;
};

struct GradcheckArgs {
  double tolerance = 1e-5;
  std::size_t instances = 20;
  std::uint64_t seed = 2024;
  std::optional<std::string> corrupt;
};

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  std::size_t h = 0, w = 0;
  char x = 0, extra = 0;
  std::istringstream is(text);
  if (!(is >> h >> x >> w) || (x != 'x' && x != 'X') || (is >> extra) || h == 0 || w == 0) {
    throw ConfigError("--size must look like HxW with positive integers, got '" + text + "'");
  }
  return {h, w};
}

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  SyntheticSceneSpec spec;
  std::tie(spec.height, spec.width) = parse_size(a.size);
  spec.seed = a.seed;
  spec.min_primitives = a.min_primitives;
  spec.max_primitives = a.max_primitives;
  spec.d_min = a.depth_min;
  spec.d_max = a.depth_max;
  SplitCounts counts;
  counts.test = a.test.value_or(a.count / 5);
  counts.val = a.val;
  if (counts.test + counts.val > a.count) throw ConfigError("--test plus --val exceed --count");
  counts.train = a.count - counts.test - counts.val;
  generate_synthetic(spec, counts, a.out);
  err << "wrote " << a.count << " scenes (" << counts.train << " train, " << counts.val << " val, " << counts.test
      << " test) to " << a.out.string() << "\n";
  nlohmann::ordered_json j;
  j["manifest"] = (a.out / "manifest.csv").string();
  j["train"] = counts.train;
  j["val"] = counts.val;
  j["test"] = counts.test;
  out << j.dump() << "\n";
  return kExitOk;
}

Checkpoint with_identity(Checkpoint c, const RunConfig& config) {
  c.fingerprint = fingerprint(config);
  c.config_json = canonical_json(config);
  return c;
}

// Config stored in a checkpoint, checked against its recorded fingerprint.
RunConfig checkpoint_config(const Checkpoint& c) {
  RunConfig config = parse_run_config(c.config_json);
  if (fingerprint(config) != c.fingerprint) {
    throw FormatError("checkpoint config does not match its fingerprint " + c.fingerprint, 0);
  }
  return config;
}

void require_fingerprint(const std::string& checkpoint_fp, const std::string& config_fp) {
  if (checkpoint_fp != config_fp) {
    throw ConfigError("config fingerprint mismatch: checkpoint has " + checkpoint_fp + ", config has " + config_fp);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string metrics_line(const EvalRecord& e) {
  nlohmann::ordered_json j;
  j["iteration"] = e.iteration;
  j["metrics"] = nlohmann::ordered_json::parse(to_json(e.report));
  return j.dump();
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig config = a.config ? load_run_config(*a.config) : RunConfig{};
  config.validate();
  const std::string fp = fingerprint(config);
  const Manifest manifest = load_manifest(a.data);
  const auto train_set = load_samples(manifest.filter(Split::kTrain));
  const Split eval_split = manifest.count(Split::kVal) > 0 ? Split::kVal : Split::kTest;
  const auto eval_set = config.train.eval_interval > 0 ? load_samples(manifest.filter(eval_split))
                                                       : std::vector<Sample>{};
  std::optional<Checkpoint> resume;
  if (a.resume) {
    resume = load_checkpoint(*a.resume);
    require_fingerprint(resume->fingerprint, fp);
  }

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out.string() + ": " + ec.message());

  std::vector<IterationRecord> records;
  std::string metrics;
  TrainCallbacks cb;
  cb.on_iteration = [&](const IterationRecord& r) {
    records.push_back(r);
    if (a.log_every != 0 && r.iteration % a.log_every == 0) {
      char line[160];
      std::snprintf(line, sizeof(line), "iter %llu loss %.5f (depth %.5f ssim %.5f logistic %.5f)\n",
                    static_cast<unsigned long long>(r.iteration), r.loss.total, r.loss.depth, r.loss.ssim,
                    r.loss.logistic);
      err << line;
    }
  };
  cb.on_eval = [&](const EvalRecord& e) {
    metrics += metrics_line(e) + "\n";
    err << "eval @" << e.iteration << " rmse " << e.report.rmse << " delta1 " << e.report.delta1 << "\n";
  };
  cb.on_checkpoint = [&](const Checkpoint& c) {
    save_checkpoint(a.out / ("checkpoint_" + std::to_string(c.iteration) + ".dfck"), with_identity(c, config));
  };

  const fs::path history_path = a.out / "history.csv";
  TrainResult result;
  try {
    result = train(config.train, config.network, train_set, eval_set, resume ? &*resume : nullptr, cb);
  } catch (const NumericalError&) {
    write_text(history_path, history_csv(records));
    throw;
  }
  const Checkpoint final_checkpoint = with_identity(std::move(result.checkpoint), config);
  save_checkpoint(a.out / "checkpoint.dfck", final_checkpoint);
  write_text(history_path, history_csv(records));
  write_text(a.out / "config.json", canonical_json(config) + "\n");
  if (!metrics.empty()) write_text(a.out / "metrics.jsonl", metrics);

  nlohmann::ordered_json j;
  j["checkpoint"] = (a.out / "checkpoint.dfck").string();
  j["history"] = history_path.string();
  j["config"] = (a.out / "config.json").string();
  j["fingerprint"] = fp;
  j["iterations"] = final_checkpoint.iteration;
  if (!records.empty()) j["final_loss"] = records.back().loss.total;
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Split split = parse_split(a.split);
  const auto samples = load_samples(load_manifest(a.data).filter(split));
  if (samples.empty()) throw EvaluationError("manifest has no " + a.split + " samples");
  MetricsReport report;
  if (a.echo_truth) {
    err << "debug: echoing ground truth instead of running the network\n";
    MetricsAccumulator acc(a.cap);
    for (const Sample& s : samples) {
      std::vector<double> t(s.depth.begin(), s.depth.end());
      acc.add(DepthPair{t, t, s.valid});
    }
    report = acc.report();
  } else {
    if (!a.checkpoint) throw ConfigError("--checkpoint is required unless --debug-echo-truth is given");
    const Checkpoint ckpt = load_checkpoint(*a.checkpoint);
    const RunConfig config = checkpoint_config(ckpt);
    if (a.config) require_fingerprint(ckpt.fingerprint, fingerprint(load_run_config(*a.config)));
    const DepthNetwork<float> net(config.network, ckpt.params);
    report = evaluate_network(net, samples, config.train.augment, a.cap, config.train.optimizer.batch_size);
  }
  err << "evaluated " << report.pixel_count << " pixels over " << samples.size() << " samples\n";
  out << to_json(report) << "\n";
  return kExitOk;
}

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const RunConfig config = checkpoint_config(ckpt);
  const Sample sample = image_sample(read_ppm(a.image), a.image.stem().string());
  const DepthNetwork<float> net(config.network, ckpt.params);
  const auto pred = predict(net, std::span<const Sample>(&sample, 1), config.train.augment, 1);
  DepthImage depth{sample.height, sample.width, pred[0]};
  write_depth(a.out, depth);
  if (a.png) write_png(*a.png, sample.height, sample.width, colorize_depth(depth.values));
  err << "wrote " << sample.height << "x" << sample.width << " depth to " << a.out.string() << "\n";
  nlohmann::ordered_json j;
  j["depth"] = a.out.string();
  j["height"] = sample.height;
  j["width"] = sample.width;
  if (a.png) j["visualization"] = a.png->string();
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  GradSuiteOptions options;
  options.tolerance = a.tolerance;
  options.instances = a.instances;
  options.seed = a.seed;
  options.corrupt = a.corrupt;
  const auto entries = run_gradcheck_suite(options);
  if (a.corrupt && std::none_of(entries.begin(), entries.end(), [&](const auto& e) { return e.name == *a.corrupt; })) {
    throw ConfigError("--corrupt names no primitive in the suite: '" + *a.corrupt + "'");
  }
  bool ok = true;
  out << std::left << std::setw(28) << "primitive" << std::setw(11) << "instances" << std::setw(16)
      << "max_rel_error"
      << "status\n";
  for (const auto& e : entries) {
    char err_text[32];
    std::snprintf(err_text, sizeof(err_text), "%.3e", e.max_rel_error);
    out << std::left << std::setw(28) << e.name << std::setw(11) << e.instances << std::setw(16) << err_text
        << (e.passed ? "PASS" : "FAIL") << "\n";
    ok = ok && e.passed;
  }
  if (!ok) {
    err << "gradient check failed (tolerance " << a.tolerance << ")\n";
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monocular depth estimation toolkit", "dfuse"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset with a manifest");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--count", synth.count, "Total number of scenes")->required();
  s->add_option("--size", synth.size, "Image size HxW")->capture_default_str();
  s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  s->add_option("--test", synth.test, "Scenes tagged test (default: count/5)");
  s->add_option("--val", synth.val, "Scenes tagged val")->capture_default_str();
  s->add_option("--min-primitives", synth.min_primitives)->capture_default_str();
  s->add_option("--max-primitives", synth.max_primitives)->capture_default_str();
  s->add_option("--depth-min", synth.depth_min, "Nearest depth in metres")->capture_default_str();
  s->add_option("--depth-max", synth.depth_max, "Farthest depth in metres")->capture_default_str();

  TrainArgs train_args;
  auto* t = app.add_subcommand("train", "Train a network on the train split of a manifest");
  t->add_option("--config", train_args.config, "Run config JSON (defaults when omitted)");
  t->add_option("--data", train_args.data, "Manifest CSV")->required();
  t->add_option("--out", train_args.out, "Output directory")->required();
  t->add_option("--resume", train_args.resume, "Checkpoint to continue from");
  t->add_option("--log-every", train_args.log_every, "Progress line interval (0 = silent)")->capture_default_str();

  EvalArgs eval_args;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint; prints a metrics JSON object");
  e->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file");
  e->add_option("--data", eval_args.data, "Manifest CSV")->required();
  e->add_option("--cap", eval_args.cap, "Ignore ground truth beyond this depth (metres)");
  e->add_option("--split", eval_args.split, "train, val or test")->capture_default_str();
  e->add_option("--config", eval_args.config, "Refuse to run unless this config matches the checkpoint");
  e->add_flag("--debug-echo-truth", eval_args.echo_truth, "Score ground truth against itself");

  PredictArgs predict_args;
  auto* p = app.add_subcommand("predict", "Predict depth for one PPM image");
  p->add_option("--checkpoint", predict_args.checkpoint, "Checkpoint file")->required();
  p->add_option("--image", predict_args.image, "Input PPM")->required();
  p->add_option("--out", predict_args.out, "Output DPTH file")->required();
  p->add_option("--png-vis", predict_args.png, "Optional false-colour PNG (blue near, red far)");

  GradcheckArgs grad_args;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and loss");
  g->add_option("--tolerance", grad_args.tolerance, "Maximum relative error")->capture_default_str();
  g->add_option("--instances", grad_args.instances, "Random instances per primitive")->capture_default_str();
  g->add_option("--seed", grad_args.seed)->capture_default_str();
  g->add_option("--corrupt", grad_args.corrupt, "Debug: perturb this primitive's gradient");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "dfuse: " << ex.what() << "\n";
    return kExitConfig;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out, err);
    if (t->parsed()) return cmd_train(train_args, out, err);
    if (e->parsed()) return cmd_eval(eval_args, out, err);
    if (p->parsed()) return cmd_predict(predict_args, out, err);
    if (g->parsed()) return cmd_gradcheck(grad_args, out, err);
  } catch (const ConfigError& ex) {
    err << "dfuse: configuration error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& ex) {
    err << "dfuse: configuration error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const DataError& ex) {
    err << "dfuse: data error: " << ex.what() << "\n";
    return kExitData;
  } catch (const NumericalError& ex) {
    err << "dfuse: numerical failure: " << ex.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& ex) {
    err << "dfuse: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace dfuse
