#include "hinet/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "hinet/baseline.hpp"
#include "hinet/checked_math.hpp"
#include "hinet/checkpoint.hpp"
#include "hinet/data.hpp"
#include "hinet/error.hpp"
#include "hinet/hierarchy.hpp"
#include "hinet/inference.hpp"
#include "hinet/instances.hpp"
#include "hinet/network.hpp"

namespace hinet {

namespace fs = std::filesystem;

namespace {

std::string fixed(double value, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

std::string grouped(std::uint64_t value) {
  std::string digits = std::to_string(value);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string read_file(const fs::path& path, std::string_view what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + std::string(what) + " '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void require_readable(const std::string& path, std::string_view what) {
  if (path.empty()) throw Error(ErrorKind::Validation, "missing " + std::string(what) + " path");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(ErrorKind::Io, std::string(what) + " '" + path + "' does not exist");
  }
}

void require_writable(const std::string& path, std::string_view what) {
  if (path.empty()) throw Error(ErrorKind::Validation, "missing " + std::string(what) + " path");
  const fs::path parent = fs::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty() && !fs::is_directory(parent, ec)) {
    throw Error(ErrorKind::Io, "directory for " + std::string(what) + " '" + path +
                                   "' does not exist");
  }
}

std::size_t max_width(const Hierarchy& hierarchy) {
  auto sizes = hierarchy.level_sizes();
  return *std::max_element(sizes.begin(), sizes.end());
}

// Appends `--key value` for every config entry whose flag is absent from
// `args`, so that command-line flags take precedence over the file.
void merge_config(std::vector<std::string>& args, CLI::App& sub) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return;
  require_readable(*path, "config file");
  for (const auto& [key, value] : parse_config(read_file(*path, "config file"))) {
    std::string flag = "--" + key;
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    if (flag == "--config" || sub.get_option_no_throw(flag) == nullptr) {
      throw Error(ErrorKind::Validation, "config key '" + key + "' is not an option of '" +
                                             sub.get_name() + "'");
    }
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (!given) {
      args.push_back(flag);
      args.push_back(value);
    }
  }
}

struct Options {
  std::string hierarchy;
  std::string dataset;
  std::string out;
  std::string config;
  std::string model = "hinet";
  std::string cascade = "parents+trunk";
  std::string checkpoint;
  std::string features;
  std::string posteriors;
  std::string test_out;
  bool oracle = false;

  TrainConfig train;
  std::size_t k = 32;

  SyntheticConfig synthetic;
  double train_fraction = 0.0;

  std::uint64_t bench_k = 0;
  std::uint64_t bench_n = 0;
  std::uint64_t bench_h = 0;

  std::size_t instances = 1000;
  std::uint64_t verify_seed = 1;
  InstanceLimits limits;
};

int cmd_validate(const Options& o, std::ostream& out) {
  require_readable(o.hierarchy, "hierarchy file");
  const Hierarchy h = load_hierarchy(o.hierarchy);
  out << "levels: " << h.height() << "\n";
  out << "level sizes:";
  for (auto n : h.level_sizes()) out << ' ' << n;
  out << "\nkind: " << (h.kind() == HierarchyKind::Tree ? "tree" : "dag") << "\n";
  out << "edges: " << h.edges().size() << "\n";
  const std::size_t traces = count_traces(h);
  out << "traces: " << (traces == SIZE_MAX ? std::string("overflow") : std::to_string(traces))
      << "\n";
  return 0;
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  require_readable(o.hierarchy, "hierarchy file");
  require_writable(o.out, "output dataset");
  if (!o.test_out.empty()) {
    require_writable(o.test_out, "test dataset");
    if (!(o.train_fraction > 0.0 && o.train_fraction < 1.0)) {
      throw Error(ErrorKind::Validation, "--test-out needs --train-fraction in (0, 1)");
    }
  }
  const Hierarchy h = load_hierarchy(o.hierarchy);
  const Dataset data = generate_synthetic(h, o.synthetic);
  if (o.test_out.empty()) {
    save_dataset(o.out, data, h);
    out << "wrote " << data.size() << " samples to " << o.out << "\n";
    return 0;
  }
  const auto [train_set, test_set] = split(data, o.train_fraction, o.synthetic.seed);
  save_dataset(o.out, train_set, h);
  save_dataset(o.test_out, test_set, h);
  out << "wrote " << train_set.size() << " samples to " << o.out << "\n";
  out << "wrote " << test_set.size() << " samples to " << o.test_out << "\n";
  return 0;
}

void warn_flatten_size(const Hierarchy& h, std::size_t k, std::ostream& err) {
  if (h.height() < 3) return;
  const std::uint64_t n = max_width(h);
  auto count = [](auto fn) -> std::string {
    try {
      return grouped(fn());
    } catch (const Error&) {
      return "overflow";
    }
  };
  err << "warning: flatten output layer grows exponentially with depth (k=" << k << " n=" << n
      << " h=" << h.height() << "): flatten O(kn^h) "
      << count([&] { return flatten_param_count(k, n, h.height()); }) << " vs hinet O(kn+hn^2) "
      << count([&] { return hinet_param_count(k, n, h.height()); }) << "\n";
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  require_readable(o.hierarchy, "hierarchy file");
  require_readable(o.dataset, "dataset file");
  require_writable(o.out, "checkpoint");
  o.train.validate();
  if (o.k == 0) throw Error(ErrorKind::Validation, "k must be at least 1");
  const Hierarchy h = load_hierarchy(o.hierarchy);
  const Dataset data = load_dataset(o.dataset, h);

  auto print_history = [&](const std::vector<double>& history) {
    for (std::size_t e = 0; e < history.size(); ++e) {
      out << "epoch " << e + 1 << " loss " << fixed(history[e]) << "\n";
    }
  };

  if (o.model == "hinet") {
    const CascadeInput input =
        o.cascade == "parents" ? CascadeInput::Parents : CascadeInput::ParentsAndTrunk;
    ModelParams params = init_params(h, data.input_dim, o.k, o.train, input);
    TrainResult result = train(std::move(params), data, h, o.train);
    print_history(result.loss_history);
    save_checkpoint(o.out, h, result.params);
  } else {
    warn_flatten_size(h, o.k, err);
    const TraceIndex index(h);
    FlatParams params = init_flat_params(index, data.input_dim, o.k, o.train);
    FlatTrainResult result = flat_train(std::move(params), data, h, index, o.train);
    print_history(result.loss_history);
    save_checkpoint(o.out, h, result.params);
  }
  out << "wrote checkpoint " << o.out << "\n";
  return 0;
}

std::vector<std::vector<double>> read_feature_rows(const std::string& path) {
  const std::string text = read_file(path, "features file");
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const std::string features = line.substr(0, line.find('\t'));
    std::vector<double> row;
    std::istringstream fields(features);
    std::string field;
    while (std::getline(fields, field, ',')) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError(ErrorKind::MalformedInput, line_no, "bad feature value '" + field + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int report_decoding(const Hierarchy& h, const LevelPosteriors& posteriors, bool oracle,
                    std::ostream& out) {
  const auto masks = build_masks(h);
  const ScoredTrace best = downpour(posteriors, masks);
  out << format_trace(h, best.trace) << "  logp=" << fixed(best.log_score) << "\n";
  if (!oracle) return 0;
  const ScoredTrace check = brute_force_map(posteriors, masks, h);
  const bool same_score = best.log_score == check.log_score ||
                          std::abs(best.log_score - check.log_score) <= 1e-12;
  if (same_score && best.trace == check.trace) {
    out << "agreement: exact\n";
    return 0;
  }
  out << "agreement: MISMATCH oracle " << format_trace(h, check.trace)
      << "  logp=" << fixed(check.log_score) << "\n";
  return static_cast<int>(ErrorKind::PropertyViolation);
}

int cmd_infer(const Options& o, std::ostream& out) {
  if (o.posteriors.empty() == o.features.empty()) {
    throw Error(ErrorKind::Validation, "give exactly one of --posteriors or --features");
  }
  std::optional<Checkpoint> ckpt;
  if (!o.checkpoint.empty()) {
    require_readable(o.checkpoint, "checkpoint");
    ckpt = load_checkpoint(o.checkpoint);
  }

  if (!o.posteriors.empty()) {
    require_readable(o.posteriors, "posteriors file");
    std::optional<Hierarchy> h;
    if (ckpt) {
      h = ckpt->hierarchy;
    } else {
      require_readable(o.hierarchy, "hierarchy file");
      h = load_hierarchy(o.hierarchy);
    }
    const LevelPosteriors posteriors = parse_posteriors(read_file(o.posteriors, "posteriors file"), *h);
    return report_decoding(*h, posteriors, o.oracle, out);
  }

  if (!ckpt) throw Error(ErrorKind::Validation, "--features needs --checkpoint");
  require_readable(o.features, "features file");
  const auto rows = read_feature_rows(o.features);
  const Hierarchy& h = ckpt->hierarchy;
  int status = 0;
  if (const auto* params = std::get_if<ModelParams>(&ckpt->model)) {
    for (const auto& row : rows) {
      const ForwardResult fr = forward(*params, row);
      status = std::max(status, report_decoding(h, fr.posteriors, o.oracle, out));
    }
    return status;
  }
  if (o.oracle) throw Error(ErrorKind::Validation, "--oracle applies to hinet checkpoints only");
  const auto& flat = std::get<FlatParams>(ckpt->model);
  const TraceIndex index(h);
  for (const auto& row : rows) {
    const Eigen::VectorXd p = flat_forward(flat, row);
    const Trace t = flat_predict(flat, row, index);
    out << format_trace(h, t) << "  logp=" << fixed(std::log(p(static_cast<Eigen::Index>(index.id_of(t)))))
        << "\n";
  }
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  require_readable(o.checkpoint, "checkpoint");
  require_readable(o.dataset, "dataset file");
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Hierarchy& h = ckpt.hierarchy;
  const Dataset data = load_dataset(o.dataset, h);
  Predictor predictor;
  if (const auto* params = std::get_if<ModelParams>(&ckpt.model)) {
    if (data.input_dim != params->input_dim()) {
      throw Error(ErrorKind::Validation, "dataset feature dimension does not match the model");
    }
    const auto masks = build_masks(h);
    predictor = [params, masks](std::span<const double> x) { return predict(*params, x, masks).trace; };
    out << "model: hinet\n";
  } else {
    const auto* flat = &std::get<FlatParams>(ckpt.model);
    if (data.input_dim != flat->input_dim()) {
      throw Error(ErrorKind::Validation, "dataset feature dimension does not match the model");
    }
    auto index = std::make_shared<TraceIndex>(h);
    predictor = [flat, index](std::span<const double> x) { return flat_predict(*flat, x, *index); };
    out << "model: flatten\n";
  }
  out << format_report(evaluate(predictor, data, h), h);
  return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
  const std::uint64_t flat = flatten_param_count(o.bench_k, o.bench_n, o.bench_h);
  const std::uint64_t hier = hinet_param_count(o.bench_k, o.bench_n, o.bench_h);
  out << "k=" << o.bench_k << " n=" << o.bench_n << " h=" << o.bench_h << "\n";
  out << "flatten params O(kn^h): " << grouped(flat) << "\n";
  out << "hinet params O(kn+hn^2): " << grouped(hier) << "\n";
  out << "ratio: " << fixed(static_cast<double>(flat) / static_cast<double>(hier)) << "\n";
  out << "leaf classes n^h: " << grouped(checked_pow(o.bench_n, o.bench_h, "leaf class count"))
      << "\n";
  std::uint64_t traces = 0;
  for (std::uint64_t d = 1; d <= o.bench_h; ++d) {
    traces = checked_add(traces, checked_pow(o.bench_n, d, "trace count"), "trace count");
  }
  out << "traces (all depths): " << grouped(traces) << "\n";
  return 0;
}

int cmd_verify(const Options& o, std::ostream& out) {
  if (o.instances == 0) throw Error(ErrorKind::Validation, "--instances must be at least 1");
  if (o.limits.max_height == 0 || o.limits.max_width == 0) {
    throw Error(ErrorKind::Validation, "instance limits must be at least 1");
  }
  std::size_t failures[3] = {0, 0, 0};
  for (std::size_t i = 0; i < o.instances; ++i) {
    const Instance inst = make_instance(o.verify_seed, i, o.limits);
    const auto masks = build_masks(inst.hierarchy);
    const TheoremReport report =
        check_theorems(inst.posteriors, masks, inst.hierarchy, inst.descriptor);
    failures[0] += report.theorem1_ok ? 0 : 1;
    failures[1] += report.theorem2_ok ? 0 : 1;
    failures[2] += report.theorem3_ok ? 0 : 1;
    if (report.counterexample) {
      out << "counterexample: " << report.instance << "\n";
      out << "  " << describe(*report.counterexample, inst.hierarchy) << "\n";
      out << "hierarchy:\n" << to_text(inst.hierarchy) << "posteriors:\n"
          << to_text(inst.posteriors);
    }
  }
  out << "instances: " << o.instances << "\n";
  const char* names[3] = {"theorem1", "theorem2", "theorem3"};
  for (int t = 0; t < 3; ++t) {
    out << names[t] << ": "
        << (failures[t] == 0 ? std::string("ok") : std::to_string(failures[t]) + " failures")
        << "\n";
  }
  const bool ok = failures[0] + failures[1] + failures[2] == 0;
  return ok ? 0 : static_cast<int>(ErrorKind::PropertyViolation);
}

}  // namespace

std::map<std::string, std::string> parse_config(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string();
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(ErrorKind::Validation, line_no, "expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ParseError(ErrorKind::Validation, line_no, "expected 'key = value'");
    }
    if (!out.emplace(key, value).second) {
      throw ParseError(ErrorKind::Validation, line_no, "key '" + key + "' repeated");
    }
  }
  return out;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"HiNet hierarchical classifier: train, decode and verify", "hinet"};
  app.require_subcommand(1);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value file; flags override it");
  };

  auto* validate = app.add_subcommand("validate", "Check a hierarchy file");
  validate->add_option("--hierarchy", o.hierarchy, "Hierarchy file")->required();
  common(validate);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--hierarchy", o.hierarchy, "Hierarchy file");
  gen->add_option("--out", o.out, "Output dataset (training part when splitting)");
  gen->add_option("--test-out", o.test_out, "Output for the held-out part");
  gen->add_option("--train-fraction", o.train_fraction, "Training fraction when splitting");
  gen->add_option("--samples-per-trace", o.synthetic.samples_per_trace, "Samples per trace");
  gen->add_option("--spread", o.synthetic.cluster_spread, "Cluster standard deviation");
  gen->add_option("--d-in", o.synthetic.input_dim, "Feature dimension");
  gen->add_option("--seed", o.synthetic.seed, "Random seed");
  common(gen);

  auto* tr = app.add_subcommand("train", "Train a hinet or flatten model");
  tr->add_option("--hierarchy", o.hierarchy, "Hierarchy file");
  tr->add_option("--dataset", o.dataset, "Training dataset");
  tr->add_option("--model", o.model, "hinet or flatten")
      ->check(CLI::IsMember({"hinet", "flatten"}));
  tr->add_option("--out", o.out, "Checkpoint to write");
  tr->add_option("--epochs", o.train.epochs, "Epochs");
  tr->add_option("--learning-rate", o.train.learning_rate, "SGD step size");
  tr->add_option("--batch-size", o.train.batch_size, "Mini-batch size");
  tr->add_option("--seed", o.train.seed, "Random seed");
  tr->add_option("--init-scale", o.train.init_scale, "Initial weight scale");
  tr->add_option("--k", o.k, "Width of the feature trunk");
  tr->add_option("--cascade", o.cascade, "Inputs of deeper levels: parents or parents+trunk")
      ->check(CLI::IsMember({"parents", "parents+trunk"}));
  common(tr);

  auto* inf = app.add_subcommand("infer", "Decode the MAP trace");
  inf->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  inf->add_option("--hierarchy", o.hierarchy, "Hierarchy file (posteriors without checkpoint)");
  inf->add_option("--posteriors", o.posteriors, "Per-level posteriors file");
  inf->add_option("--features", o.features, "Feature rows, one per line");
  inf->add_flag("--oracle", o.oracle, "Cross-check against exhaustive search");
  common(inf);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  ev->add_option("--dataset", o.dataset, "Dataset");
  common(ev);

  auto* bench = app.add_subcommand("bench", "Compare parameter counts");
  bench->add_option("k", o.bench_k, "Feature width k")->required();
  bench->add_option("width", o.bench_n, "Level width n")->required();
  bench->add_option("height", o.bench_h, "Height h")->required();
  common(bench);

  auto* verify = app.add_subcommand("verify", "Check the decoding theorems on random instances");
  verify->add_option("--instances", o.instances, "Number of instances");
  verify->add_option("--seed", o.verify_seed, "Random seed");
  verify->add_option("--max-height", o.limits.max_height, "Largest hierarchy height");
  verify->add_option("--max-width", o.limits.max_width, "Largest level width");
  common(verify);

  try {
    std::vector<std::string> args = raw_args;
    if (!args.empty()) {
      if (CLI::App* sub = app.get_subcommand_no_throw(args[0])) merge_config(args, *sub);
    }
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : static_cast<int>(ErrorKind::Validation);
    }

    if (validate->parsed()) return cmd_validate(o, out);
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (tr->parsed()) return cmd_train(o, out, err);
    if (inf->parsed()) return cmd_infer(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (bench->parsed()) return cmd_bench(o, out);
    if (verify->parsed()) return cmd_verify(o, out);
    return static_cast<int>(ErrorKind::Validation);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  }
}

}  // namespace hinet
