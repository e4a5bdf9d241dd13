#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bhvit/checkpoint.hpp"
#include "bhvit/dataset.hpp"
#include "bhvit/observations.hpp"
#include "bhvit/training.hpp"
#include "bhvit/verify.hpp"

namespace fs = std::filesystem;
using namespace bhvit;

namespace {

constexpr int kOk = 0, kCheckFailed = 1, kUsage = 2;

std::string default_data_dir() {
  const char* env = std::getenv("BHVIT_DATA_DIR");
  return env ? env : "";
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty() || !fs::exists(path))
    throw IoError("missing " + what + ": " + (path.empty() ? "(not given)" : path));
}

// "synthetic:<n>[:<seed>]" generates a deterministic fixture next to /tmp;
// anything else is a CIFAR-format file or directory of *.bin batches.
Dataset resolve_dataset(std::string spec, int64_t input_size, int64_t max_samples) {
  if (spec.empty()) spec = default_data_dir();
  if (spec.rfind("synthetic:", 0) == 0) {
    std::istringstream ss(spec.substr(10));
    int64_t n = 0;
    unsigned seed = 1;
    char sep = 0;
    ss >> n;
    if (ss >> sep >> seed && sep != ':') throw ConfigError("bad synthetic spec: " + spec);
    if (n <= 0) throw ConfigError("bad synthetic spec: " + spec);
    const std::string path =
        (fs::temp_directory_path() / ("bhvit_synth_" + std::to_string(n) + "_" +
                                      std::to_string(seed) + ".bin")).string();
    if (!fs::exists(path)) write_synthetic_cifar(path, n, seed);
    return load_cifar(path, input_size, max_samples);
  }
  require_file(spec, "data path");
  return load_cifar(spec, input_size, max_samples);
}

ModelConfig config_from_flags(const std::string& config_file, const std::string& preset) {
  if (!config_file.empty()) {
    require_file(config_file, "config file");
    return ModelConfig::from_json_file(config_file);
  }
  if (preset == "tiny") return ModelConfig::tiny();
  if (preset == "small") return ModelConfig::small();
  if (preset == "micro") return ModelConfig::micro();
  throw ConfigError("unknown preset: " + preset);
}

int cmd_train(const std::string& config_file, const std::string& preset, const std::string& data,
              const std::string& eval_data, const std::string& out_dir,
              const std::string& teacher_path, const TrainConfig& tc) {
  ModelConfig cfg = config_from_flags(config_file, preset);
  cfg.seed = tc.seed;
  cfg.validate();
  Dataset train_set = resolve_dataset(data, cfg.input_size, 0);
  Dataset eval_set;
  if (!eval_data.empty()) {
    eval_set = resolve_dataset(eval_data, cfg.input_size, 0);
  } else {
    // hold out the last tenth when no separate eval set is given
    const int64_t n = train_set.size();
    const int64_t held = std::max<int64_t>(1, n / 10);
    const int64_t s = cfg.input_size;
    eval_set.images = Tensor({held, s, s, 3});
    std::copy_n(train_set.images.data.begin() + (n - held) * s * s * 3, held * s * s * 3,
                eval_set.images.data.begin());
    eval_set.labels.assign(train_set.labels.end() - held, train_set.labels.end());
    train_set.images.data.resize(static_cast<size_t>((n - held) * s * s * 3));
    train_set.images.shape[0] = n - held;
    train_set.labels.resize(static_cast<size_t>(n - held));
  }
  TeacherLogits teacher;
  const bool has_teacher = !teacher_path.empty();
  if (has_teacher) {
    require_file(teacher_path, "teacher logits file");
    teacher = load_teacher_logits(teacher_path);
  }

  fs::create_directories(out_dir);
  std::ofstream cfg_out(fs::path(out_dir) / "config.json");
  cfg_out << cfg.to_json_text() << "\n";
  std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl");
  if (!metrics) throw IoError("cannot write metrics in " + out_dir);

  BHViT model(cfg);
  const TrainResult result =
      train(model, train_set, eval_set, tc, has_teacher ? &teacher : nullptr, &metrics,
            (fs::path(out_dir) / "checkpoint.bin").string());
  std::cout << "final eval accuracy " << result.final_eval_acc << "\n";
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data) {
  require_file(checkpoint, "checkpoint");
  ModelConfig cfg = peek_config(checkpoint);
  BHViT model(cfg);
  load_checkpoint(checkpoint, model, nullptr);
  Dataset set = resolve_dataset(data, cfg.input_size, 0);
  std::cout << "eval accuracy " << evaluate(model, set) << " on " << set.size() << " samples\n";
  return kOk;
}

int cmd_count_ops(const std::string& config_file, const std::string& preset, int input_size) {
  ModelConfig cfg = config_from_flags(config_file, preset);
  if (input_size > 0) cfg.input_size = input_size;
  cfg.validate();
  const OpsReport r = count_ops(cfg);
  std::ostringstream js;
  js << "{\"bops\":" << r.bops << ",\"flops\":" << r.flops << ",\"ops\":" << r.ops()
     << ",\"binary_params\":" << r.binary_param_count << ",\"real_params\":" << r.real_param_count
     << ",\"aux_params\":" << r.aux_param_count << ",\"model_size_bytes\":"
     << r.model_size_bytes() << ",\"aux_bytes\":" << r.aux_bytes() << "}";
  std::cout << js.str() << "\n";
  std::cout << "OPs (BOPs/64 + FLOPs): " << r.ops() << "\n"
            << "model size: " << static_cast<double>(r.model_size_bytes()) / 1e6 << " MB"
            << " (+" << static_cast<double>(r.aux_bytes()) / 1e6 << " MB foldable aux)\n";
  return kOk;
}

int cmd_bench_gemm(const std::string& sizes) {
  std::istringstream list(sizes);
  std::string item;
  Rng rng(7);
  while (std::getline(list, item, ',')) {
    int64_t m = 0, k = 0, p = 0;
    char x1 = 0, x2 = 0;
    std::istringstream ss(item);
    if (!(ss >> m >> x1 >> k >> x2 >> p) || x1 != 'x' || x2 != 'x' || m < 1 || k < 1 || p < 1)
      throw ConfigError("bad size triple (want MxKxN): " + item);
    const Tensor a = Tensor::rand_sign({m, k}, rng);
    const Tensor b = Tensor::rand_sign({p, k}, rng);
    const BitMatrix pa = pack(a), pb = pack(b);
    const double macs = static_cast<double>(m) * k * p;

    auto time_loop = [&](auto&& fn) {
      int reps = 1;
      for (;;) {
        const auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < reps; ++i) fn();
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (sec > 0.2) return sec / reps;
        reps *= 4;
      }
    };
    volatile float sink = 0;
    const double bit_sec = time_loop([&] { sink = sink + xnor_gemm_nt(pa, pb).v[0]; });
    const double dense_sec = time_loop([&] {
      float acc = 0;
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < p; ++j) {
          float s = 0;
          for (int64_t l = 0; l < k; ++l) s += a.at2(i, l) * b.at2(j, l);
          acc += s;
        }
      sink = sink + acc;
    });
    std::cout << item << ": xnor " << macs / bit_sec / 1e9 << " GMAC/s, float "
              << macs / dense_sec / 1e9 << " GMAC/s, speedup " << dense_sec / bit_sec << "x\n";
  }
  return kOk;
}

int cmd_observe(const std::string& experiment, const std::string& out_path, unsigned seed) {
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  if (experiment == "entropy") {
    out << "k,d,h_emp,h_pred,ratio\n";
    for (const auto& r : entropy_experiment({20, 200, 2000}, 256, 20, seed))
      out << r.k << "," << r.d << "," << r.h_emp << "," << r.h_pred << "," << r.ratio << "\n";
  } else if (experiment == "adam") {
    out << "t,factor\n";
    for (const auto& [t, f] : adam_factor_curve(6000)) out << t << "," << f << "\n";
  } else if (experiment == "gradient") {
    out << "trial,frac_zero_with_shortcut,frac_zero_without_shortcut\n";
    Rng rng(seed);
    for (int i = 0; i < 100; ++i) {
      const ResidualTrial r = residual_gradient_trial(4, 8, rng);
      out << i << "," << r.frac_with << "," << r.frac_without << "\n";
    }
  } else if (experiment == "demoivre") {
    out << "d,ks_distance,mean\n";
    for (const auto& r : demoivre_check({16, 64, 256}, 0.5, 5000, seed))
      out << r.d << "," << r.ks_distance << "," << r.mean << "\n";
  } else {
    throw ConfigError("unknown experiment: " + experiment);
  }
  if (!out) throw IoError("write failed: " + out_path);
  std::cout << "wrote " << out_path << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binary hybrid vision transformer toolkit"};
  app.require_subcommand(1);

  std::string config_file, preset = "micro", data, eval_data, out_dir = "run", teacher_path;
  TrainConfig tc;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", config_file, "model config JSON");
  train_cmd->add_option("--preset", preset, "tiny|small|micro (when no --config)");
  train_cmd->add_option("--data", data, "CIFAR file/dir or synthetic:<n>[:<seed>]");
  train_cmd->add_option("--eval-data", eval_data, "separate eval set (default: 10% holdout)");
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--teacher-logits", teacher_path, "teacher logits file");
  train_cmd->add_option("--seed", tc.seed, "seed");
  train_cmd->add_option("--epochs", tc.epochs, "epochs");
  train_cmd->add_option("--batch-size", tc.batch_size, "batch size");
  train_cmd->add_option("--lr", tc.lr, "peak learning rate");
  train_cmd->add_option("--lambda", tc.lambda, "distillation weight");
  train_cmd->add_option("--beta", tc.beta_value, "regularization weight");
  train_cmd->add_flag("--no-augment", [&tc](size_t) { tc.augment = false; }, "disable augmentation");

  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", data, "CIFAR file/dir or synthetic:<n>[:<seed>]");

  std::string suite = "all";
  unsigned verify_seed = 7;
  auto* verify_cmd = app.add_subcommand("verify", "run property suites");
  verify_cmd->add_option("--suite", suite, "bitpack|quant|model|all");
  verify_cmd->add_option("--seed", verify_seed, "seed");

  int input_size = 0;
  auto* count_cmd = app.add_subcommand("count-ops", "print the complexity report");
  count_cmd->add_option("--config", config_file, "model config JSON");
  count_cmd->add_option("--preset", preset, "tiny|small|micro (when no --config)");
  count_cmd->add_option("--input-size", input_size, "override the input resolution");

  std::string sizes = "64x64x64,64x256x64,256x256x256";
  auto* bench_cmd = app.add_subcommand("bench-gemm", "xnor vs float GEMM throughput");
  bench_cmd->add_option("--sizes", sizes, "comma-separated MxKxN triples");

  std::string experiment, csv_out = "observe.csv";
  unsigned obs_seed = 7;
  auto* obs_cmd = app.add_subcommand("observe", "run a statistical experiment");
  obs_cmd->add_option("--experiment", experiment, "entropy|adam|gradient|demoivre")->required();
  obs_cmd->add_option("--out", csv_out, "CSV output path");
  obs_cmd->add_option("--seed", obs_seed, "seed");

  try {
    app.parse(argc, argv);
    if (*train_cmd)
      return cmd_train(config_file, preset, data, eval_data, out_dir, teacher_path, tc);
    if (*eval_cmd) return cmd_eval(checkpoint, data);
    if (*verify_cmd)
      return print_report(run_suite(suite, verify_seed), std::cout) ? kOk : kCheckFailed;
    if (*count_cmd) return cmd_count_ops(config_file, preset, input_size);
    if (*bench_cmd) return cmd_bench_gemm(sizes);
    if (*obs_cmd) return cmd_observe(experiment, csv_out, obs_seed);
    return kUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
