// treecaps: corpus generation, training, evaluation and robustness checks
// for capsule-network models over mini-C syntax trees.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "treecaps/checkpoint.hpp"
#include "treecaps/corpus.hpp"
#include "treecaps/perturb.hpp"
#include "treecaps/train.hpp"

namespace tc = treecaps;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<tc::ProgramRecord> load_data(const std::string& path) {
  if (!std::filesystem::exists(path)) throw tc::SchemaError("no such file: " + path);
  return tc::load_manifest(path);
}

std::vector<tc::ProgramRecord> filter_split(const std::vector<tc::ProgramRecord>& records,
                                            const std::string& split) {
  if (split == "all") return records;
  std::vector<tc::ProgramRecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  if (out.empty()) throw tc::SchemaError("no records in split '" + split + "'");
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

struct ModelFlags {
  std::string task = "classify", routing = "vts", features = "combine";
  int conv_layers = 8, type_dim = 30, token_dim = 50;
  int n_sc = 100, d_sc = 16, d_cc = 16, iterations = 3;
  double lr = 0.001;
  int batch_size = 32, epochs = 50;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--task", task, "classify | name")->capture_default_str();
    app->add_option("--routing", routing, "vts | drsw")->capture_default_str();
    app->add_option("--features", features, "type | token | combine")->capture_default_str();
    app->add_option("--conv-layers", conv_layers, "stacked convolution layers M")
        ->capture_default_str();
    app->add_option("--type-dim", type_dim)->capture_default_str();
    app->add_option("--token-dim", token_dim)->capture_default_str();
    app->add_option("--n-sc", n_sc, "secondary capsule count")->capture_default_str();
    app->add_option("--d-sc", d_sc, "secondary capsule dim (drsw only)")->capture_default_str();
    app->add_option("--d-cc", d_cc, "class capsule dim")->capture_default_str();
    app->add_option("--iters", iterations, "routing iterations r")->capture_default_str();
    app->add_option("--lr", lr)->capture_default_str();
    app->add_option("--batch-size", batch_size)->capture_default_str();
    app->add_option("--epochs", epochs)->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
  }

  tc::ModelConfig to_config() const {
    tc::ModelConfig cfg;
    cfg.task = tc::task_from_string(task);
    cfg.routing_kind = tc::routing_kind_from_string(routing);
    cfg.feature_mode = tc::feature_mode_from_string(features);
    cfg.conv_layers = conv_layers;
    cfg.type_dim = type_dim;
    cfg.token_dim = token_dim;
    cfg.n_sc = n_sc;
    cfg.d_sc = d_sc;
    cfg.d_cc = d_cc;
    cfg.routing_iterations = iterations;
    cfg.lr = lr;
    cfg.batch_size = batch_size;
    cfg.epochs = epochs;
    cfg.seed = seed;
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"capsule-network program classification over mini-C syntax trees"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic mini-C corpus");
  int gen_classes = 10, gen_per_class = 20;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "corpus";
  gen->add_option("--classes", gen_classes, "number of templates (<= 10)")->capture_default_str();
  gen->add_option("--per-class", gen_per_class)->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  ModelFlags mf;
  mf.add_to(train_cmd);
  std::string train_data, train_out = "model.ckpt", train_log;
  int patience = 10, threads = 1;
  bool verbose = false;
  train_cmd->add_option("--data", train_data, "dataset manifest (JSONL)")->required();
  train_cmd->add_option("--out", train_out, "checkpoint path")->capture_default_str();
  train_cmd->add_option("--log", train_log, "metrics log path (JSONL)");
  train_cmd->add_option("--patience", patience, "early-stopping patience")->capture_default_str();
  train_cmd->add_option("--threads", threads)->capture_default_str();
  train_cmd->add_flag("--verbose", verbose);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_model, eval_data, eval_out, eval_split = "test";
  eval_cmd->add_option("--model", eval_model)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--out", eval_out, "metrics JSON path (default: stdout)");
  eval_cmd->add_option("--split", eval_split, "train | val | test | all")->capture_default_str();

  // ppc
  auto* ppc_cmd = app.add_subcommand("ppc", "prediction-change robustness metric");
  std::string ppc_model, ppc_data, ppc_transform = "identity", ppc_out, ppc_split = "test";
  std::uint64_t ppc_seed = 0;
  ppc_cmd->add_option("--model", ppc_model)->required();
  ppc_cmd->add_option("--data", ppc_data)->required();
  ppc_cmd->add_option("--transform", ppc_transform, "vn | us | ps | identity")
      ->capture_default_str();
  ppc_cmd->add_option("--seed", ppc_seed)->capture_default_str();
  ppc_cmd->add_option("--out", ppc_out, "report JSON path (default: stdout)");
  ppc_cmd->add_option("--split", ppc_split)->capture_default_str();

  // perturb
  auto* pert_cmd = app.add_subcommand("perturb", "apply one transform to a program");
  std::string pert_in, pert_transform = "vn", pert_out;
  std::uint64_t pert_seed = 0;
  pert_cmd->add_option("--in", pert_in, "mini-C source or AST JSON file")->required();
  pert_cmd->add_option("--transform", pert_transform)->capture_default_str();
  pert_cmd->add_option("--seed", pert_seed)->capture_default_str();
  pert_cmd->add_option("--out", pert_out, "AST JSON output path (default: stdout)");

  // grad-check
  auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference gradient check");
  std::string gc_routing = "vts", gc_task = "classify";
  std::uint64_t gc_seed = 0;
  gc_cmd->add_option("--routing", gc_routing)->capture_default_str();
  gc_cmd->add_option("--task", gc_task)->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    if (gen_classes < 2 || gen_classes > static_cast<int>(tc::kTemplateNames.size())) {
      std::cerr << "error: --classes must be in [2, " << tc::kTemplateNames.size() << "]\n";
      return kExitUsage;
    }
    tc::DatasetManifest manifest = tc::generate(gen_classes, gen_per_class, gen_seed);
    tc::split(manifest, {0.7, 0.2, 0.1}, gen_seed);
    std::filesystem::create_directories(gen_out);
    tc::save_dataset(manifest, gen_out + "/manifest.jsonl");
    std::cout << "wrote " << manifest.records.size() << " records to " << gen_out
              << "/manifest.jsonl\n";
    return kExitOk;
  }

  if (train_cmd->parsed()) {
    std::vector<tc::ProgramRecord> records = load_data(train_data);
    tc::ModelConfig cfg = mf.to_config();
    if (cfg.task == tc::Task::Name && !records.empty() && !records.front().name_subwords) {
      tc::DatasetManifest m;
      m.records = std::move(records);
      records = tc::make_naming_dataset(m).records;
    }
    tc::TrainOptions opt;
    opt.patience = patience;
    opt.threads = threads;
    opt.verbose = verbose;
    opt.metrics_log_path = train_log;
    opt.checkpoint_path = train_out;
    tc::TrainResult result = tc::train(records, cfg, opt);
    std::cout << "best val metric " << result.best_val << " at epoch " << result.best_epoch
              << "; checkpoint: " << train_out << "\n";
    return kExitOk;
  }

  if (eval_cmd->parsed()) {
    tc::Model model = tc::load_checkpoint(eval_model);
    std::vector<tc::ProgramRecord> records = load_data(eval_data);
    if (model.cfg.task == tc::Task::Name && !records.empty() && !records.front().name_subwords) {
      tc::DatasetManifest m;
      m.records = std::move(records);
      records = tc::make_naming_dataset(m).records;
    }
    tc::EvalMetrics metrics = tc::evaluate(model, filter_split(records, eval_split));
    if (eval_out.empty()) std::cout << metrics.to_json() << "\n";
    else write_file(eval_out, metrics.to_json() + "\n");
    return kExitOk;
  }

  if (ppc_cmd->parsed()) {
    tc::Model model = tc::load_checkpoint(ppc_model);
    std::vector<tc::ProgramRecord> records = load_data(ppc_data);
    std::vector<tc::ProgramRecord> subset = filter_split(records, ppc_split);
    std::vector<std::string> pool = tc::identifier_pool(records);
    tc::RobustnessReport report =
        tc::ppc([&](const tc::AstTree& t) { return tc::predict_class(model, t); }, subset,
                tc::transform_kind_from_string(ppc_transform), pool, ppc_seed);
    if (ppc_out.empty()) std::cout << report.to_json() << "\n";
    else write_file(ppc_out, report.to_json() + "\n");
    std::cout << "PPC(" << tc::to_string(report.kind) << ") = " << report.ppc << " over "
              << (report.changed + report.unchanged) << " applied (" << report.inapplicable
              << " inapplicable)\n";
    return kExitOk;
  }

  if (pert_cmd->parsed()) {
    std::ifstream in(pert_in);
    if (!in) {
      std::cerr << "error: no such file: " << pert_in << "\n";
      return kExitData;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    size_t first = text.find_first_not_of(" \t\r\n");
    tc::AstTree tree = (first != std::string::npos && text[first] == '{')
                           ? tc::json_to_ast(text)
                           : tc::parse_source(text);
    tc::ProgramRecord rec;
    rec.ast = tree;
    std::vector<std::string> pool = tc::identifier_pool({rec});
    if (pool.empty()) pool = {"tmp0", "tmp1"};
    tc::TransformResult res =
        tc::apply_transform(tree, tc::transform_kind_from_string(pert_transform), pool, pert_seed);
    std::string json = tc::ast_to_json(res.tree);
    if (pert_out.empty()) std::cout << json << "\n";
    else write_file(pert_out, json + "\n");
    std::cerr << (res.applied ? "applied: " + res.site : std::string("inapplicable")) << "\n";
    return kExitOk;
  }

  if (gc_cmd->parsed()) {
    tc::ModelConfig cfg;
    cfg.routing_kind = tc::routing_kind_from_string(gc_routing);
    cfg.task = tc::task_from_string(gc_task);
    cfg.conv_layers = 2;
    cfg.type_dim = 4;
    cfg.token_dim = 3;
    cfg.n_sc = 3;
    cfg.d_sc = 4;
    cfg.d_cc = 3;
    cfg.routing_iterations = 2;
    cfg.num_classes = 2;
    tc::GradCheckResult res = tc::grad_check(cfg, 1e-5, gc_seed, 600);
    std::cout << "max relative error " << res.max_rel_error << " over " << res.coords_checked
              << " coordinates (worst tensor: " << res.worst_tensor << ")\n";
    return res.max_rel_error <= 1e-4 ? kExitOk : kExitData;
  }

  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const tc::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitData;
  } catch (const tc::SchemaError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const tc::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
